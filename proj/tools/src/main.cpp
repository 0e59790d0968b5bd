#include <iostream>

#include "spikeshort_cli/cli.hpp"

int main(int argc, char** argv) { return spikeshort::cli::run_cli(argc, argv, std::cout, std::cerr); }
