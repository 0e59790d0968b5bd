#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "spikeshort/config.hpp"

namespace spikeshort::cli {

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kIoError = 2,
  kNumericAbort = 3,
};

/// Flags shared by train and diagnose; each one overrides the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::size_t> timesteps;
  std::optional<std::string> out;
};

/// Loads a config and applies the overrides; the result is validated.
RunConfig resolve_config(const std::filesystem::path& path, const Overrides& overrides);

/// <out>/<config hash>-s<seed>
std::filesystem::path run_directory(const RunConfig& config);

int cmd_train(const RunConfig& config, std::ostream& out);

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> dataset;  // cache written by train
  std::optional<std::filesystem::path> config;
  std::optional<std::size_t> timesteps;
};
int cmd_eval(const EvalOptions& options, std::ostream& out);

int cmd_diagnose(const RunConfig& config, const std::vector<std::uint64_t>& seeds, std::ostream& out);

struct GradcheckOptions {
  std::string scope = "all";  // op | proxy-net | all
  std::size_t seeds = 20;
  bool mutate_fire = false;
};
int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out);

int cmd_strip(const std::filesystem::path& in, const std::filesystem::path& out_path, std::ostream& out);

/// Parses argv and dispatches. Errors are reported on `err` and mapped to
/// exit codes: validation 1, I/O and format 2, numeric 3.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace spikeshort::cli
