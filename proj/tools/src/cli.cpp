#include <sstream>

#include "CLI11.hpp"
#include "spikeshort/errors.hpp"
#include "spikeshort_cli/cli.hpp"

namespace spikeshort::cli {

namespace {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io:
    case ErrorKind::format:
      return kIoError;
    case ErrorKind::numeric:
      return kNumericAbort;
    default:
      return kCheckFailed;
  }
}

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "Seed, overrides the config");
  cmd->add_option("--mode", o.mode, "vanilla | shortcut | evolutionary | uniform-sum");
  cmd->add_option("--timesteps", o.timesteps, "Timesteps T, overrides the config")->check(CLI::PositiveNumber);
  cmd->add_option("--out", o.out, "Output directory, overrides the config");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spiking network training with shortcut back-propagation", "spikeshort"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;

  auto* train = app.add_subcommand("train", "Train a network from a config file");
  train->add_option("--config", config_path, "Run config (JSON)")->required();
  add_overrides(train, overrides);

  EvalOptions eval_opts;
  std::string eval_config, eval_dataset;
  auto* eval = app.add_subcommand("eval", "Accuracy of a checkpoint, printed as one JSON line");
  eval->add_option("--checkpoint", eval_opts.checkpoint, "Checkpoint file")->required();
  eval->add_option("--dataset", eval_dataset, "Dataset cache (test_data.ckpt of a run)");
  eval->add_option("--config", eval_config, "Run config providing the dataset and expected topology");
  eval->add_option("--timesteps", eval_opts.timesteps, "Inference timesteps")->check(CLI::PositiveNumber);

  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  auto* diagnose = app.add_subcommand("diagnose", "Per-layer gradient reports, vanilla against shortcut");
  diagnose->add_option("--config", config_path, "Run config (JSON)")->required();
  diagnose->add_option("--seeds", seeds, "Seeds to compare")->delimiter(',');
  add_overrides(diagnose, overrides);

  GradcheckOptions gc;
  std::string mutate;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks of every op and proxy network");
  gradcheck->add_option("--scope", gc.scope, "op | proxy-net | all")->check(CLI::IsMember({"op", "proxy-net", "all"}));
  gradcheck->add_option("--seeds", gc.seeds, "Random cases per op")->check(CLI::PositiveNumber);
  gradcheck->add_option("--mutate", mutate, "Inject a known defect (negative control)")->check(CLI::IsMember({"fire"}));

  std::string strip_in, strip_out;
  auto* strip = app.add_subcommand("strip", "Remove side heads from a checkpoint");
  strip->add_option("--checkpoint", strip_in, "Input checkpoint")->required();
  strip->add_option("--output", strip_out, "Output checkpoint")->required();

  std::ostringstream cli_out, cli_err;
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, cli_out, cli_err);
    out << cli_out.str();
    err << cli_err.str();
    return code == 0 ? kOk : kCheckFailed;
  }

  try {
    if (*train) return cmd_train(resolve_config(config_path, overrides), out);
    if (*eval) {
      if (!eval_config.empty()) eval_opts.config = eval_config;
      if (!eval_dataset.empty()) eval_opts.dataset = eval_dataset;
      return cmd_eval(eval_opts, out);
    }
    if (*diagnose) return cmd_diagnose(resolve_config(config_path, overrides), seeds, out);
    if (*gradcheck) {
      gc.mutate_fire = mutate == "fire";
      return cmd_gradcheck(gc, out);
    }
    if (*strip) return cmd_strip(strip_in, strip_out, out);
  } catch (const Error& e) {
    err << "spikeshort: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "spikeshort: " << e.what() << '\n';
    return kIoError;
  }
  return kCheckFailed;
}

}  // namespace spikeshort::cli
