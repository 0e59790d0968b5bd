#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "spikeshort/checkpoint.hpp"
#include "spikeshort/diagnostics.hpp"
#include "spikeshort/errors.hpp"
#include "spikeshort/gradcheck.hpp"
#include "spikeshort_cli/cli.hpp"

namespace spikeshort::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
}

// Creates a fresh directory; an existing one means the same config and seed
// already ran there.
void create_fresh_directory(const fs::path& dir) {
  std::error_code ec;
  if (fs::exists(dir, ec)) fail(ErrorKind::io, "run directory '" + dir.string() + "' already exists");
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create '" + dir.string() + "': " + ec.message());
}

std::size_t thread_cap() {
  std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SPIKESHORT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) fail(ErrorKind::configuration, "SPIKESHORT_THREADS must be a positive integer");
    cap = static_cast<std::size_t>(v);
  }
  return cap;
}

}  // namespace

RunConfig resolve_config(const fs::path& path, const Overrides& overrides) {
  RunConfig cfg = load_run_config(path);
  if (overrides.seed) cfg.seed = *overrides.seed;
  if (overrides.mode) cfg.mode = parse_training_mode(*overrides.mode);
  if (overrides.timesteps) cfg.network.timesteps = *overrides.timesteps;
  if (overrides.out) cfg.out_dir = *overrides.out;
  cfg.sync();
  cfg.validate();
  return cfg;
}

fs::path run_directory(const RunConfig& config) {
  return fs::path(config.out_dir) / (run_config_hash(config) + "-s" + std::to_string(config.seed));
}

int cmd_train(const RunConfig& config, std::ostream& out) {
  const fs::path dir = run_directory(config);
  auto [train, test] = load_datasets(config.dataset);
  create_fresh_directory(dir);
  write_text(dir / "config.json", dump_run_config(config));
  save_dataset(test, dir / "test_data.ckpt");

  Network net = Network::build(config.network, config.seed);
  const auto start = std::chrono::steady_clock::now();
  const TrainResult result = train_loop(net, train, test, config.trainer, dir);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  ordered_json summary;
  summary["mode"] = std::string(to_string(config.mode));
  summary["seed"] = config.seed;
  summary["iterations"] = result.metrics.size();
  summary["best_accuracy"] = result.best_accuracy;
  summary["best_epoch"] = result.best_epoch;
  summary["final_accuracy"] = result.final_accuracy;
  summary["final_lambda"] = result.final_lambda;
  summary["wall_time_s"] = wall;
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  ordered_json line = summary;
  line["run_dir"] = dir.string();
  out << line.dump() << '\n';
  return kOk;
}

int cmd_eval(const EvalOptions& options, std::ostream& out) {
  const Checkpoint checkpoint = load_checkpoint(options.checkpoint);
  std::optional<Network> net;
  Dataset test;
  if (options.config) {
    const RunConfig cfg = load_run_config(*options.config);
    NetworkSpec spec = cfg.network;
    // A stripped checkpoint carries only the main head.
    if (spec.blocks.size() > 1 && !checkpoint.find(head_prefix(1) + ".weight")) spec.mode = TrainingMode::vanilla;
    net.emplace(network_from_checkpoint(checkpoint, spec));
    test = options.dataset ? load_dataset(*options.dataset) : load_datasets(cfg.dataset).second;
  } else {
    if (!options.dataset) fail(ErrorKind::configuration, "eval needs --dataset or --config");
    net.emplace(network_from_checkpoint(checkpoint));
    test = load_dataset(*options.dataset);
  }
  const std::size_t timesteps = options.timesteps.value_or(net->spec().timesteps);
  const real accuracy = evaluate(*net, test, 256, timesteps);

  ordered_json line;
  line["accuracy"] = accuracy;
  line["samples"] = test.size();
  line["timesteps"] = timesteps;
  out << line.dump() << '\n';
  return kOk;
}

int cmd_diagnose(const RunConfig& config, const std::vector<std::uint64_t>& seeds, std::ostream& out) {
  if (seeds.empty()) fail(ErrorKind::configuration, "diagnose needs at least one seed");
  std::string tag = "diagnose-" + run_config_hash(config) + "-s";
  for (std::size_t i = 0; i < seeds.size(); ++i) tag += (i ? "_" : "") + std::to_string(seeds[i]);
  const fs::path dir = fs::path(config.out_dir) / tag;

  const auto [train, test] = load_datasets(config.dataset);
  create_fresh_directory(dir);

  struct Pair {
    VanishingReport vanilla, shortcut;
  };
  std::vector<Pair> pairs(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());

  auto job = [&](std::size_t i) {
    const std::uint64_t seed = seeds[i];
    const Batch batch = batches(train, config.trainer.batch, seed)[0];
    auto run = [&](TrainingMode mode, real lambda) {
      NetworkSpec spec = config.network;
      spec.mode = mode;
      Network net = Network::build(spec, seed);
      const PassContext ctx = gradient_pass(net, batch.images, batch.labels, lambda);
      VanishingReport report = capture_gradients(net, ctx, std::string(to_string(mode)), seed);
      export_report(report, dir / ("seed" + std::to_string(seed) + "_" + report.mode + ".json"), ReportFormat::json);
      return report;
    };
    pairs[i].vanilla = run(TrainingMode::vanilla, 0.0);
    pairs[i].shortcut = run(TrainingMode::shortcut, config.trainer.lambda0);
  };

  const std::size_t workers = std::min(thread_cap(), seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ordered_json per_seed = ordered_json::array();
  std::size_t ratio_wins = 0, near_zero_wins = 0;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto& v = pairs[i].vanilla;
    const auto& s = pairs[i].shortcut;
    const real nz_v = v.layer(v.first_layer)->near_zero_frac;
    const real nz_s = s.layer(s.first_layer)->near_zero_frac;
    const bool ratio_win = s.ratio_first_last > v.ratio_first_last;
    const bool nz_win = nz_s < nz_v;
    ratio_wins += ratio_win;
    near_zero_wins += nz_win;
    per_seed.push_back(ordered_json{{"seed", seeds[i]},
                                    {"ratio_vanilla", v.ratio_first_last},
                                    {"ratio_shortcut", s.ratio_first_last},
                                    {"near_zero_vanilla", nz_v},
                                    {"near_zero_shortcut", nz_s},
                                    {"ratio_win", ratio_win},
                                    {"near_zero_win", nz_win}});
  }
  ordered_json summary;
  summary["seeds"] = seeds.size();
  summary["first_layer"] = pairs[0].vanilla.first_layer;
  summary["last_layer"] = pairs[0].vanilla.last_layer;
  summary["ratio_wins"] = ratio_wins;
  summary["near_zero_wins"] = near_zero_wins;
  summary["per_seed"] = per_seed;
  summary["config"] = ordered_json::parse(dump_run_config(config));
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  out << ordered_json{{"dir", dir.string()}, {"ratio_wins", ratio_wins}, {"near_zero_wins", near_zero_wins},
                      {"seeds", seeds.size()}}.dump()
      << '\n';
  return kOk;
}

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out) {
  if (options.scope != "op" && options.scope != "proxy-net" && options.scope != "all") {
    fail(ErrorKind::configuration, "gradcheck scope must be op, proxy-net or all");
  }
  std::vector<GradcheckResult> results;
  if (options.scope != "proxy-net") {
    GradcheckMutation mutation;
    if (options.mutate_fire) mutation.fire_surrogate_scale = 1.5;
    results = run_op_gradchecks(options.seeds, 1e-5, mutation);
  }
  if (options.scope != "op") {
    auto net = run_proxy_net_gradchecks(options.seeds);
    results.insert(results.end(), net.begin(), net.end());
  }
  bool ok = true;
  for (const auto& r : results) {
    char line[256];
    std::snprintf(line, sizeof(line), "%-28s worst_rel_err=%.3e tol=%.0e seed=%llu cases=%zu %s", r.name.c_str(),
                  r.worst_error, r.tolerance, static_cast<unsigned long long>(r.worst_seed), r.cases,
                  r.passed() ? "ok" : "FAIL");
    out << line << '\n';
    ok = ok && r.passed();
  }
  for (const auto& r : results) {
    if (!r.passed()) out << "failed: " << r.name << " (seed " << r.worst_seed << ")\n";
  }
  return ok ? kOk : kCheckFailed;
}

int cmd_strip(const fs::path& in, const fs::path& out_path, std::ostream& out) {
  const Checkpoint stripped = strip_head_records(load_checkpoint(in));
  save_checkpoint(stripped, out_path);
  out << ordered_json{{"input_bytes", fs::file_size(in)}, {"output_bytes", fs::file_size(out_path)}}.dump() << '\n';
  return kOk;
}

}  // namespace spikeshort::cli
