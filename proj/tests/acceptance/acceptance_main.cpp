// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "spikeshort/checkpoint.hpp"
#include "spikeshort/config.hpp"
#include "spikeshort/errors.hpp"
#include "spikeshort/gradcheck.hpp"
#include "spikeshort/ops.hpp"
#include "spikeshort/schedule.hpp"
#include "spikeshort/tape.hpp"
#include "spikeshort/trainer.hpp"
#include "spikeshort_cli/cli.hpp"
#include "test_support.hpp"

using namespace spikeshort;
using namespace spikeshort::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

fs::path reference_config_path() { return fs::path(SPIKESHORT_SOURCE_DIR) / "configs" / "deep8_evolutionary.json"; }

// 1: every op under 1e-5 with >= 20 seeds; proxy networks under 1e-4; < 5 min.
Outcome gradient_oracle() {
  const auto start = Clock::now();
  const auto ops = run_op_gradchecks(20, 1e-5);
  const auto nets = run_proxy_net_gradchecks(20, 1e-4);
  const double elapsed = seconds_since(start);
  real worst_op = 0.0, worst_net = 0.0;
  std::string failed;
  bool ok = elapsed < 300.0;
  for (const auto& r : ops) {
    worst_op = std::max(worst_op, r.worst_error);
    if (!r.passed() || r.cases < 20) ok = false, failed += " " + r.name;
  }
  bool has_three = false, has_deep8 = false;
  for (const auto& r : nets) {
    worst_net = std::max(worst_net, r.worst_error);
    has_three |= r.name.find("3block") != std::string::npos;
    has_deep8 |= r.name.find("deep8") != std::string::npos;
    if (!r.passed()) ok = false, failed += " " + r.name;
  }
  ok = ok && has_three && has_deep8 && !ops.empty();
  return {ok, fmt("%zu ops worst %.2e (tol 1e-5), proxy nets worst %.2e (tol 1e-4), %.1f s (limit 300)%s", ops.size(),
                  worst_op, worst_net, elapsed, failed.empty() ? "" : (" failed:" + failed).c_str())};
}

NetworkSpec three_block_proxy() {
  NetworkSpec spec;
  spec.in_channels = 2;
  spec.height = spec.width = 5;
  spec.classes = 3;
  spec.timesteps = 3;
  spec.mode = TrainingMode::shortcut;
  spec.fire_mode = FireMode::proxy;
  spec.blocks = {BlockSpec{2, 3, 1, false, 1, 3}, BlockSpec{3, 4, 2, false, 1, 3}, BlockSpec{4, 4, 1, true, 2, 3}};
  return spec;
}

// Softmax cross-entropy gradient w.r.t. logits, computed here from scratch.
std::vector<real> ce_logit_grad(std::span<const real> logits, const std::vector<int>& labels, std::size_t classes) {
  const std::size_t n = labels.size();
  std::vector<real> g(n * classes);
  for (std::size_t i = 0; i < n; ++i) {
    real m = -1e300, z = 0.0;
    for (std::size_t j = 0; j < classes; ++j) m = std::max(m, logits[i * classes + j]);
    for (std::size_t j = 0; j < classes; ++j) z += std::exp(logits[i * classes + j] - m);
    for (std::size_t j = 0; j < classes; ++j)
      g[i * classes + j] =
          (std::exp(logits[i * classes + j] - m) / z - (static_cast<int>(j) == labels[i] ? 1.0 : 0.0)) / n;
  }
  return g;
}

// 2: single backward equals the explicit per-branch sum within 1e-10.
Outcome branch_decomposition() {
  const auto start = Clock::now();
  const real lambda = 0.25;
  real worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Network net = Network::build(three_block_proxy(), seed);
    Tensor x = random_tensor({4, 2, 5, 5}, 100 + seed, 0, 2);
    std::vector<int> labels{0, 1, 2, static_cast<int>(seed % 3)};
    Tensor w1;
    for (const auto& p : net.named_parameters())
      if (p.name == "block1.conv1.weight") w1 = p.tensor;

    std::vector<real> single, dl_do;
    {
      net.zero_grad();
      Tape tape;
      TapeScope scope(&tape);
      Tensor o = combine_outputs(net.forward_train(x), lambda);
      Tensor loss = softmax_cross_entropy(o, labels);
      tape.backward(loss);
      single = grad_vector(w1);
      dl_do = ce_logit_grad(o.values(), labels, 3);
    }
    std::vector<real> summed(single.size(), 0.0);
    for (std::size_t l = 0; l < 3; ++l) {
      net.zero_grad();
      Tape tape;
      TapeScope scope(&tape);
      ForwardTrace trace = net.forward_train(x);
      Tensor g(Shape{4, 3}, dl_do);
      Tensor loss = sum(mul(trace.b[l], scale(g, l == 2 ? 1.0 : lambda)));
      tape.backward(loss);
      for (std::size_t i = 0; i < summed.size(); ++i) summed[i] += w1.grad()[i];
    }
    for (std::size_t i = 0; i < single.size(); ++i) worst = std::max(worst, std::abs(single[i] - summed[i]));
  }
  const double elapsed = seconds_since(start);
  return {worst <= 1e-10 && elapsed < 60.0,
          fmt("10 seeds, max |single - per-branch sum| %.2e (tol 1e-10), %.1f s (limit 60)", worst, elapsed)};
}

// 3: stripped and unstripped trained checkpoints infer bitwise identically.
Outcome branch_removal() {
  RunConfig cfg = load_run_config(reference_config_path());
  cfg.trainer.epochs = 1;
  auto [train, test] = load_datasets(cfg.dataset);
  Network net = Network::build(cfg.network, cfg.seed);
  train_loop(net, train, test, cfg.trainer);

  const Checkpoint full = network_checkpoint(net);
  const Checkpoint stripped = strip_head_records(full);
  const std::size_t full_bytes = encode_checkpoint(full).size();
  const std::size_t stripped_bytes = encode_checkpoint(stripped).size();
  Network a = network_from_checkpoint(decode_checkpoint(encode_checkpoint(full)));
  Network b = network_from_checkpoint(decode_checkpoint(encode_checkpoint(stripped)));

  std::size_t inputs = 0, mismatched = 0;
  for (std::uint64_t batch = 0; batch < 10; ++batch) {
    Tensor x = random_tensor({10, 1, 13, 13}, 500 + batch, -2, 2);
    const Tensor ya = a.forward_infer(x), yb = b.forward_infer(x);
    for (std::size_t i = 0; i < 10; ++i, ++inputs) {
      const real* ra = ya.values().data() + i * 10;
      const real* rb = yb.values().data() + i * 10;
      if (std::memcmp(ra, rb, 10 * sizeof(real)) != 0) ++mismatched;
    }
  }
  const bool ok = mismatched == 0 && inputs >= 100 && stripped_bytes < full_bytes && !b.has_side_heads();
  return {ok, fmt("%zu inputs, %zu mismatches; checkpoint %zu -> %zu bytes", inputs, mismatched, full_bytes,
                  stripped_bytes)};
}

// 4: logged lambda for I=4 is exactly 0.25 (1 - i/4); endpoints of both schedules.
Outcome schedule_exactness() {
  NetworkSpec spec = three_block_proxy();
  spec.fire_mode = FireMode::spike;
  spec.mode = TrainingMode::evolutionary;
  Network net = Network::build(spec, 0);
  TrainerConfig cfg;
  cfg.mode = TrainingMode::evolutionary;
  Trainer trainer(net, cfg, 4);
  Tensor x = random_tensor({4, 2, 5, 5}, 7, 0, 2);
  const std::vector<int> labels{0, 1, 2, 0};
  std::string logged;
  bool ok = true;
  for (int i = 1; i <= 4; ++i) {
    const real lambda = trainer.train_step(x, labels).lambda;
    const real expected = static_cast<real>(4 - i) / 16.0;  // 0.25 (1 - i/4), exact in binary
    ok = ok && lambda == expected;
    logged += (i > 1 ? "," : "") + format_real(lambda);
  }
  const real l0 = lambda_at({0.25, 0, 4, TrainingMode::evolutionary});
  const real lI = lambda_at({0.25, 4, 4, TrainingMode::evolutionary});
  const real lr0 = cosine_lr(0, 4, 0.01), lrI = cosine_lr(4, 4, 0.01);
  ok = ok && l0 == 0.25 && lI == 0.0 && lr0 == 0.01 && lrI == 0.0;
  return {ok, "lambda(1..4) = [" + logged + "], lambda(0) = " + format_real(l0) + ", lambda(I) = " + format_real(lI) +
                  ", lr endpoints " + format_real(lr0) + " / " + format_real(lrI)};
}

// 5: hand trace, reset invariant over 1e6 neuron-steps, strict threshold.
Outcome lif_correctness() {
  NeuronConfig cfg;  // tau 0.5, v_th 1
  const SurrogateSpec sg;
  std::vector<Tensor> constant(4, Tensor(Shape{1}, {0.6}));
  const LifTrace trace = lif_unroll_trace(constant, cfg, sg);
  const real expected_pre[] = {0.6, 0.9, 1.05, 0.6};
  const real expected_spike[] = {0, 0, 1, 0};
  bool trace_ok = true;
  for (std::size_t t = 0; t < 4; ++t) {
    trace_ok = trace_ok && std::abs(trace.u_pre[t].item() - expected_pre[t]) < 1e-12 &&
               trace.spikes[t].item() == expected_spike[t];
  }

  std::size_t steps = 0, violations = 0;
  for (std::uint64_t chunk = 0; chunk < 10; ++chunk) {
    std::vector<Tensor> inputs;
    for (std::size_t t = 0; t < 10; ++t) inputs.push_back(random_tensor({10000}, chunk * 100 + t, -1.0, 2.0));
    const LifTrace r = lif_unroll_trace(inputs, cfg, sg);
    for (std::size_t t = 0; t < 10; ++t)
      for (std::size_t i = 0; i < 10000; ++i, ++steps)
        violations += r.u[t].values()[i] * r.spikes[t].values()[i] != 0.0;
  }

  std::vector<Tensor> tie{Tensor(Shape{3}, {1.0, 1.0, 1.0})};
  const LifTrace t1 = lif_unroll_trace(tie, cfg, sg);
  const Tensor direct = fire(Tensor(Shape{2}, {cfg.v_th, std::nextafter(cfg.v_th, 2.0)}), cfg, sg);
  const bool tie_ok = to_vector(t1.spikes[0]) == std::vector<real>{0, 0, 0} && direct.values()[0] == 0.0 &&
                      direct.values()[1] == 1.0;

  return {trace_ok && violations == 0 && steps >= 1000000 && tie_ok,
          fmt("hand trace %s, %zu neuron-steps with %zu reset violations, tie at v_th %s", trace_ok ? "ok" : "WRONG",
              steps, violations, tie_ok ? "silent" : "FIRES")};
}

// 6: shortcut improves first/last ratio and first-layer near-zero fraction in >= 4 of 5 seeds.
Outcome gradient_vanishing(const fs::path& scratch) {
  RunConfig cfg = load_run_config(reference_config_path());
  cfg.out_dir = (scratch / "diagnose").string();
  const auto start = Clock::now();
  std::ostringstream out;
  if (cli::cmd_diagnose(cfg, {0, 1, 2, 3, 4}, out) != 0) return {false, "diagnose failed"};
  const double elapsed = seconds_since(start);
  const auto line = nlohmann::json::parse(out.str());
  const auto summary = nlohmann::json::parse(read_text(fs::path(line["dir"].get<std::string>()) / "summary.json"));
  const int ratio_wins = summary["ratio_wins"].get<int>();
  const int nz_wins = summary["near_zero_wins"].get<int>();
  std::string per_seed;
  for (const auto& s : summary["per_seed"]) {
    per_seed += fmt(" [s%d ratio %.3g vs %.3g, near-zero %.4f vs %.4f]", s["seed"].get<int>(),
                    s["ratio_shortcut"].get<double>(), s["ratio_vanilla"].get<double>(),
                    s["near_zero_shortcut"].get<double>(), s["near_zero_vanilla"].get<double>());
  }
  return {ratio_wins >= 4 && nz_wins >= 4 && elapsed < 300.0,
          fmt("ratio wins %d/5, near-zero wins %d/5 (need 4 each), %.1f s (limit 300);", ratio_wins, nz_wins,
              elapsed) +
              per_seed};
}

// Nearest-prototype accuracy on the test split: the Bayes-style ceiling of
// the synthetic task, reported for context.
real prototype_ceiling(const RunConfig& cfg) {
  const auto protos = synthetic_prototypes(cfg.dataset.synthetic);
  const Dataset test = make_synthetic(cfg.dataset.synthetic).second;
  const std::size_t pixels = protos[0].numel();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    std::size_t best = 0;
    real best_d = 1e300;
    for (std::size_t c = 0; c < protos.size(); ++c) {
      real d = 0.0;
      for (std::size_t p = 0; p < pixels; ++p) {
        const real diff = test.images.values()[i * pixels + p] - protos[c].values()[p];
        d += diff * diff;
      }
      if (d < best_d) best_d = d, best = c;
    }
    correct += static_cast<int>(best) == test.labels[i];
  }
  return static_cast<real>(correct) / static_cast<real>(test.size());
}

// 7: mean final accuracy ordering over 3 seeds, evolutionary - vanilla >= 1 point.
Outcome accuracy_ordering() {
  const RunConfig base = load_run_config(reference_config_path());
  auto [train, test] = load_datasets(base.dataset);
  const auto start = Clock::now();
  const TrainingMode modes[] = {TrainingMode::vanilla, TrainingMode::shortcut, TrainingMode::evolutionary};
  real mean[3] = {0, 0, 0};
  std::string runs;
  for (int m = 0; m < 3; ++m) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      RunConfig cfg = base;
      cfg.mode = modes[m];
      cfg.seed = seed;
      cfg.sync();
      Network net = Network::build(cfg.network, seed);
      const TrainResult r = train_loop(net, train, test, cfg.trainer);
      mean[m] += r.final_accuracy / 3.0;
      runs += fmt(" %s/s%llu=%.4f", std::string(to_string(modes[m])).c_str(),
                  static_cast<unsigned long long>(seed), r.final_accuracy);
      std::fflush(stdout);
    }
  }
  const double elapsed = seconds_since(start);
  const real delta = 100.0 * (mean[2] - mean[0]);
  const bool ok = mean[2] >= mean[1] && mean[1] >= mean[0] && delta >= 1.0 && elapsed < 3600.0;
  return {ok, fmt("mean final acc vanilla %.4f, shortcut %.4f, evolutionary %.4f; evolutionary - vanilla %+.2f pts "
                  "(need >= +1.00); prototype ceiling %.4f; %.0f s (limit 3600);",
                  mean[0], mean[1], mean[2], delta, prototype_ceiling(base), elapsed) +
                  runs};
}

// 8: train and diagnose reruns reproduce their outputs byte for byte.
Outcome determinism(const fs::path& scratch) {
  RunConfig cfg = load_run_config(reference_config_path());
  cfg.trainer.epochs = 2;
  std::string csv[2], report[2];
  for (int k = 0; k < 2; ++k) {
    cfg.out_dir = (scratch / ("rerun" + std::to_string(k))).string();
    std::ostringstream out;
    if (cli::cmd_train(cfg, out) != 0) return {false, "train failed"};
    csv[k] = read_text(cli::run_directory(cfg) / "metrics.csv");
    std::ostringstream diag;
    if (cli::cmd_diagnose(cfg, {7}, diag) != 0) return {false, "diagnose failed"};
    const fs::path dir = nlohmann::json::parse(diag.str())["dir"].get<std::string>();
    report[k] = read_text(dir / "seed7_vanilla.json") + read_text(dir / "seed7_shortcut.json");
  }
  const bool ok = !csv[0].empty() && csv[0] == csv[1] && report[0] == report[1];
  return {ok, fmt("metrics.csv %zu bytes %s, diagnose reports %s", csv[0].size(),
                  csv[0] == csv[1] ? "identical" : "DIFFER", report[0] == report[1] ? "identical" : "DIFFER")};
}

// 9: IDX fixture round trip and malformed-file error paths.
Outcome idx_ingestion(const fs::path& scratch) {
  const std::vector<std::uint8_t> pixels{0, 17, 128, 255, 3, 90, 200, 64, 1, 2, 254, 33};
  const std::vector<std::uint8_t> labels{4, 9, 0};
  const fs::path img = scratch / "img.idx", lab = scratch / "lab.idx";
  write_bytes(img, idx_images_bytes(3, 2, 2, pixels));
  write_bytes(lab, idx_labels_bytes(labels));
  const Dataset d = load_idx(img, lab);
  std::vector<std::uint8_t> back;
  for (real v : d.images.values()) back.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
  const bool round_trip = back == pixels && d.labels == std::vector<int>{4, 9, 0} && d.images.shape() == Shape{3, 1, 2, 2};

  auto kind_of = [](const std::function<void()>& f) -> std::optional<ErrorKind> {
    try {
      f();
    } catch (const Error& e) {
      return e.kind();
    }
    return std::nullopt;
  };
  auto describe = [](std::optional<ErrorKind> k) { return k ? std::string(to_string(*k)) : std::string("no error"); };
  auto bad = idx_images_bytes(3, 2, 2, pixels);
  bad[2] = 0x09;
  write_bytes(scratch / "bad_magic.idx", bad);
  const auto magic = kind_of([&] { load_idx(scratch / "bad_magic.idx", lab); });
  auto cut = idx_images_bytes(3, 2, 2, pixels);
  cut.resize(cut.size() - 5);
  write_bytes(scratch / "cut.idx", cut);
  const auto truncated = kind_of([&] { load_idx(scratch / "cut.idx", lab); });
  const bool ok = round_trip && magic == ErrorKind::format && truncated == ErrorKind::format;
  return {ok, "byte round trip " + std::string(round_trip ? "exact" : "WRONG") + ", bad magic -> " + describe(magic) +
                  ", truncation -> " + describe(truncated)};
}

}  // namespace

int main() {
  TempDir scratch("spikeshort-acceptance");
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient oracle suite", gradient_oracle},
      {2, "branch gradient decomposition", branch_decomposition},
      {3, "branch-removal invariance", branch_removal},
      {4, "schedule exactness", schedule_exactness},
      {5, "LIF correctness", lif_correctness},
      {6, "gradient vanishing direction", [&] { return gradient_vanishing(scratch.path()); }},
      {7, "desk-scale accuracy ordering", accuracy_ordering},
      {8, "determinism", [&] { return determinism(scratch.path()); }},
      {9, "IDX ingestion", [&] { return idx_ingestion(scratch.path()); }},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
