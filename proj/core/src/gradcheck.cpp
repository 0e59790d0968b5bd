#include "spikeshort/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "spikeshort/errors.hpp"
#include "spikeshort/network.hpp"
#include "spikeshort/neuron.hpp"
#include "spikeshort/ops.hpp"
#include "spikeshort/tape.hpp"

namespace spikeshort {

namespace {

real finite_value(const Tensor& y) {
  const real v = y.item();
  if (!std::isfinite(v)) fail(ErrorKind::numeric, "fd_check: function value is not finite");
  return v;
}

// `taped` supplies the analytic gradient, `plain` the central differences.
// They differ only for ops whose backward is defined as the derivative of a
// different forward (fire vs. its proxy).
real fd_check_split(const ScalarFn& taped, const ScalarFn& plain, std::vector<Tensor> wrt, const FdOptions& options) {
  for (auto& t : wrt) {
    if (!t.requires_grad()) t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(&tape);
    Tensor y = taped();
    finite_value(y);
    // An output independent of every input has zero analytic gradient.
    if (y.requires_grad()) tape.backward(y);
  }
  std::vector<std::vector<real>> analytic;
  for (const auto& t : wrt) analytic.emplace_back(t.grad().begin(), t.grad().end());

  TapeScope no_record(nullptr);
  const real h = options.step;
  real worst = 0.0;
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    auto values = wrt[ti].values();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords && coords.size() > *options.max_coords) {
      std::mt19937_64 rng(options.seed * 1000003u + ti);
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(*options.max_coords);
    }
    for (std::size_t i : coords) {
      const real original = values[i];
      values[i] = original + h;
      const real plus = finite_value(plain());
      values[i] = original - h;
      const real minus = finite_value(plain());
      values[i] = original;
      const real numeric = (plus - minus) / (2.0 * h);
      const real err = std::abs(analytic[ti][i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// ---- randomized op checks -------------------------------------------------

Tensor random_tensor(Shape shape, std::mt19937_64& rng, real lo = -1.0, real hi = 1.0) {
  std::uniform_real_distribution<real> dist(lo, hi);
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Projects an op output onto fixed random weights so every output
// coordinate contributes to the scalar.
Tensor weighted_sum(const Tensor& y, const Tensor& weights) { return sum(mul(y, weights)); }

struct OpCase {
  ScalarFn taped;
  ScalarFn plain;
  std::vector<Tensor> wrt;
};

using CaseFactory = std::function<OpCase(std::mt19937_64&)>;

OpCase same(ScalarFn f, std::vector<Tensor> wrt) { return OpCase{f, f, std::move(wrt)}; }

std::vector<std::pair<std::string, CaseFactory>> op_factories(const GradcheckMutation& mutation) {
  std::vector<std::pair<std::string, CaseFactory>> out;

  out.emplace_back("add", [](std::mt19937_64& rng) {
    Shape s{pick(rng, 1, 4), pick(rng, 1, 5)};
    auto a = random_tensor(s, rng), b = random_tensor(s, rng), w = random_tensor(s, rng).detach();
    return same([=] { return weighted_sum(add(a, b), w); }, {a, b});
  });
  out.emplace_back("mul", [](std::mt19937_64& rng) {
    Shape s{pick(rng, 1, 4), pick(rng, 1, 5)};
    auto a = random_tensor(s, rng), b = random_tensor(s, rng), w = random_tensor(s, rng).detach();
    return same([=] { return weighted_sum(mul(a, b), w); }, {a, b});
  });
  out.emplace_back("scale", [](std::mt19937_64& rng) {
    Shape s{pick(rng, 1, 6)};
    auto a = random_tensor(s, rng), w = random_tensor(s, rng).detach();
    const real f = std::uniform_real_distribution<real>(-2.0, 2.0)(rng);
    return same([=] { return weighted_sum(scale(a, f), w); }, {a});
  });
  out.emplace_back("sum", [](std::mt19937_64& rng) {
    auto a = random_tensor({pick(rng, 1, 3), pick(rng, 1, 4)}, rng);
    return same([=] { return scale(sum(a), 1.7); }, {a});
  });
  out.emplace_back("reshape", [](std::mt19937_64& rng) {
    const std::size_t r = pick(rng, 1, 3), c = pick(rng, 1, 4);
    auto a = random_tensor({r, c}, rng), w = random_tensor({c, r}, rng).detach();
    return same([=] { return weighted_sum(reshape(a, {c, r}), w); }, {a});
  });
  out.emplace_back("linear", [](std::mt19937_64& rng) {
    const std::size_t batch = pick(rng, 1, 4), in = pick(rng, 1, 5), o = pick(rng, 1, 4);
    auto x = random_tensor({batch, in}, rng), w = random_tensor({o, in}, rng), b = random_tensor({o}, rng);
    auto proj = random_tensor({batch, o}, rng).detach();
    return same([=] { return weighted_sum(linear(x, w, b), proj); }, {x, w, b});
  });
  out.emplace_back("conv2d", [](std::mt19937_64& rng) {
    const std::size_t n = pick(rng, 1, 2), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
    const std::size_t kernel = pick(rng, 0, 1) ? 3 : 1;
    const std::size_t stride = pick(rng, 1, 2), pad = kernel == 3 ? pick(rng, 0, 1) : 0;
    std::size_t h = pick(rng, 3, 6);
    // Pick an extent that divides evenly for the chosen stride.
    while ((h + 2 * pad - kernel) % stride != 0) ++h;
    auto x = random_tensor({n, cin, h, h}, rng), k = random_tensor({cout, cin, kernel, kernel}, rng);
    const std::size_t ho = conv_output_extent(h, kernel, stride, pad);
    auto proj = random_tensor({n, cout, ho, ho}, rng).detach();
    return same([=] { return weighted_sum(conv2d(x, k, stride, pad), proj); }, {x, k});
  });
  out.emplace_back("global_avg_pool", [](std::mt19937_64& rng) {
    const std::size_t n = pick(rng, 1, 3), c = pick(rng, 1, 3);
    auto x = random_tensor({n, c, pick(rng, 1, 4), pick(rng, 1, 4)}, rng);
    auto proj = random_tensor({n, c}, rng).detach();
    return same([=] { return weighted_sum(global_avg_pool(x), proj); }, {x});
  });
  out.emplace_back("batch_norm_bt", [](std::mt19937_64& rng) {
    const std::size_t rows = pick(rng, 2, 4), c = pick(rng, 1, 3), hw = pick(rng, 1, 3);
    auto x = random_tensor({rows, c, hw, hw}, rng, -2.0, 2.0);
    auto gamma = random_tensor({c}, rng, 0.5, 1.5), beta = random_tensor({c}, rng);
    auto proj = random_tensor({rows, c, hw, hw}, rng).detach();
    auto state = std::make_shared<BatchNormState>(c);
    return same([=] { return weighted_sum(batch_norm_bt(x, gamma, beta, *state, NormMode::train), proj); },
                {x, gamma, beta});
  });
  out.emplace_back("batch_norm_bt_eval", [](std::mt19937_64& rng) {
    const std::size_t rows = pick(rng, 1, 3), c = pick(rng, 1, 3);
    auto x = random_tensor({rows, c, 2, 2}, rng, -2.0, 2.0);
    auto gamma = random_tensor({c}, rng, 0.5, 1.5), beta = random_tensor({c}, rng);
    auto proj = random_tensor({rows, c, 2, 2}, rng).detach();
    auto state = std::make_shared<BatchNormState>(c);
    for (std::size_t i = 0; i < c; ++i) {
      state->running_mean[i] = std::uniform_real_distribution<real>(-0.5, 0.5)(rng);
      state->running_var[i] = std::uniform_real_distribution<real>(0.5, 2.0)(rng);
    }
    return same([=] { return weighted_sum(batch_norm_bt(x, gamma, beta, *state, NormMode::eval), proj); },
                {x, gamma, beta});
  });
  out.emplace_back("softmax_cross_entropy", [](std::mt19937_64& rng) {
    const std::size_t batch = pick(rng, 1, 4), classes = pick(rng, 2, 6);
    auto logits = random_tensor({batch, classes}, rng, -3.0, 3.0);
    std::vector<int> labels(batch);
    for (auto& l : labels) l = static_cast<int>(pick(rng, 0, classes - 1));
    return same([=] { return softmax_cross_entropy(logits, labels); }, {logits});
  });
  out.emplace_back("repeat_time", [](std::mt19937_64& rng) {
    const std::size_t b = pick(rng, 1, 3), c = pick(rng, 1, 3), t = pick(rng, 1, 4);
    auto x = random_tensor({b, c}, rng), proj = random_tensor({b * t, c}, rng).detach();
    return same([=] { return weighted_sum(repeat_time(x, t), proj); }, {x});
  });
  out.emplace_back("time_slice", [](std::mt19937_64& rng) {
    const std::size_t b = pick(rng, 1, 3), c = pick(rng, 1, 3), t = pick(rng, 1, 4);
    const std::size_t step = pick(rng, 0, t - 1);
    auto x = random_tensor({b * t, c}, rng), proj = random_tensor({b, c}, rng).detach();
    return same([=] { return weighted_sum(time_slice(x, step, t), proj); }, {x});
  });
  out.emplace_back("time_concat", [](std::mt19937_64& rng) {
    const std::size_t b = pick(rng, 1, 3), c = pick(rng, 1, 3), t = pick(rng, 1, 4);
    std::vector<Tensor> steps;
    for (std::size_t i = 0; i < t; ++i) steps.push_back(random_tensor({b, c}, rng));
    auto proj = random_tensor({b * t, c}, rng).detach();
    return same([=] { return weighted_sum(time_concat(steps), proj); }, steps);
  });
  out.emplace_back("time_mean", [](std::mt19937_64& rng) {
    const std::size_t b = pick(rng, 1, 3), c = pick(rng, 1, 3), t = pick(rng, 1, 4);
    auto x = random_tensor({b * t, c}, rng), proj = random_tensor({b, c}, rng).detach();
    return same([=] { return weighted_sum(time_mean(x, t), proj); }, {x});
  });
  out.emplace_back("lif_charge", [](std::mt19937_64& rng) {
    Shape s{pick(rng, 1, 3), pick(rng, 1, 4)};
    NeuronConfig cfg;
    cfg.tau = std::uniform_real_distribution<real>(0.1, 1.0)(rng);
    auto u = random_tensor(s, rng), c = random_tensor(s, rng), proj = random_tensor(s, rng).detach();
    return same(
        [=] {
          MembraneState st{Tensor(), u, 1};
          return weighted_sum(lif_charge(st, c, cfg), proj);
        },
        {u, c});
  });
  for (auto kind : {SurrogateKind::triangular, SurrogateKind::rectangular, SurrogateKind::tanh_like}) {
    const std::string suffix = "[" + std::string(to_string(kind)) + "]";
    out.emplace_back("fire" + suffix, [kind, mutation](std::mt19937_64& rng) {
      Shape s{pick(rng, 1, 3), pick(rng, 1, 5)};
      NeuronConfig cfg;
      SurrogateSpec sg{kind, 1.0, 1.0, 1.0};
      SurrogateSpec under_test = sg;
      under_test.gamma *= mutation.fire_surrogate_scale;
      under_test.k *= mutation.fire_surrogate_scale;
      under_test.a /= mutation.fire_surrogate_scale;
      auto u = random_tensor(s, rng, -0.5, 2.5), proj = random_tensor(s, rng).detach();
      return OpCase{[=] { return weighted_sum(fire(u, cfg, under_test), proj); },
                    [=] { return weighted_sum(proxy_fire(u, cfg, sg), proj); },
                    {u}};
    });
    out.emplace_back("proxy_fire" + suffix, [kind](std::mt19937_64& rng) {
      Shape s{pick(rng, 1, 3), pick(rng, 1, 5)};
      NeuronConfig cfg;
      cfg.v_th = std::uniform_real_distribution<real>(0.5, 1.5)(rng);
      SurrogateSpec sg{kind, std::uniform_real_distribution<real>(0.5, 2.0)(rng),
                       std::uniform_real_distribution<real>(0.5, 2.0)(rng),
                       std::uniform_real_distribution<real>(0.5, 2.0)(rng)};
      auto u = random_tensor(s, rng, -0.5, 2.5), proj = random_tensor(s, rng).detach();
      return same([=] { return weighted_sum(proxy_fire(u, cfg, sg), proj); }, {u});
    });
  }
  out.emplace_back("lif_reset", [](std::mt19937_64& rng) {
    Shape s{pick(rng, 1, 3), pick(rng, 1, 4)};
    NeuronConfig cfg;
    auto u = random_tensor(s, rng), o = random_tensor(s, rng, 0.0, 1.0), proj = random_tensor(s, rng).detach();
    return same([=] { return weighted_sum(lif_reset(u, o, cfg), proj); }, {u, o});
  });
  out.emplace_back("lif_unroll[proxy]", [](std::mt19937_64& rng) {
    Shape s{pick(rng, 1, 3), pick(rng, 1, 4)};
    const std::size_t t = pick(rng, 1, 5);
    NeuronConfig cfg;
    cfg.tau = std::uniform_real_distribution<real>(0.2, 1.0)(rng);
    SurrogateSpec sg;
    std::vector<Tensor> inputs;
    std::vector<Tensor> projs;
    for (std::size_t i = 0; i < t; ++i) {
      inputs.push_back(random_tensor(s, rng, -0.5, 1.5));
      projs.push_back(random_tensor(s, rng).detach());
    }
    return same(
        [=] {
          auto spikes = lif_unroll(inputs, cfg, sg, FireMode::proxy);
          Tensor total = weighted_sum(spikes[0], projs[0]);
          for (std::size_t i = 1; i < spikes.size(); ++i) total = add(total, weighted_sum(spikes[i], projs[i]));
          return total;
        },
        inputs);
  });
  out.emplace_back("combine_outputs", [](std::mt19937_64& rng) {
    const std::size_t n = pick(rng, 1, 4), batch = pick(rng, 1, 3), classes = pick(rng, 2, 4);
    ForwardTrace trace;
    for (std::size_t i = 0; i < n; ++i) trace.b.push_back(random_tensor({batch, classes}, rng));
    const real lambda = std::uniform_real_distribution<real>(0.0, 1.0)(rng);
    auto proj = random_tensor({batch, classes}, rng).detach();
    return same([=] { return weighted_sum(combine_outputs(trace, lambda), proj); }, trace.b);
  });
  return out;
}

// ---- proxy networks ---------------------------------------------------------

NetworkSpec proxy_three_block_spec() {
  NetworkSpec spec;
  spec.in_channels = 2;
  spec.height = 5;
  spec.width = 5;
  spec.classes = 3;
  spec.timesteps = 3;
  spec.mode = TrainingMode::evolutionary;
  spec.fire_mode = FireMode::proxy;
  spec.blocks = {BlockSpec{2, 3, 1, false, 1, 3}, BlockSpec{3, 4, 2, true, 2, 3}, BlockSpec{4, 4, 1, true, 1, 3}};
  return spec;
}

NetworkSpec proxy_deep8_spec() {
  NetworkSpec spec = NetworkSpec::deep8(TrainingMode::evolutionary, 1, 9, 9, 4, 2);
  spec.fire_mode = FireMode::proxy;
  return spec;
}

GradcheckResult run_proxy_net(const std::string& name, const NetworkSpec& spec, std::size_t seeds, real tolerance,
                              std::optional<std::size_t> max_coords) {
  GradcheckResult result{name, 0.0, 0, tolerance, 0};
  for (std::size_t seed = 0; seed < seeds; ++seed) {
    Network net = Network::build(spec, 1000 + seed);
    std::mt19937_64 rng(seed);
    const std::size_t batch = 2;
    Tensor x = random_tensor({batch, spec.in_channels, spec.height, spec.width}, rng, 0.0, 1.0).detach();
    std::vector<int> labels(batch);
    for (auto& l : labels) l = static_cast<int>(pick(rng, 0, spec.classes - 1));
    const real lambda = 0.25 * std::uniform_real_distribution<real>(0.0, 1.0)(rng);
    ScalarFn f = [&net, x, labels, lambda] {
      return softmax_cross_entropy(combine_outputs(net.forward_train(x), lambda), labels);
    };
    std::vector<Tensor> params;
    for (auto& p : net.named_parameters()) params.push_back(p.tensor);
    FdOptions options;
    options.max_coords = max_coords;
    options.seed = seed;
    const real err = fd_check(f, params, options);
    ++result.cases;
    if (err >= result.worst_error) {
      result.worst_error = err;
      result.worst_seed = seed;
    }
  }
  return result;
}

}  // namespace

real fd_check(const ScalarFn& f, std::vector<Tensor> wrt, const FdOptions& options) {
  return fd_check_split(f, f, std::move(wrt), options);
}

real fd_check(const ScalarFn& f, Tensor x, real step) {
  FdOptions options;
  options.step = step;
  return fd_check(f, std::vector<Tensor>{std::move(x)}, options);
}

std::vector<GradcheckResult> run_op_gradchecks(std::size_t seeds, real tolerance, const GradcheckMutation& mutation) {
  std::vector<GradcheckResult> results;
  for (const auto& [name, factory] : op_factories(mutation)) {
    GradcheckResult r{name, 0.0, 0, tolerance, 0};
    for (std::size_t seed = 0; seed < seeds; ++seed) {
      std::mt19937_64 rng(seed * 7919u + 17u);
      OpCase c = factory(rng);
      const real err = fd_check_split(c.taped, c.plain, c.wrt, FdOptions{});
      ++r.cases;
      if (err >= r.worst_error) {
        r.worst_error = err;
        r.worst_seed = seed;
      }
    }
    results.push_back(r);
  }
  return results;
}

std::vector<GradcheckResult> run_proxy_net_gradchecks(std::size_t seeds, real tolerance) {
  std::vector<GradcheckResult> results;
  results.push_back(run_proxy_net("proxy-3block", proxy_three_block_spec(), seeds, tolerance, std::nullopt));
  results.push_back(run_proxy_net("proxy-deep8", proxy_deep8_spec(), std::max<std::size_t>(1, seeds / 4), tolerance,
                                  std::size_t{6}));
  return results;
}

}  // namespace spikeshort
