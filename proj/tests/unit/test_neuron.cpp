#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "spikeshort/errors.hpp"
#include "spikeshort/neuron.hpp"
#include "spikeshort/ops.hpp"
#include "spikeshort/tape.hpp"
#include "test_support.hpp"

using namespace spikeshort;
using spikeshort::testing::grad_vector;
using spikeshort::testing::max_relative_error;
using spikeshort::testing::numeric_gradient;
using spikeshort::testing::random_tensor;
using spikeshort::testing::to_vector;

namespace {

Tensor value(real v) { return Tensor(Shape{1}, {v}); }

MembraneState state_with(real u) {
  MembraneState s = MembraneState::rest({1});
  s.u.values()[0] = u;
  return s;
}

SurrogateSpec surrogate(SurrogateKind kind) {
  SurrogateSpec sg;
  sg.kind = kind;
  return sg;
}

const SurrogateKind kAllKinds[] = {SurrogateKind::triangular, SurrogateKind::rectangular, SurrogateKind::tanh_like};

}  // namespace

TEST(NeuronConfig, Defaults) {
  NeuronConfig cfg;
  EXPECT_EQ(cfg.tau, 0.5);
  EXPECT_EQ(cfg.v_th, 1.0);
  EXPECT_TRUE(cfg.reset_grad);
  EXPECT_FALSE(cfg.detach_temporal);
}

TEST(NeuronConfig, RejectsOutOfRange) {
  for (real tau : {0.0, -0.1, 1.01}) {
    NeuronConfig cfg;
    cfg.tau = tau;
    EXPECT_THROW(cfg.validate(), Error) << tau;
  }
  NeuronConfig cfg;
  cfg.tau = 1.0;
  EXPECT_NO_THROW(cfg.validate());
  cfg.v_th = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(SurrogateSpec, ParsesKinds) {
  for (auto kind : kAllKinds) EXPECT_EQ(parse_surrogate_kind(to_string(kind)), kind);
  EXPECT_THROW(parse_surrogate_kind("sigmoid"), Error);
  SurrogateSpec sg;
  sg.kind = SurrogateKind::rectangular;
  sg.a = 0.0;
  EXPECT_THROW(sg.validate(), Error);
}

TEST(LifCharge, Examples) {
  NeuronConfig cfg;
  EXPECT_DOUBLE_EQ(lif_charge(state_with(0.6), value(0.8), cfg).item(), 1.1);
  EXPECT_EQ(lif_charge(state_with(0.0), value(0.0), cfg).item(), 0.0);
  cfg.tau = 1.0;
  EXPECT_DOUBLE_EQ(lif_charge(state_with(0.3), value(0.3), cfg).item(), 0.6);
}

TEST(LifCharge, ShapeMismatchIsDimensionError) {
  MembraneState s = MembraneState::rest({2});
  try {
    lif_charge(s, Tensor::zeros({3}), NeuronConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dimension);
  }
}

TEST(Fire, StrictThreshold) {
  NeuronConfig cfg;
  SurrogateSpec sg;
  EXPECT_EQ(fire(value(1.1), cfg, sg).item(), 1.0);
  EXPECT_EQ(fire(value(1.0), cfg, sg).item(), 0.0);
  EXPECT_EQ(fire(value(-5.0), cfg, sg).item(), 0.0);
}

TEST(Fire, FarBelowThresholdHasNoSurrogate) {
  NeuronConfig cfg;
  EXPECT_EQ(surrogate_grad(-5.0, cfg, surrogate(SurrogateKind::triangular)), 0.0);
  EXPECT_EQ(surrogate_grad(-5.0, cfg, surrogate(SurrogateKind::rectangular)), 0.0);
}

TEST(Fire, BackwardScalesBySurrogate) {
  NeuronConfig cfg;
  for (auto kind : kAllKinds) {
    SurrogateSpec sg = surrogate(kind);
    Tensor u = random_tensor({20}, 1, -1, 3, true);
    Tensor w = random_tensor({20}, 2);
    Tape tape;
    TapeScope scope(&tape);
    Tensor loss = sum(mul(fire(u, cfg, sg), w));
    tape.backward(loss);
    for (std::size_t i = 0; i < 20; ++i)
      EXPECT_DOUBLE_EQ(u.grad()[i], w.values()[i] * surrogate_grad(u.values()[i], cfg, sg));
  }
}

TEST(Fire, SpikesAreBinary) {
  NeuronConfig cfg;
  Tensor u = random_tensor({1000}, 3, -1e6, 1e6);
  u.values()[0] = 1.0;
  u.values()[1] = std::nextafter(1.0, 2.0);
  const Tensor y = fire(u, cfg, SurrogateSpec{});
  for (real o : y.values()) EXPECT_TRUE(o == 0.0 || o == 1.0);
}

TEST(SurrogateGrad, PeakValues) {
  NeuronConfig cfg;
  EXPECT_EQ(surrogate_grad(1.0, cfg, surrogate(SurrogateKind::triangular)), 1.0);
  EXPECT_EQ(surrogate_grad(1.0, cfg, surrogate(SurrogateKind::rectangular)), 1.0);
  EXPECT_EQ(surrogate_grad(1.0, cfg, surrogate(SurrogateKind::tanh_like)), 1.0);
}

TEST(SurrogateGrad, ClosedForms) {
  NeuronConfig cfg;
  cfg.v_th = 1.5;
  SurrogateSpec tri = surrogate(SurrogateKind::triangular);
  tri.gamma = 2.0;
  SurrogateSpec rect = surrogate(SurrogateKind::rectangular);
  rect.a = 0.5;
  SurrogateSpec th = surrogate(SurrogateKind::tanh_like);
  th.k = 3.0;
  for (real u : {-1.0, 0.3, 1.2, 1.5, 1.7, 2.9, 4.0}) {
    EXPECT_DOUBLE_EQ(surrogate_grad(u, cfg, tri), 2.0 * std::max(0.0, 1.0 - std::abs(u / 1.5 - 1.0)));
    EXPECT_EQ(surrogate_grad(u, cfg, rect), std::abs(u - 1.5) < 0.25 ? 2.0 : 0.0);
    EXPECT_DOUBLE_EQ(surrogate_grad(u, cfg, th), 3.0 * std::pow(1.0 - std::tanh(u - 1.5), 2));
  }
}

TEST(SurrogateGrad, SupportAndSign) {
  NeuronConfig cfg;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<real> dist(-4.0, 6.0);
  for (int i = 0; i < 10000; ++i) {
    const real u = dist(rng);
    const real tri = surrogate_grad(u, cfg, surrogate(SurrogateKind::triangular));
    const real rect = surrogate_grad(u, cfg, surrogate(SurrogateKind::rectangular));
    EXPECT_GE(tri, 0.0);
    EXPECT_GE(rect, 0.0);
    if (u <= 0.0 || u >= 2.0) EXPECT_EQ(tri, 0.0);
    if (u <= 0.5 || u >= 1.5) EXPECT_EQ(rect, 0.0);
  }
}

TEST(ProxyFire, TriangularIntegratesTheHat) {
  NeuronConfig cfg;
  SurrogateSpec sg;
  EXPECT_EQ(proxy_fire(0.0, cfg, sg), 0.0);
  EXPECT_DOUBLE_EQ(proxy_fire(1.0, cfg, sg), 0.5);
  EXPECT_DOUBLE_EQ(proxy_fire(2.0, cfg, sg), 1.0);
  EXPECT_DOUBLE_EQ(proxy_fire(10.0, cfg, sg), 1.0);
  EXPECT_EQ(proxy_fire(-10.0, cfg, sg), 0.0);
}

TEST(ProxyFire, DerivativeEqualsSurrogate) {
  NeuronConfig cfg;
  cfg.v_th = 1.3;
  const real h = 1e-6;
  for (auto kind : kAllKinds) {
    SurrogateSpec sg = surrogate(kind);
    sg.gamma = 1.7;
    sg.a = 0.8;
    sg.k = 0.6;
    for (real u : {-0.7, 0.2, 0.9, 1.3, 1.45, 2.0, 3.1}) {
      // Skip the kinks, where the one-sided derivatives differ.
      if (kind == SurrogateKind::rectangular && std::abs(std::abs(u - 1.3) - 0.4) < 1e-3) continue;
      if (kind == SurrogateKind::triangular && u == 1.3) continue;
      const real fd = (proxy_fire(u + h, cfg, sg) - proxy_fire(u - h, cfg, sg)) / (2 * h);
      EXPECT_NEAR(fd, surrogate_grad(u, cfg, sg), 1e-7) << to_string(kind) << " u=" << u;
    }
  }
  EXPECT_EQ(surrogate_grad(1.0, NeuronConfig{}, SurrogateSpec{}), 1.0);
}

TEST(ProxyFire, TensorBackwardIsSurrogate) {
  NeuronConfig cfg;
  for (auto kind : kAllKinds) {
    SurrogateSpec sg = surrogate(kind);
    Tensor u = random_tensor({10}, 5, -1, 3, true);
    Tape tape;
    TapeScope scope(&tape);
    Tensor loss = sum(proxy_fire(u, cfg, sg));
    tape.backward(loss);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_DOUBLE_EQ(u.grad()[i], surrogate_grad(u.values()[i], cfg, sg));
  }
}

TEST(LifReset, Examples) {
  NeuronConfig cfg;
  EXPECT_EQ(lif_reset(value(1.1), value(1.0), cfg).item(), 0.0);
  EXPECT_EQ(lif_reset(value(0.7), value(0.0), cfg).item(), 0.7);
}

TEST(LifReset, GradientThroughSpikeFactor) {
  // d/du [u (1 - o(u))] = (1 - o) - u * sg(u) with reset_grad, (1 - o) without.
  for (bool reset_grad : {true, false}) {
    NeuronConfig cfg;
    cfg.reset_grad = reset_grad;
    SurrogateSpec sg;
    Tensor u(Shape{3}, {0.6, 1.2, 1.9}, true);
    Tape tape;
    TapeScope scope(&tape);
    Tensor loss = sum(lif_reset(u, fire(u, cfg, sg), cfg));
    tape.backward(loss);
    for (std::size_t i = 0; i < 3; ++i) {
      const real x = u.values()[i];
      const real o = x > 1.0 ? 1.0 : 0.0;
      const real expected = (1.0 - o) - (reset_grad ? x * surrogate_grad(x, cfg, sg) : 0.0);
      EXPECT_DOUBLE_EQ(u.grad()[i], expected) << reset_grad;
    }
  }
}

TEST(LifUnroll, HandIteratedTrace) {
  NeuronConfig cfg;
  std::vector<Tensor> inputs(4, value(0.6));
  LifTrace trace = lif_unroll_trace(inputs, cfg, SurrogateSpec{});
  const real expected_pre[] = {0.6, 0.9, 1.05, 0.6};
  const real expected_spike[] = {0, 0, 1, 0};
  for (std::size_t t = 0; t < 4; ++t) {
    EXPECT_NEAR(trace.u_pre[t].item(), expected_pre[t], 1e-15) << t;
    EXPECT_EQ(trace.spikes[t].item(), expected_spike[t]) << t;
  }
}

TEST(LifUnroll, SingleStepIsFire) {
  NeuronConfig cfg;
  Tensor c = random_tensor({50}, 6, -1, 3);
  auto spikes = lif_unroll(std::vector<Tensor>{c}, cfg, SurrogateSpec{});
  EXPECT_EQ(to_vector(spikes[0]), to_vector(fire(c, cfg, SurrogateSpec{})));
}

TEST(LifUnroll, EmptyInputIsInputError) {
  try {
    lif_unroll(std::vector<Tensor>{}, NeuronConfig{}, SurrogateSpec{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::input);
  }
}

TEST(LifUnroll, MismatchedStepsIsError) {
  std::vector<Tensor> inputs{Tensor::zeros({2}), Tensor::zeros({3})};
  EXPECT_THROW(lif_unroll(inputs, NeuronConfig{}, SurrogateSpec{}), Error);
}

TEST(LifUnroll, ResetInvariantHolds) {
  NeuronConfig cfg;
  std::vector<Tensor> inputs;
  for (std::uint64_t t = 0; t < 8; ++t) inputs.push_back(random_tensor({500}, 100 + t, -1, 2));
  LifTrace trace = lif_unroll_trace(inputs, cfg, SurrogateSpec{});
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t i = 0; i < 500; ++i) {
      const real o = trace.spikes[t].values()[i];
      EXPECT_EQ(trace.u[t].values()[i] * o, 0.0);
      EXPECT_EQ(trace.u[t].values()[i], o == 1.0 ? 0.0 : trace.u_pre[t].values()[i]);
    }
}

TEST(LifUnroll, IntegrateAndFireAccumulates) {
  NeuronConfig cfg;
  cfg.tau = 1.0;
  cfg.v_th = 1e9;
  std::vector<Tensor> inputs;
  Tensor total = Tensor::zeros({20});
  for (std::uint64_t t = 0; t < 6; ++t) {
    inputs.push_back(random_tensor({20}, 200 + t, -1, 1));
    total = add(total, inputs.back());
  }
  LifTrace trace = lif_unroll_trace(inputs, cfg, SurrogateSpec{});
  EXPECT_EQ(to_vector(trace.u_pre.back()), to_vector(total));
}

TEST(LifUnroll, ProxyGradientMatchesCentralDifferences) {
  NeuronConfig cfg;
  SurrogateSpec sg;
  std::vector<Tensor> inputs;
  for (std::uint64_t t = 0; t < 4; ++t) inputs.push_back(random_tensor({6}, 300 + t, -0.5, 1.5, true));
  Tensor w = random_tensor({6}, 310);
  auto f = [&] {
    auto spikes = lif_unroll(inputs, cfg, sg, FireMode::proxy);
    Tensor acc = sum(mul(spikes[0], w));
    for (std::size_t t = 1; t < spikes.size(); ++t) acc = add(acc, sum(mul(spikes[t], w)));
    return acc;
  };
  {
    Tape tape;
    TapeScope scope(&tape);
    Tensor loss = f();
    tape.backward(loss);
  }
  for (const auto& x : inputs) {
    const auto oracle = numeric_gradient([&f] { return f().item(); }, x);
    EXPECT_LT(max_relative_error(grad_vector(x), oracle), 1e-4);
  }
}

TEST(LifUnroll, DetachTemporalEqualsIndependentSteps) {
  NeuronConfig cfg;
  cfg.detach_temporal = true;
  cfg.reset_grad = true;
  SurrogateSpec sg;
  std::vector<Tensor> inputs;
  for (std::uint64_t t = 0; t < 4; ++t) inputs.push_back(random_tensor({30}, 400 + t, -0.5, 1.5, true));
  std::vector<Tensor> weights;
  for (std::uint64_t t = 0; t < 4; ++t) weights.push_back(random_tensor({30}, 410 + t));
  LifTrace trace;
  {
    Tape tape;
    TapeScope scope(&tape);
    trace = lif_unroll_trace(inputs, cfg, sg);
    Tensor acc = sum(mul(trace.spikes[0], weights[0]));
    for (std::size_t t = 1; t < 4; ++t) acc = add(acc, sum(mul(trace.spikes[t], weights[t])));
    tape.backward(acc);
  }
  // With the temporal path cut, dL/dc(t) = w(t) * sg(u_pre(t)).
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t i = 0; i < 30; ++i)
      EXPECT_DOUBLE_EQ(inputs[t].grad()[i],
                       weights[t].values()[i] * surrogate_grad(trace.u_pre[t].values()[i], cfg, sg));
}

TEST(LifLayer, MatchesUnrollOnTimeMajorLayout) {
  NeuronConfig cfg;
  Tensor currents = random_tensor({3 * 2, 4}, 500, -1, 2);
  Tensor spikes = lif_layer(currents, 3, cfg, SurrogateSpec{});
  std::vector<Tensor> steps;
  for (std::size_t t = 0; t < 3; ++t) steps.push_back(time_slice(currents, t, 3));
  auto expected = lif_unroll(steps, cfg, SurrogateSpec{});
  for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(to_vector(time_slice(spikes, t, 3)), to_vector(expected[t]));
}
