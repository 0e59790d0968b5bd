#include "spikeshort/neuron.hpp"

#include <algorithm>
#include <cmath>

#include "spikeshort/errors.hpp"
#include "spikeshort/ops.hpp"
#include "spikeshort/tape.hpp"

namespace spikeshort {

void NeuronConfig::validate() const {
  if (!(tau > 0.0 && tau <= 1.0)) fail(ErrorKind::configuration, "neuron tau must lie in (0, 1], got " + std::to_string(tau));
  if (!(v_th > 0.0)) fail(ErrorKind::configuration, "neuron v_th must be positive, got " + std::to_string(v_th));
}

std::string_view to_string(SurrogateKind kind) {
  switch (kind) {
    case SurrogateKind::triangular: return "triangular";
    case SurrogateKind::rectangular: return "rectangular";
    case SurrogateKind::tanh_like: return "tanh_like";
  }
  return "triangular";
}

SurrogateKind parse_surrogate_kind(std::string_view name) {
  if (name == "triangular") return SurrogateKind::triangular;
  if (name == "rectangular") return SurrogateKind::rectangular;
  if (name == "tanh_like") return SurrogateKind::tanh_like;
  fail(ErrorKind::configuration, "unknown surrogate kind '" + std::string(name) + "'");
}

void SurrogateSpec::validate() const {
  if (kind == SurrogateKind::rectangular && !(a > 0.0)) {
    fail(ErrorKind::configuration, "rectangular surrogate width a must be positive");
  }
}

real surrogate_grad(real u_pre, const NeuronConfig& cfg, const SurrogateSpec& sg) {
  switch (sg.kind) {
    case SurrogateKind::triangular:
      return sg.gamma * std::max(0.0, 1.0 - std::abs(u_pre / cfg.v_th - 1.0));
    case SurrogateKind::rectangular:
      return std::abs(u_pre - cfg.v_th) < sg.a / 2.0 ? 1.0 / sg.a : 0.0;
    case SurrogateKind::tanh_like: {
      const real s = 1.0 - std::tanh(u_pre - cfg.v_th);
      return sg.k * s * s;
    }
  }
  return 0.0;
}

namespace {

// log(cosh(x)) without overflow.
real log_cosh(real x) {
  const real ax = std::abs(x);
  return ax + std::log1p(std::exp(-2.0 * ax)) - std::log(2.0);
}

}  // namespace

real proxy_fire(real u_pre, const NeuronConfig& cfg, const SurrogateSpec& sg) {
  const real v = cfg.v_th;
  switch (sg.kind) {
    case SurrogateKind::triangular: {
      if (u_pre <= 0.0) return 0.0;
      if (u_pre <= v) return sg.gamma * u_pre * u_pre / (2.0 * v);
      if (u_pre < 2.0 * v) {
        const real d = 2.0 * v - u_pre;
        return sg.gamma * (v - d * d / (2.0 * v));
      }
      return sg.gamma * v;
    }
    case SurrogateKind::rectangular:
      return std::clamp(u_pre - (v - sg.a / 2.0), 0.0, sg.a) / sg.a;
    case SurrogateKind::tanh_like: {
      // d/dx [2x - 2 log cosh x - tanh x] = (1 - tanh x)^2
      const real x = u_pre - v;
      return sg.k * (2.0 * x - 2.0 * log_cosh(x) - std::tanh(x));
    }
  }
  return 0.0;
}

Tensor surrogate_grad(const Tensor& u_pre, const NeuronConfig& cfg, const SurrogateSpec& sg) {
  Tensor out = Tensor::zeros(u_pre.shape());
  auto uv = u_pre.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = surrogate_grad(uv[i], cfg, sg);
  return out;
}

MembraneState MembraneState::rest(const Shape& shape) {
  return MembraneState{Tensor::zeros(shape), Tensor::zeros(shape), 0};
}

Tensor lif_charge(const MembraneState& state, const Tensor& c, const NeuronConfig& cfg) {
  const Tensor& u = state.u;
  if (u.shape() != c.shape()) {
    fail(ErrorKind::dimension, "lif_charge: membrane " + shape_string(u.shape()) + " vs current " +
                                   shape_string(c.shape()));
  }
  const real tau = cfg.tau;
  Tensor out = Tensor::zeros(c.shape());
  auto uv = u.values();
  auto cv = c.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = tau * uv[i] + cv[i];
  const bool through_u = !cfg.detach_temporal;
  if (auto* tape = recording_tape({through_u ? &u : nullptr, &c})) {
    tape->record(OpKind::lif_charge, {u, c}, out, [u, c, out, tau, through_u]() mutable {
      auto g = out.grad();
      if (c.requires_grad()) {
        auto gc = c.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gc[i] += g[i];
      }
      if (through_u && u.requires_grad()) {
        auto gu = u.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gu[i] += tau * g[i];
      }
    });
  }
  return out;
}

namespace {

Tensor fire_impl(const Tensor& u_pre, const NeuronConfig& cfg, const SurrogateSpec& sg, FireMode mode) {
  Tensor out = Tensor::zeros(u_pre.shape());
  auto uv = u_pre.values();
  auto ov = out.values();
  if (mode == FireMode::spike) {
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = uv[i] > cfg.v_th ? 1.0 : 0.0;
  } else {
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = proxy_fire(uv[i], cfg, sg);
  }
  if (auto* tape = recording_tape({&u_pre})) {
    const OpKind kind = mode == FireMode::spike ? OpKind::fire : OpKind::proxy_fire;
    tape->record(kind, {u_pre}, out, [u_pre, out, cfg, sg]() mutable {
      auto g = out.grad();
      auto gu = u_pre.grad();
      auto uv = u_pre.values();
      for (std::size_t i = 0; i < g.size(); ++i) gu[i] += g[i] * surrogate_grad(uv[i], cfg, sg);
    });
  }
  return out;
}

}  // namespace

Tensor fire(const Tensor& u_pre, const NeuronConfig& cfg, const SurrogateSpec& sg) {
  return fire_impl(u_pre, cfg, sg, FireMode::spike);
}

Tensor proxy_fire(const Tensor& u_pre, const NeuronConfig& cfg, const SurrogateSpec& sg) {
  return fire_impl(u_pre, cfg, sg, FireMode::proxy);
}

Tensor lif_reset(const Tensor& u_pre, const Tensor& o, const NeuronConfig& cfg) {
  if (u_pre.shape() != o.shape()) {
    fail(ErrorKind::dimension, "lif_reset: membrane " + shape_string(u_pre.shape()) + " vs spikes " +
                                   shape_string(o.shape()));
  }
  Tensor out = Tensor::zeros(u_pre.shape());
  auto uv = u_pre.values();
  auto sv = o.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = uv[i] * (1.0 - sv[i]);
  const bool through_o = cfg.reset_grad;
  if (auto* tape = recording_tape({&u_pre, through_o ? &o : nullptr})) {
    tape->record(OpKind::lif_reset, {u_pre, o}, out, [u_pre, o, out, through_o]() mutable {
      auto g = out.grad();
      if (u_pre.requires_grad()) {
        auto gu = u_pre.grad();
        auto sv = o.values();
        for (std::size_t i = 0; i < g.size(); ++i) gu[i] += g[i] * (1.0 - sv[i]);
      }
      if (through_o && o.requires_grad()) {
        auto go = o.grad();
        auto uv = u_pre.values();
        for (std::size_t i = 0; i < g.size(); ++i) go[i] -= g[i] * uv[i];
      }
    });
  }
  return out;
}

LifTrace lif_unroll_trace(std::span<const Tensor> inputs, const NeuronConfig& cfg, const SurrogateSpec& sg,
                          FireMode mode) {
  if (inputs.empty()) fail(ErrorKind::input, "lif_unroll: empty input sequence");
  cfg.validate();
  const Shape& shape = inputs.front().shape();
  for (const auto& c : inputs) {
    if (c.shape() != shape) {
      fail(ErrorKind::dimension, "lif_unroll: input shapes " + shape_string(shape) + " and " +
                                     shape_string(c.shape()) + " differ");
    }
  }
  LifTrace trace;
  MembraneState state = MembraneState::rest(shape);
  for (const auto& c : inputs) {
    state.u_pre = lif_charge(state, c, cfg);
    Tensor o = fire_impl(state.u_pre, cfg, sg, mode);
    state.u = lif_reset(state.u_pre, o, cfg);
    ++state.t;
    trace.spikes.push_back(o);
    trace.u_pre.push_back(state.u_pre);
    trace.u.push_back(state.u);
  }
  return trace;
}

std::vector<Tensor> lif_unroll(std::span<const Tensor> inputs, const NeuronConfig& cfg, const SurrogateSpec& sg,
                               FireMode mode) {
  return lif_unroll_trace(inputs, cfg, sg, mode).spikes;
}

Tensor lif_layer(const Tensor& currents, std::size_t timesteps, const NeuronConfig& cfg, const SurrogateSpec& sg,
                 FireMode mode) {
  std::vector<Tensor> steps;
  steps.reserve(timesteps);
  for (std::size_t t = 0; t < timesteps; ++t) steps.push_back(time_slice(currents, t, timesteps));
  return time_concat(lif_unroll(steps, cfg, sg, mode));
}

}  // namespace spikeshort
