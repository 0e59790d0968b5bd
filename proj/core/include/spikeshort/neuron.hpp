#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spikeshort/tensor.hpp"

namespace spikeshort {

struct NeuronConfig {
  real tau = 0.5;            // leak factor, in (0, 1]; 1 gives an IF neuron
  real v_th = 1.0;           // firing threshold
  bool reset_grad = true;    // differentiate the spike factor of the reset product
  bool detach_temporal = false;  // cut the u(t) -> u_pre(t+1) path in backward

  void validate() const;
  bool operator==(const NeuronConfig&) const = default;
};

enum class SurrogateKind { triangular, rectangular, tanh_like };

std::string_view to_string(SurrogateKind kind);
SurrogateKind parse_surrogate_kind(std::string_view name);

/// Backward stand-in for the spike step. Only the parameter matching `kind`
/// is consulted: gamma for triangular, a for rectangular, k for tanh_like.
struct SurrogateSpec {
  SurrogateKind kind = SurrogateKind::triangular;
  real gamma = 1.0;
  real a = 1.0;
  real k = 1.0;

  void validate() const;
  bool operator==(const SurrogateSpec&) const = default;
};

/// Forward behaviour of the fire step. `proxy` replaces the Heaviside step by
/// the surrogate's antiderivative, which makes the network an ordinary
/// differentiable function whose true derivative equals the surrogate.
enum class FireMode { spike, proxy };

real surrogate_grad(real u_pre, const NeuronConfig& cfg, const SurrogateSpec& sg);
/// Antiderivative of surrogate_grad. Triangular and rectangular are anchored
/// at 0 far below threshold; tanh_like is anchored at 0 at the threshold.
real proxy_fire(real u_pre, const NeuronConfig& cfg, const SurrogateSpec& sg);

Tensor surrogate_grad(const Tensor& u_pre, const NeuronConfig& cfg, const SurrogateSpec& sg);

struct MembraneState {
  Tensor u_pre;
  Tensor u;
  std::size_t t = 0;

  /// Resting state: u = 0 at t = 0.
  static MembraneState rest(const Shape& shape);
};

/// u_pre(t+1) = tau * u(t) + c(t+1).
Tensor lif_charge(const MembraneState& state, const Tensor& c, const NeuronConfig& cfg);
/// Spikes where u_pre > v_th (strict); backward scales by surrogate_grad.
Tensor fire(const Tensor& u_pre, const NeuronConfig& cfg, const SurrogateSpec& sg);
Tensor proxy_fire(const Tensor& u_pre, const NeuronConfig& cfg, const SurrogateSpec& sg);
/// u(t+1) = u_pre(t+1) * (1 - o(t+1)).
Tensor lif_reset(const Tensor& u_pre, const Tensor& o, const NeuronConfig& cfg);

struct LifTrace {
  std::vector<Tensor> spikes;
  std::vector<Tensor> u_pre;
  std::vector<Tensor> u;
};

/// charge -> fire -> reset over every input current in order, starting from
/// rest.
LifTrace lif_unroll_trace(std::span<const Tensor> inputs, const NeuronConfig& cfg, const SurrogateSpec& sg,
                          FireMode mode = FireMode::spike);
std::vector<Tensor> lif_unroll(std::span<const Tensor> inputs, const NeuronConfig& cfg, const SurrogateSpec& sg,
                               FireMode mode = FireMode::spike);

/// LIF layer over a time-major [T*B, ...] tensor.
Tensor lif_layer(const Tensor& currents, std::size_t timesteps, const NeuronConfig& cfg, const SurrogateSpec& sg,
                 FireMode mode = FireMode::spike);

}  // namespace spikeshort
