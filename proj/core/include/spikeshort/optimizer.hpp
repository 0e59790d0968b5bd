#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "spikeshort/network.hpp"

namespace spikeshort {

enum class OptimizerKind { sgd, adamw };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adamw;
  real weight_decay = 0.0;
  real beta1 = 0.9;
  real beta2 = 0.999;
  real eps = 1e-8;
};

/// AdamW with decoupled weight decay, or plain SGD with the same decay.
/// Moment state is bound to the parameter set of the first step.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  /// p <- p * (1 - lr * wd), then the SGD or bias-corrected Adam update.
  void step(std::span<const NamedTensor> params, real lr);

  std::int64_t steps() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::int64_t steps_ = 0;
  std::vector<Shape> shapes_;
  std::vector<std::vector<real>> m_;
  std::vector<std::vector<real>> v_;
};

}  // namespace spikeshort
