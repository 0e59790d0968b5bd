#include "spikeshort/optimizer.hpp"

#include <cmath>

#include "spikeshort/errors.hpp"

namespace spikeshort {

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adamw"; }

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adamw") return OptimizerKind::adamw;
  fail(ErrorKind::configuration, "unknown optimizer '" + std::string(name) + "' (expected sgd or adamw)");
}

void Optimizer::step(std::span<const NamedTensor> params, real lr) {
  if (steps_ == 0) {
    for (const auto& p : params) {
      shapes_.push_back(p.tensor.shape());
      m_.emplace_back(p.tensor.numel(), 0.0);
      v_.emplace_back(p.tensor.numel(), 0.0);
    }
  } else {
    if (params.size() != shapes_.size()) {
      fail(ErrorKind::state, "optimizer bound to " + std::to_string(shapes_.size()) + " parameters, got " +
                                 std::to_string(params.size()));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (params[k].tensor.shape() != shapes_[k]) {
        fail(ErrorKind::state, "parameter '" + params[k].name + "' changed shape from " + shape_string(shapes_[k]) +
                                   " to " + shape_string(params[k].tensor.shape()));
      }
    }
  }
  ++steps_;

  const real decay = 1.0 - lr * config_.weight_decay;
  const real bias1 = 1.0 - std::pow(config_.beta1, static_cast<real>(steps_));
  const real bias2 = 1.0 - std::pow(config_.beta2, static_cast<real>(steps_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor t = params[k].tensor;
    auto p = t.values();
    auto g = t.grad();
    if (g.size() != p.size()) fail(ErrorKind::state, "parameter '" + params[k].name + "' has no gradient buffer");
    if (config_.kind == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = p[i] * decay - lr * g[i];
      continue;
    }
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const real m_hat = m[i] / bias1;
      const real v_hat = v[i] / bias2;
      p[i] = p[i] * decay - lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

}  // namespace spikeshort
