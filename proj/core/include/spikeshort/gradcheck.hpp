#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spikeshort/tensor.hpp"

namespace spikeshort {

/// Scalar-valued function of tensors it closes over. It must build its
/// result through ops so it can be differentiated when a tape is active.
using ScalarFn = std::function<Tensor()>;

struct FdOptions {
  real step = 1e-5;
  /// Check at most this many coordinates per tensor (sampled with `seed`);
  /// unset checks every coordinate.
  std::optional<std::size_t> max_coords;
  std::uint64_t seed = 0;
};

/// Largest |analytic - central difference| / max(1, |central difference|)
/// over the checked coordinates of every tensor in `wrt`.
///
/// The analytic gradient comes from one taped evaluation and backward; the
/// central differences from untaped evaluations with each coordinate nudged
/// by +-step. Throws a numeric error when f is not finite.
real fd_check(const ScalarFn& f, std::vector<Tensor> wrt, const FdOptions& options = {});
real fd_check(const ScalarFn& f, Tensor x, real step = 1e-5);

/// Worst error of one named check over several seeds.
struct GradcheckResult {
  std::string name;
  real worst_error = 0.0;
  std::uint64_t worst_seed = 0;
  real tolerance = 0.0;
  std::size_t cases = 0;

  bool passed() const { return worst_error < tolerance; }
};

/// Deliberate defects used as negative controls for the check suite.
struct GradcheckMutation {
  /// Multiplies the surrogate height of the fire op under test while the
  /// oracle keeps the true formula.
  real fire_surrogate_scale = 1.0;
};

/// Every differentiable op on randomized shapes, one result per op.
std::vector<GradcheckResult> run_op_gradchecks(std::size_t seeds, real tolerance = 1e-5,
                                               const GradcheckMutation& mutation = {});

/// End-to-end checks of proxy-mode networks ("proxy-3block", "proxy-deep8").
std::vector<GradcheckResult> run_proxy_net_gradchecks(std::size_t seeds, real tolerance = 1e-4);

}  // namespace spikeshort
