#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "spikeshort/tensor.hpp"

namespace spikeshort {

// Elementwise and reduction ops. Each records on the active tape when any
// input requires grad.

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real factor);
/// Sum of all elements, shape [1].
Tensor sum(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

/// y[i,j] = sum_k x[i,k] w[j,k] + b[j].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Cross-correlation of x [N, Cin, H, W] with k [Cout, Cin, kh, kw].
Tensor conv2d(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad);
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

/// Mean over the spatial axes: [N, C, H, W] -> [N, C].
Tensor global_avg_pool(const Tensor& x);

enum class NormMode { train, eval };

struct BatchNormState {
  std::vector<real> running_mean;
  std::vector<real> running_var;
  real momentum = 0.1;
  real eps = 1e-5;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

/// Per-channel normalization over the merged batch-time axis and the
/// spatial axes of x [B*T, C, H, W] (or [B*T, C]). Train mode normalizes by
/// batch statistics and updates the running statistics; eval mode uses them.
Tensor batch_norm_bt(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                     NormMode mode);

/// Mean over the batch of -log softmax(logits)[label]; shape [1].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);
/// Per-row losses without recording; used for logging.
std::vector<real> cross_entropy_values(const Tensor& logits, std::span<const int> labels);

// Time-major layout helpers. A sequence of T tensors of shape [B, ...] is
// stored as one [T*B, ...] tensor with timestep t at rows [t*B, (t+1)*B).

/// [B, ...] -> [T*B, ...], the same input at every timestep.
Tensor repeat_time(const Tensor& x, std::size_t timesteps);
Tensor time_slice(const Tensor& x, std::size_t t, std::size_t timesteps);
Tensor time_concat(const std::vector<Tensor>& steps);
/// [T*B, ...] -> [B, ...], mean over timesteps.
Tensor time_mean(const Tensor& x, std::size_t timesteps);

}  // namespace spikeshort
