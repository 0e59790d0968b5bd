#include <cmath>

#include "spikeshort/errors.hpp"
#include "spikeshort/ops.hpp"
#include "spikeshort/tape.hpp"

namespace spikeshort {

Tensor batch_norm_bt(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                     NormMode mode) {
  if (x.rank() != 4 && x.rank() != 2) {
    fail(ErrorKind::dimension, "batch_norm_bt: expected rank 2 or 4, got " + shape_string(x.shape()));
  }
  const std::size_t rows = x.dim(0), channels = x.dim(1);
  const std::size_t area = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels}) {
    fail(ErrorKind::dimension, "batch_norm_bt: gamma " + shape_string(gamma.shape()) + " / beta " +
                                   shape_string(beta.shape()) + " vs " + std::to_string(channels) + " channels");
  }
  if (state.running_mean.size() != channels || state.running_var.size() != channels) {
    fail(ErrorKind::state, "batch_norm_bt: running statistics sized for " +
                               std::to_string(state.running_mean.size()) + " channels, input has " +
                               std::to_string(channels));
  }
  if (mode == NormMode::train && rows < 2) {
    fail(ErrorKind::input, "batch_norm_bt: train mode needs batch*T >= 2");
  }

  const std::size_t count = rows * area;
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  std::vector<real> mean(channels), inv_std(channels);
  if (mode == NormMode::train) {
    for (std::size_t c = 0; c < channels; ++c) {
      real acc = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        const real* p = xv.data() + (r * channels + c) * area;
        for (std::size_t i = 0; i < area; ++i) acc += p[i];
      }
      const real mu = acc / static_cast<real>(count);
      real sq = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        const real* p = xv.data() + (r * channels + c) * area;
        for (std::size_t i = 0; i < area; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      const real var = sq / static_cast<real>(count);
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + state.eps);
      const real unbiased = var * static_cast<real>(count) / static_cast<real>(count - 1);
      state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mu;
      state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = state.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + state.eps);
    }
  }

  Tensor out = Tensor::zeros(x.shape());
  auto ov = out.values();
  std::vector<real> xhat(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (r * channels + c) * area;
      for (std::size_t i = 0; i < area; ++i) {
        const real h = (xv[base + i] - mean[c]) * inv_std[c];
        xhat[base + i] = h;
        ov[base + i] = gv[c] * h + bv[c];
      }
    }
  }

  if (auto* tape = recording_tape({&x, &gamma, &beta})) {
    tape->record(OpKind::batch_norm, {x, gamma, beta}, out,
                 [x, gamma, beta, out, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, channels,
                  area, count, mode]() mutable {
                   auto g = out.grad();
                   auto gv = gamma.values();
                   std::vector<real> sum_g(channels, 0.0), sum_gx(channels, 0.0);
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t c = 0; c < channels; ++c) {
                       const std::size_t base = (r * channels + c) * area;
                       for (std::size_t i = 0; i < area; ++i) {
                         sum_g[c] += g[base + i];
                         sum_gx[c] += g[base + i] * xhat[base + i];
                       }
                     }
                   if (gamma.requires_grad()) {
                     auto gg = gamma.grad();
                     for (std::size_t c = 0; c < channels; ++c) gg[c] += sum_gx[c];
                   }
                   if (beta.requires_grad()) {
                     auto gb = beta.grad();
                     for (std::size_t c = 0; c < channels; ++c) gb[c] += sum_g[c];
                   }
                   if (!x.requires_grad()) return;
                   auto gx = x.grad();
                   const real m = static_cast<real>(count);
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t c = 0; c < channels; ++c) {
                       const std::size_t base = (r * channels + c) * area;
                       const real k = gv[c] * inv_std[c];
                       for (std::size_t i = 0; i < area; ++i) {
                         if (mode == NormMode::train) {
                           gx[base + i] += k * (g[base + i] - sum_g[c] / m - xhat[base + i] * sum_gx[c] / m);
                         } else {
                           gx[base + i] += k * g[base + i];
                         }
                       }
                     }
                 });
  }
  return out;
}

}  // namespace spikeshort
