#include "spikeshort/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spikeshort/errors.hpp"
#include "spikeshort/tape.hpp"

namespace spikeshort {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::dimension, std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                                   shape_string(b.shape()) + " differ");
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (auto* tape = recording_tape({&a, &b})) {
    tape->record(OpKind::add, {a, b}, out, [a, b, out]() mutable {
      auto g = out.grad();
      for (const Tensor* in : {&a, &b}) {
        if (!in->requires_grad()) continue;
        auto gi = in->grad();
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (auto* tape = recording_tape({&a, &b})) {
    tape->record(OpKind::mul, {a, b}, out, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        auto bv = b.values();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        auto av = a.values();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, real factor) {
  Tensor out = Tensor::zeros(a.shape());
  auto av = a.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * factor;
  if (auto* tape = recording_tape({&a})) {
    tape->record(OpKind::scale, {a}, out, [a, out, factor]() mutable {
      auto g = out.grad();
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  real total = 0.0;
  for (real v : a.values()) total += v;
  Tensor out = Tensor::scalar(total);
  if (auto* tape = recording_tape({&a})) {
    tape->record(OpKind::sum, {a}, out, [a, out]() mutable {
      const real g = out.grad()[0];
      for (real& gi : a.grad()) gi += g;
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    fail(ErrorKind::dimension,
         "reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  auto v = a.values();
  Tensor out(std::move(shape), std::vector<real>(v.begin(), v.end()));
  if (auto* tape = recording_tape({&a})) {
    tape->record(OpKind::reshape, {a}, out, [a, out]() mutable {
      auto g = out.grad();
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || x.dim(1) != w.dim(1) || b.dim(0) != w.dim(0)) {
    fail(ErrorKind::dimension, "linear: x " + shape_string(x.shape()) + " incompatible with w " +
                                   shape_string(w.shape()) + " and b " + shape_string(b.shape()));
  }
  const std::size_t batch = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  Tensor out = Tensor::zeros({batch, out_dim});
  auto xv = x.values();
  auto wv = w.values();
  auto bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t j = 0; j < out_dim; ++j) {
      real acc = 0.0;
      for (std::size_t k = 0; k < in; ++k) acc += xv[i * in + k] * wv[j * in + k];
      ov[i * out_dim + j] = acc + bv[j];
    }
  }
  if (auto* tape = recording_tape({&x, &w, &b})) {
    tape->record(OpKind::linear, {x, w, b}, out, [x, w, b, out, batch, in, out_dim]() mutable {
      auto g = out.grad();
      if (x.requires_grad()) {
        auto gx = x.grad();
        auto wv = w.values();
        for (std::size_t i = 0; i < batch; ++i)
          for (std::size_t j = 0; j < out_dim; ++j) {
            const real gij = g[i * out_dim + j];
            for (std::size_t k = 0; k < in; ++k) gx[i * in + k] += gij * wv[j * in + k];
          }
      }
      if (w.requires_grad()) {
        auto gw = w.grad();
        auto xv = x.values();
        for (std::size_t i = 0; i < batch; ++i)
          for (std::size_t j = 0; j < out_dim; ++j) {
            const real gij = g[i * out_dim + j];
            for (std::size_t k = 0; k < in; ++k) gw[j * in + k] += gij * xv[i * in + k];
          }
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < batch; ++i)
          for (std::size_t j = 0; j < out_dim; ++j) gb[j] += g[i * out_dim + j];
      }
    });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) fail(ErrorKind::dimension, "global_avg_pool: expected rank 4, got " + shape_string(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), area = x.dim(2) * x.dim(3);
  Tensor out = Tensor::zeros({n, c});
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < n * c; ++i) {
    real acc = 0.0;
    for (std::size_t p = 0; p < area; ++p) acc += xv[i * area + p];
    ov[i] = acc / static_cast<real>(area);
  }
  if (auto* tape = recording_tape({&x})) {
    tape->record(OpKind::global_avg_pool, {x}, out, [x, out, n, c, area]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < n * c; ++i) {
        const real share = g[i] / static_cast<real>(area);
        for (std::size_t p = 0; p < area; ++p) gx[i * area + p] += share;
      }
    });
  }
  return out;
}

std::vector<real> cross_entropy_values(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    fail(ErrorKind::dimension, "softmax_cross_entropy: logits " + shape_string(logits.shape()) + " vs " +
                                   std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  auto lv = logits.values();
  std::vector<real> losses(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      fail(ErrorKind::input, "label " + std::to_string(label) + " out of range [0, " +
                                 std::to_string(classes) + ")");
    }
    const real* row = lv.data() + i * classes;
    const real mx = *std::max_element(row, row + classes);
    real z = 0.0;
    for (std::size_t j = 0; j < classes; ++j) z += std::exp(row[j] - mx);
    losses[i] = std::log(z) - (row[label] - mx);
  }
  return losses;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  auto losses = cross_entropy_values(logits, labels);
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  real total = 0.0;
  for (real l : losses) total += l;
  Tensor out = Tensor::scalar(total / static_cast<real>(batch));
  if (auto* tape = recording_tape({&logits})) {
    std::vector<int> saved(labels.begin(), labels.end());
    tape->record(OpKind::softmax_cross_entropy, {logits}, out,
                 [logits, out, saved = std::move(saved), batch, classes]() mutable {
                   const real g = out.grad()[0] / static_cast<real>(batch);
                   auto lv = logits.values();
                   auto gl = logits.grad();
                   for (std::size_t i = 0; i < batch; ++i) {
                     const real* row = lv.data() + i * classes;
                     const real mx = *std::max_element(row, row + classes);
                     real z = 0.0;
                     for (std::size_t j = 0; j < classes; ++j) z += std::exp(row[j] - mx);
                     for (std::size_t j = 0; j < classes; ++j) {
                       real p = std::exp(row[j] - mx) / z;
                       if (static_cast<int>(j) == saved[i]) p -= 1.0;
                       gl[i * classes + j] += g * p;
                     }
                   }
                 });
  }
  return out;
}

namespace {

Shape with_leading(const Shape& shape, std::size_t lead) {
  Shape s = shape;
  s[0] = lead;
  return s;
}

}  // namespace

Tensor repeat_time(const Tensor& x, std::size_t timesteps) {
  if (timesteps == 0) fail(ErrorKind::input, "repeat_time: timesteps must be >= 1");
  const std::size_t block = x.numel();
  Tensor out = Tensor::zeros(with_leading(x.shape(), x.dim(0) * timesteps));
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t t = 0; t < timesteps; ++t) std::copy(xv.begin(), xv.end(), ov.begin() + t * block);
  if (auto* tape = recording_tape({&x})) {
    tape->record(OpKind::repeat_time, {x}, out, [x, out, timesteps, block]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t t = 0; t < timesteps; ++t)
        for (std::size_t i = 0; i < block; ++i) gx[i] += g[t * block + i];
    });
  }
  return out;
}

Tensor time_slice(const Tensor& x, std::size_t t, std::size_t timesteps) {
  if (timesteps == 0 || x.dim(0) % timesteps != 0 || t >= timesteps) {
    fail(ErrorKind::dimension, "time_slice: cannot take step " + std::to_string(t) + " of " +
                                   std::to_string(timesteps) + " from " + shape_string(x.shape()));
  }
  const std::size_t block = x.numel() / timesteps;
  Tensor out = Tensor::zeros(with_leading(x.shape(), x.dim(0) / timesteps));
  auto xv = x.values();
  std::copy(xv.begin() + t * block, xv.begin() + (t + 1) * block, out.values().begin());
  if (auto* tape = recording_tape({&x})) {
    tape->record(OpKind::time_slice, {x}, out, [x, out, t, block]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < block; ++i) gx[t * block + i] += g[i];
    });
  }
  return out;
}

Tensor time_concat(const std::vector<Tensor>& steps) {
  if (steps.empty()) fail(ErrorKind::input, "time_concat: no timesteps");
  const Shape& step_shape = steps.front().shape();
  for (const auto& s : steps) {
    if (s.shape() != step_shape) {
      fail(ErrorKind::dimension, "time_concat: step shapes " + shape_string(step_shape) + " and " +
                                     shape_string(s.shape()) + " differ");
    }
  }
  const std::size_t block = steps.front().numel();
  Tensor out = Tensor::zeros(with_leading(step_shape, step_shape[0] * steps.size()));
  auto ov = out.values();
  for (std::size_t t = 0; t < steps.size(); ++t) {
    auto sv = steps[t].values();
    std::copy(sv.begin(), sv.end(), ov.begin() + t * block);
  }
  if (auto* tape = recording_tape(steps)) {
    tape->record(OpKind::time_concat, steps, out, [steps, out, block]() mutable {
      auto g = out.grad();
      for (std::size_t t = 0; t < steps.size(); ++t) {
        if (!steps[t].requires_grad()) continue;
        auto gs = steps[t].grad();
        for (std::size_t i = 0; i < block; ++i) gs[i] += g[t * block + i];
      }
    });
  }
  return out;
}

Tensor time_mean(const Tensor& x, std::size_t timesteps) {
  if (timesteps == 0 || x.dim(0) % timesteps != 0) {
    fail(ErrorKind::dimension, "time_mean: leading extent of " + shape_string(x.shape()) +
                                   " is not a multiple of " + std::to_string(timesteps));
  }
  const std::size_t block = x.numel() / timesteps;
  Tensor out = Tensor::zeros(with_leading(x.shape(), x.dim(0) / timesteps));
  auto xv = x.values();
  auto ov = out.values();
  const real inv = 1.0 / static_cast<real>(timesteps);
  for (std::size_t t = 0; t < timesteps; ++t)
    for (std::size_t i = 0; i < block; ++i) ov[i] += xv[t * block + i];
  for (auto& v : ov) v *= inv;
  if (auto* tape = recording_tape({&x})) {
    tape->record(OpKind::time_mean, {x}, out, [x, out, timesteps, block, inv]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t t = 0; t < timesteps; ++t)
        for (std::size_t i = 0; i < block; ++i) gx[t * block + i] += g[i] * inv;
    });
  }
  return out;
}

}  // namespace spikeshort
