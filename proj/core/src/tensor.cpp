#include "spikeshort/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "spikeshort/errors.hpp"

namespace spikeshort {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, std::vector<real> values, bool requires_grad)
    : data_(std::make_shared<detail::TensorData>()) {
  for (auto extent : shape) {
    if (extent == 0) fail(ErrorKind::dimension, "zero extent in shape " + shape_string(shape));
  }
  if (shape_numel(shape) != values.size()) {
    fail(ErrorKind::dimension, "shape " + shape_string(shape) + " does not match " +
                                   std::to_string(values.size()) + " values");
  }
  data_->shape = std::move(shape);
  data_->values = std::move(values);
  set_requires_grad(requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<real>(n, value), requires_grad);
}

Tensor Tensor::scalar(real value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

detail::TensorData& Tensor::data() const {
  if (!data_) fail(ErrorKind::state, "use of an undefined tensor");
  return *data_;
}

const Shape& Tensor::shape() const { return data().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    fail(ErrorKind::dimension, "axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return data().values.size(); }

std::span<real> Tensor::values() const { return data().values; }

real Tensor::item() const {
  if (numel() != 1) fail(ErrorKind::input, "item() on tensor of shape " + shape_string(shape()));
  return data().values[0];
}

std::span<real> Tensor::grad() const { return data().grad; }

void Tensor::zero_grad() const { std::fill(data().grad.begin(), data().grad.end(), 0.0); }

bool Tensor::requires_grad() const { return data().requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  auto& d = data();
  d.requires_grad = on;
  if (on) {
    d.grad.assign(d.values.size(), 0.0);
  } else {
    d.grad.clear();
    d.grad.shrink_to_fit();
  }
  return *this;
}

bool Tensor::is_leaf() const { return !data().tape_id.has_value(); }
std::optional<std::size_t> Tensor::tape_id() const { return data().tape_id; }
const Tape* Tensor::tape() const { return data().tape; }

Tensor Tensor::clone() const {
  Tensor out(shape(), data().values, false);
  if (requires_grad()) {
    out.set_requires_grad(true);
    std::copy(data().grad.begin(), data().grad.end(), out.data().grad.begin());
  }
  return out;
}

Tensor Tensor::detach() const { return Tensor(shape(), data().values, false); }

}  // namespace spikeshort
