#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace spikeshort {

using real = double;
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;

namespace detail {
struct TensorData {
  Shape shape;
  std::vector<real> values;
  std::vector<real> grad;
  bool requires_grad = false;
  // Set when the tensor is the output of a recorded op.
  const Tape* tape = nullptr;
  std::optional<std::size_t> tape_id;
};
}  // namespace detail

/// Dense row-major real array with an accumulated gradient.
///
/// Tensor is a handle: copies share storage, the way nodes on the tape refer
/// to their inputs. Use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<real> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real value, bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);

  bool defined() const noexcept { return data_ != nullptr; }

  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  /// Handle semantics: a const Tensor still exposes mutable storage.
  std::span<real> values() const;
  real item() const;

  /// Gradient buffer; empty unless requires_grad.
  std::span<real> grad() const;
  void zero_grad() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);

  /// True for tensors not produced by a recorded op.
  bool is_leaf() const;
  std::optional<std::size_t> tape_id() const;
  const Tape* tape() const;

  Tensor clone() const;
  /// Copy of the values with no gradient and no tape link.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return data_ == other.data_; }

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<detail::TensorData> data) : data_(std::move(data)) {}
  detail::TensorData& data() const;

  std::shared_ptr<detail::TensorData> data_;
};

}  // namespace spikeshort
