#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

#include "spikeshort/tensor.hpp"

namespace spikeshort {

enum class OpKind {
  add,
  mul,
  scale,
  sum,
  reshape,
  linear,
  conv2d,
  global_avg_pool,
  batch_norm,
  softmax_cross_entropy,
  repeat_time,
  time_slice,
  time_concat,
  time_mean,
  lif_charge,
  fire,
  proxy_fire,
  lif_reset,
  combine_outputs,
};

std::string_view to_string(OpKind kind);

/// Define-by-run reverse-mode tape.
///
/// Nodes are appended in execution order, so reverse insertion order is a
/// reverse topological order of the DAG. A tape is confined to the thread
/// that records on it.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Node {
    OpKind kind;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  Tape() = default;
  ~Tape() { clear(); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers `output` as produced by an op over `inputs`. The output
  /// becomes a non-leaf tensor that requires grad.
  void record(OpKind kind, std::vector<Tensor> inputs, Tensor& output, BackwardFn backward);

  /// Accumulates d(loss)/d(t) into every requires_grad tensor reachable from
  /// the scalar `loss`. Intermediate gradients are reset first, leaf
  /// gradients are accumulated (+=).
  void backward(Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  void clear();

 private:
  std::vector<Node> nodes_;
};

/// The tape ops record on for this thread, or nullptr when recording is off.
Tape* active_tape();

/// RAII activation of a tape on the current thread. Passing nullptr
/// disables recording inside the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape* tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Returns the active tape when recording is on and any input requires grad.
Tape* recording_tape(std::initializer_list<const Tensor*> inputs);
Tape* recording_tape(const std::vector<Tensor>& inputs);

/// Convenience: backward on the tape that produced `loss`.
void backward(Tensor& loss);

}  // namespace spikeshort
