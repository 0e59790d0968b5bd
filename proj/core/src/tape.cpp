#include "spikeshort/tape.hpp"

#include <algorithm>

#include "spikeshort/errors.hpp"

namespace spikeshort {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::add: return "add";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::sum: return "sum";
    case OpKind::reshape: return "reshape";
    case OpKind::linear: return "linear";
    case OpKind::conv2d: return "conv2d";
    case OpKind::global_avg_pool: return "global_avg_pool";
    case OpKind::batch_norm: return "batch_norm_bt";
    case OpKind::softmax_cross_entropy: return "softmax_cross_entropy";
    case OpKind::repeat_time: return "repeat_time";
    case OpKind::time_slice: return "time_slice";
    case OpKind::time_concat: return "time_concat";
    case OpKind::time_mean: return "time_mean";
    case OpKind::lif_charge: return "lif_charge";
    case OpKind::fire: return "fire";
    case OpKind::proxy_fire: return "proxy_fire";
    case OpKind::lif_reset: return "lif_reset";
    case OpKind::combine_outputs: return "combine_outputs";
  }
  return "op";
}

void Tape::record(OpKind kind, std::vector<Tensor> inputs, Tensor& output, BackwardFn backward) {
  auto& d = output.data();
  if (d.tape_id) fail(ErrorKind::state, "tensor already recorded on a tape");
  output.set_requires_grad(true);
  d.tape = this;
  d.tape_id = nodes_.size();
  nodes_.push_back(Node{kind, std::move(inputs), output, std::move(backward)});
}

void Tape::backward(Tensor& loss) {
  if (loss.numel() != 1) {
    fail(ErrorKind::input, "backward on non-scalar tensor of shape " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) fail(ErrorKind::input, "backward on a tensor that does not require grad");
  if (loss.is_leaf()) {
    loss.grad()[0] += 1.0;
    return;
  }
  if (loss.tape() != this) fail(ErrorKind::state, "backward on a tensor recorded by another tape");

  const std::size_t root = *loss.tape_id();
  std::vector<char> reachable(root + 1, 0);
  reachable[root] = 1;
  for (std::size_t id = root + 1; id-- > 0;) {
    if (!reachable[id]) continue;
    for (const auto& in : nodes_[id].inputs) {
      if (auto parent = in.tape_id(); parent && in.tape() == this) reachable[*parent] = 1;
    }
  }
  for (std::size_t id = 0; id <= root; ++id) {
    if (reachable[id]) nodes_[id].output.zero_grad();
  }
  loss.grad()[0] = 1.0;
  for (std::size_t id = root + 1; id-- > 0;) {
    if (reachable[id] && nodes_[id].backward) nodes_[id].backward();
  }
}

void Tape::clear() {
  for (auto& node : nodes_) {
    node.output.data().tape = nullptr;
    node.output.data().tape_id.reset();
  }
  nodes_.clear();
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape* tape) : previous_(g_active_tape) { g_active_tape = tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* recording_tape(std::initializer_list<const Tensor*> inputs) {
  if (!g_active_tape) return nullptr;
  for (const auto* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return g_active_tape;
  }
  return nullptr;
}

Tape* recording_tape(const std::vector<Tensor>& inputs) {
  if (!g_active_tape) return nullptr;
  for (const auto& t : inputs) {
    if (t.defined() && t.requires_grad()) return g_active_tape;
  }
  return nullptr;
}

void backward(Tensor& loss) {
  auto* tape = const_cast<Tape*>(loss.tape());
  if (!tape) {
    if (loss.requires_grad() && loss.numel() == 1) {
      loss.grad()[0] += 1.0;
      return;
    }
    fail(ErrorKind::input, "backward on a tensor that was not produced on a tape");
  }
  tape->backward(loss);
}

}  // namespace spikeshort
