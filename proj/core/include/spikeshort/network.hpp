#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spikeshort/neuron.hpp"
#include "spikeshort/ops.hpp"
#include "spikeshort/tensor.hpp"

namespace spikeshort {

/// How block outputs combine into the training output.
///
///   vanilla       main head only
///   shortcut      main + lambda0 * sum of side heads
///   evolutionary  main + lambda(i) * sum of side heads, lambda decaying to 0
///   uniform_sum   main + 1 * sum of side heads (plain sum over all blocks)
enum class TrainingMode { vanilla, shortcut, evolutionary, uniform_sum };

std::string_view to_string(TrainingMode mode);
TrainingMode parse_training_mode(std::string_view name);
inline bool has_side_heads(TrainingMode mode) { return mode != TrainingMode::vanilla; }

struct BlockSpec {
  std::size_t channels_in = 1;
  std::size_t channels_out = 1;
  std::size_t stages = 1;  // conv -> norm -> LIF stages
  bool residual = false;   // o = lif(f(x) + x), projected when shapes differ
  std::size_t stride = 1;  // stride of the first conv
  std::size_t kernel = 3;

  bool operator==(const BlockSpec&) const = default;
};

struct NetworkSpec {
  std::size_t in_channels = 1;
  std::size_t height = 13;
  std::size_t width = 13;
  std::vector<BlockSpec> blocks;
  std::size_t classes = 10;
  std::size_t timesteps = 4;
  TrainingMode mode = TrainingMode::vanilla;
  NeuronConfig neuron;
  SurrogateSpec surrogate;
  FireMode fire_mode = FireMode::spike;
  bool batch_norm = true;

  std::size_t block_count() const { return blocks.size(); }
  /// Spatial extents after each block.
  std::vector<std::pair<std::size_t, std::size_t>> block_extents() const;
  void validate() const;

  /// 8 plain conv blocks (3x3 conv, norm, LIF), 16 then 32 channels, with
  /// stride-2 downsampling at blocks 4 and 7.
  static NetworkSpec deep8(TrainingMode mode, std::size_t in_channels = 1, std::size_t height = 13,
                           std::size_t width = 13, std::size_t classes = 10, std::size_t timesteps = 4);

  bool operator==(const NetworkSpec&) const = default;
};

/// Block outputs b_l(x) of one forward pass, each [batch, classes]. In
/// vanilla mode only the main output is present.
struct ForwardTrace {
  std::vector<Tensor> b;

  const Tensor& main() const { return b.back(); }
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct NamedBuffer {
  std::string name;
  std::vector<real>* values;
};

struct InferenceCost {
  std::size_t parameters = 0;
  std::size_t macs_per_sample = 0;
};

/// Name prefix of the head after block `l` (1-based); block n's head is the
/// main classifier.
std::string head_prefix(std::size_t l);

class Network {
 public:
  static Network build(const NetworkSpec& spec, std::uint64_t seed);

  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  /// Deep copy with independent storage.
  Network clone() const;

  const NetworkSpec& spec() const { return spec_; }

  void set_norm_mode(NormMode mode) { norm_mode_ = mode; }
  NormMode norm_mode() const { return norm_mode_; }

  /// Runs every block and every present head; records on the active tape.
  ForwardTrace forward_train(const Tensor& x) const;
  ForwardTrace forward_train(const Tensor& x, std::size_t timesteps) const;

  /// Main path only, eval-mode normalization, nothing recorded.
  Tensor forward_infer(const Tensor& x) const;
  Tensor forward_infer(const Tensor& x, std::size_t timesteps) const;

  /// Copy without the side heads; they play no part in inference.
  Network strip_heads() const;
  bool has_side_heads() const;

  std::vector<NamedTensor> named_parameters() const;
  std::vector<NamedBuffer> named_buffers();
  std::size_t parameter_count() const;
  InferenceCost inference_cost() const;

  void zero_grad();

 private:
  struct ConvNorm {
    Tensor weight;
    Tensor gamma;
    Tensor beta;
    mutable BatchNormState stats;
    std::size_t stride = 1;
    std::size_t pad = 0;
  };
  struct Block {
    std::vector<ConvNorm> stages;
    std::optional<ConvNorm> projection;
    bool residual = false;
  };
  struct Head {
    Tensor weight;  // [classes, channels]
    Tensor bias;    // [classes]
  };

  Network() = default;

  Tensor conv_norm(const ConvNorm& layer, const Tensor& x, NormMode mode) const;
  Tensor block_forward(const Block& block, const Tensor& x, std::size_t timesteps, NormMode mode) const;
  Tensor head_forward(const Head& head, const Tensor& spikes, std::size_t timesteps) const;
  ForwardTrace forward_impl(const Tensor& x, std::size_t timesteps, bool side_heads, NormMode mode) const;

  NetworkSpec spec_;
  std::vector<Block> blocks_;
  std::vector<std::optional<Head>> heads_;  // one slot per block
  NormMode norm_mode_ = NormMode::train;
};

/// o_final = b_n + lambda * sum_{l<n} b_l. lambda = 0 returns b_n's values
/// exactly.
Tensor combine_outputs(const ForwardTrace& trace, real lambda);

}  // namespace spikeshort
