#include "spikeshort/network.hpp"

#include <cmath>
#include <random>

#include "spikeshort/errors.hpp"
#include "spikeshort/tape.hpp"

namespace spikeshort {

std::string_view to_string(TrainingMode mode) {
  switch (mode) {
    case TrainingMode::vanilla: return "vanilla";
    case TrainingMode::shortcut: return "shortcut";
    case TrainingMode::evolutionary: return "evolutionary";
    case TrainingMode::uniform_sum: return "uniform-sum";
  }
  return "vanilla";
}

TrainingMode parse_training_mode(std::string_view name) {
  if (name == "vanilla") return TrainingMode::vanilla;
  if (name == "shortcut") return TrainingMode::shortcut;
  if (name == "evolutionary") return TrainingMode::evolutionary;
  if (name == "uniform-sum") return TrainingMode::uniform_sum;
  fail(ErrorKind::configuration, "unknown mode '" + std::string(name) +
                                     "' (expected vanilla, shortcut, evolutionary or uniform-sum)");
}

std::string head_prefix(std::size_t l) { return "head.l" + std::to_string(l); }

std::vector<std::pair<std::size_t, std::size_t>> NetworkSpec::block_extents() const {
  std::vector<std::pair<std::size_t, std::size_t>> extents;
  std::size_t h = height, w = width;
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const auto& b = blocks[l];
    try {
      for (std::size_t s = 0; s < b.stages; ++s) {
        const std::size_t stride = s == 0 ? b.stride : 1;
        h = conv_output_extent(h, b.kernel, stride, b.kernel / 2);
        w = conv_output_extent(w, b.kernel, stride, b.kernel / 2);
      }
    } catch (const Error& e) {
      fail(ErrorKind::configuration, "block " + std::to_string(l + 1) + ": " + e.message());
    }
    extents.emplace_back(h, w);
  }
  return extents;
}

void NetworkSpec::validate() const {
  if (blocks.empty()) fail(ErrorKind::configuration, "network needs at least one block");
  if (classes < 2) fail(ErrorKind::configuration, "network needs at least 2 classes");
  if (timesteps < 1) fail(ErrorKind::configuration, "timesteps must be >= 1");
  if (in_channels < 1 || height < 1 || width < 1) fail(ErrorKind::configuration, "input extents must be >= 1");
  neuron.validate();
  surrogate.validate();
  std::size_t channels = in_channels;
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const auto& b = blocks[l];
    const std::string where = "block " + std::to_string(l + 1);
    if (b.channels_in != channels) {
      fail(ErrorKind::configuration, where + ": channels_in " + std::to_string(b.channels_in) +
                                         " does not match the incoming " + std::to_string(channels) + " channels");
    }
    if (b.channels_out < 1 || b.stages < 1 || b.stride < 1) {
      fail(ErrorKind::configuration, where + ": channels_out, stages and stride must be >= 1");
    }
    if (b.kernel % 2 == 0) fail(ErrorKind::configuration, where + ": kernel must be odd");
    channels = b.channels_out;
  }
  block_extents();
}

NetworkSpec NetworkSpec::deep8(TrainingMode mode, std::size_t in_channels, std::size_t height, std::size_t width,
                               std::size_t classes, std::size_t timesteps) {
  NetworkSpec spec;
  spec.in_channels = in_channels;
  spec.height = height;
  spec.width = width;
  spec.classes = classes;
  spec.timesteps = timesteps;
  spec.mode = mode;
  const std::size_t out_channels[8] = {16, 16, 16, 32, 32, 32, 32, 32};
  const std::size_t strides[8] = {1, 1, 1, 2, 1, 1, 2, 1};
  std::size_t cin = in_channels;
  for (std::size_t l = 0; l < 8; ++l) {
    spec.blocks.push_back(BlockSpec{cin, out_channels[l], 1, false, strides[l], 3});
    cin = out_channels[l];
  }
  return spec;
}

namespace {

Tensor uniform_tensor(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const real bound = std::sqrt(1.0 / static_cast<real>(fan_in));
  std::uniform_real_distribution<real> dist(-bound, bound);
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace

Network Network::build(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Network net;
  net.spec_ = spec;

  // Main path and heads draw from separate streams so that the main-path
  // weights do not depend on which heads exist.
  std::seed_seq main_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x6d61696eu};
  std::mt19937_64 rng(main_seq);

  auto make_conv_norm = [&](std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t stride) {
    ConvNorm layer;
    layer.weight = uniform_tensor({cout, cin, kernel, kernel}, cin * kernel * kernel, rng);
    layer.gamma = Tensor::full({cout}, 1.0, true);
    layer.beta = Tensor::zeros({cout}, true);
    layer.stats = BatchNormState(cout);
    layer.stride = stride;
    layer.pad = kernel / 2;
    return layer;
  };

  for (const auto& b : spec.blocks) {
    Block block;
    block.residual = b.residual;
    for (std::size_t s = 0; s < b.stages; ++s) {
      block.stages.push_back(make_conv_norm(s == 0 ? b.channels_in : b.channels_out, b.channels_out, b.kernel,
                                            s == 0 ? b.stride : 1));
    }
    if (b.residual && (b.channels_in != b.channels_out || b.stride != 1)) {
      block.projection = make_conv_norm(b.channels_in, b.channels_out, 1, b.stride);
    }
    net.blocks_.push_back(std::move(block));
  }

  const std::size_t n = spec.blocks.size();
  net.heads_.resize(n);
  for (std::size_t l = 1; l <= n; ++l) {
    if (l < n && !spikeshort::has_side_heads(spec.mode)) continue;
    std::seed_seq head_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x68656164u,
                           static_cast<std::uint32_t>(l)};
    std::mt19937_64 head_rng(head_seq);
    const std::size_t channels = spec.blocks[l - 1].channels_out;
    Head head;
    head.weight = uniform_tensor({spec.classes, channels}, channels, head_rng);
    head.bias = uniform_tensor({spec.classes}, channels, head_rng);
    net.heads_[l - 1] = std::move(head);
  }
  return net;
}

Network Network::clone() const {
  Network copy;
  copy.spec_ = spec_;
  copy.norm_mode_ = norm_mode_;
  auto clone_layer = [](const ConvNorm& layer) {
    ConvNorm c = layer;
    c.weight = layer.weight.clone();
    c.gamma = layer.gamma.clone();
    c.beta = layer.beta.clone();
    return c;
  };
  for (const auto& b : blocks_) {
    Block nb;
    nb.residual = b.residual;
    for (const auto& s : b.stages) nb.stages.push_back(clone_layer(s));
    if (b.projection) nb.projection = clone_layer(*b.projection);
    copy.blocks_.push_back(std::move(nb));
  }
  for (const auto& h : heads_) {
    if (h) {
      copy.heads_.push_back(Head{h->weight.clone(), h->bias.clone()});
    } else {
      copy.heads_.emplace_back();
    }
  }
  return copy;
}

Tensor Network::conv_norm(const ConvNorm& layer, const Tensor& x, NormMode mode) const {
  Tensor z = conv2d(x, layer.weight, layer.stride, layer.pad);
  if (!spec_.batch_norm) return z;
  return batch_norm_bt(z, layer.gamma, layer.beta, layer.stats, mode);
}

Tensor Network::block_forward(const Block& block, const Tensor& x, std::size_t timesteps, NormMode mode) const {
  Tensor h = x;
  Tensor z;
  for (std::size_t s = 0; s < block.stages.size(); ++s) {
    z = conv_norm(block.stages[s], h, mode);
    if (s + 1 < block.stages.size()) h = lif_layer(z, timesteps, spec_.neuron, spec_.surrogate, spec_.fire_mode);
  }
  if (block.residual) z = add(z, block.projection ? conv_norm(*block.projection, x, mode) : x);
  return lif_layer(z, timesteps, spec_.neuron, spec_.surrogate, spec_.fire_mode);
}

Tensor Network::head_forward(const Head& head, const Tensor& spikes, std::size_t timesteps) const {
  Tensor pooled = time_mean(global_avg_pool(spikes), timesteps);
  return linear(pooled, head.weight, head.bias);
}

ForwardTrace Network::forward_impl(const Tensor& x, std::size_t timesteps, bool side_heads, NormMode mode) const {
  if (x.rank() != 4 || x.dim(1) != spec_.in_channels || x.dim(2) != spec_.height || x.dim(3) != spec_.width) {
    fail(ErrorKind::dimension, "network input " + shape_string(x.shape()) + " does not match [batch, " +
                                   std::to_string(spec_.in_channels) + ", " + std::to_string(spec_.height) +
                                   ", " + std::to_string(spec_.width) + "]");
  }
  if (timesteps < 1) fail(ErrorKind::configuration, "timesteps must be >= 1");
  ForwardTrace trace;
  Tensor current = repeat_time(x, timesteps);
  const std::size_t n = blocks_.size();
  for (std::size_t l = 0; l < n; ++l) {
    current = block_forward(blocks_[l], current, timesteps, mode);
    const bool is_main = l + 1 == n;
    if (heads_[l] && (is_main || side_heads)) trace.b.push_back(head_forward(*heads_[l], current, timesteps));
  }
  return trace;
}

ForwardTrace Network::forward_train(const Tensor& x) const { return forward_train(x, spec_.timesteps); }

ForwardTrace Network::forward_train(const Tensor& x, std::size_t timesteps) const {
  return forward_impl(x, timesteps, true, norm_mode_);
}

Tensor Network::forward_infer(const Tensor& x) const { return forward_infer(x, spec_.timesteps); }

Tensor Network::forward_infer(const Tensor& x, std::size_t timesteps) const {
  TapeScope no_record(nullptr);
  return forward_impl(x, timesteps, false, NormMode::eval).main();
}

Network Network::strip_heads() const {
  Network copy = clone();
  for (std::size_t l = 0; l + 1 < copy.heads_.size(); ++l) copy.heads_[l].reset();
  return copy;
}

bool Network::has_side_heads() const {
  for (std::size_t l = 0; l + 1 < heads_.size(); ++l) {
    if (heads_[l]) return true;
  }
  return false;
}

std::vector<NamedTensor> Network::named_parameters() const {
  std::vector<NamedTensor> out;
  auto add_layer = [&out, this](const std::string& conv, const std::string& norm, const ConvNorm& layer) {
    out.push_back({conv + ".weight", layer.weight});
    if (spec_.batch_norm) {
      out.push_back({norm + ".gamma", layer.gamma});
      out.push_back({norm + ".beta", layer.beta});
    }
  };
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const std::string prefix = "block" + std::to_string(l + 1);
    const auto& b = blocks_[l];
    for (std::size_t s = 0; s < b.stages.size(); ++s) {
      const std::string idx = std::to_string(s + 1);
      add_layer(prefix + ".conv" + idx, prefix + ".bn" + idx, b.stages[s]);
    }
    if (b.projection) add_layer(prefix + ".proj", prefix + ".proj_bn", *b.projection);
  }
  for (std::size_t l = 0; l < heads_.size(); ++l) {
    if (!heads_[l]) continue;
    out.push_back({head_prefix(l + 1) + ".weight", heads_[l]->weight});
    out.push_back({head_prefix(l + 1) + ".bias", heads_[l]->bias});
  }
  return out;
}

std::vector<NamedBuffer> Network::named_buffers() {
  std::vector<NamedBuffer> out;
  if (!spec_.batch_norm) return out;
  auto add_stats = [&out](const std::string& norm, const ConvNorm& layer) {
    out.push_back({norm + ".running_mean", &layer.stats.running_mean});
    out.push_back({norm + ".running_var", &layer.stats.running_var});
  };
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const std::string prefix = "block" + std::to_string(l + 1);
    const auto& b = blocks_[l];
    for (std::size_t s = 0; s < b.stages.size(); ++s) add_stats(prefix + ".bn" + std::to_string(s + 1), b.stages[s]);
    if (b.projection) add_stats(prefix + ".proj_bn", *b.projection);
  }
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : named_parameters()) total += p.tensor.numel();
  return total;
}

InferenceCost Network::inference_cost() const {
  InferenceCost cost;
  const std::string side_prefix = "head.l";
  const std::string main_head = head_prefix(blocks_.size()) + ".";
  for (const auto& p : named_parameters()) {
    const bool side = p.name.rfind(side_prefix, 0) == 0 && p.name.rfind(main_head, 0) != 0;
    if (!side) cost.parameters += p.tensor.numel();
  }
  const auto extents = spec_.block_extents();
  std::size_t h = spec_.height, w = spec_.width;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const auto& bs = spec_.blocks[l];
    std::size_t sh = h, sw = w;
    for (std::size_t s = 0; s < blocks_[l].stages.size(); ++s) {
      const auto& k = blocks_[l].stages[s].weight;
      sh = conv_output_extent(sh, bs.kernel, s == 0 ? bs.stride : 1, bs.kernel / 2);
      sw = conv_output_extent(sw, bs.kernel, s == 0 ? bs.stride : 1, bs.kernel / 2);
      cost.macs_per_sample += k.numel() * sh * sw * spec_.timesteps;
    }
    if (blocks_[l].projection) {
      cost.macs_per_sample += blocks_[l].projection->weight.numel() * extents[l].first * extents[l].second *
                              spec_.timesteps;
    }
    h = extents[l].first;
    w = extents[l].second;
  }
  cost.macs_per_sample += spec_.classes * spec_.blocks.back().channels_out;
  return cost;
}

void Network::zero_grad() {
  for (auto& p : named_parameters()) p.tensor.zero_grad();
}

Tensor combine_outputs(const ForwardTrace& trace, real lambda) {
  if (!(lambda >= 0.0)) fail(ErrorKind::input, "combine_outputs: lambda must be >= 0, got " + std::to_string(lambda));
  if (trace.b.empty()) fail(ErrorKind::input, "combine_outputs: empty trace");
  const Tensor& main = trace.main();
  const std::size_t sides = trace.b.size() - 1;
  for (std::size_t l = 0; l < sides; ++l) {
    if (trace.b[l].shape() != main.shape()) {
      fail(ErrorKind::dimension, "combine_outputs: branch " + std::to_string(l + 1) + " has shape " +
                                     shape_string(trace.b[l].shape()) + ", main has " + shape_string(main.shape()));
    }
  }
  Tensor out = main.detach();
  if (lambda != 0.0 && sides > 0) {
    auto ov = out.values();
    std::vector<real> side_sum(ov.size(), 0.0);
    for (std::size_t l = 0; l < sides; ++l) {
      auto bv = trace.b[l].values();
      for (std::size_t i = 0; i < ov.size(); ++i) side_sum[i] += bv[i];
    }
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += lambda * side_sum[i];
  }
  if (auto* tape = recording_tape(trace.b)) {
    tape->record(OpKind::combine_outputs, trace.b, out, [branches = trace.b, out, lambda]() mutable {
      auto g = out.grad();
      for (std::size_t l = 0; l < branches.size(); ++l) {
        auto& b = branches[l];
        if (!b.requires_grad()) continue;
        const real w = l + 1 == branches.size() ? 1.0 : lambda;
        auto gb = b.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += w * g[i];
      }
    });
  }
  return out;
}

}  // namespace spikeshort
