#include "spikeshort/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "json.hpp"
#include "spikeshort/errors.hpp"

namespace spikeshort {

namespace {

using nlohmann::ordered_json;

// Locates the first line mentioning `"key"` so schema errors can point into
// the file.
class SchemaContext {
 public:
  explicit SchemaContext(std::string_view text) : text_(text) {}

  [[noreturn]] void error(const std::string& key, const std::string& message) const {
    fail(ErrorKind::configuration, location(key) + message);
  }

  std::string location(const std::string& key) const {
    if (text_.empty() || key.empty()) return "";
    const auto pos = text_.find("\"" + key + "\"");
    if (pos == std::string_view::npos) return "";
    const auto line = 1 + std::count(text_.begin(), text_.begin() + static_cast<std::ptrdiff_t>(pos), '\n');
    return "line " + std::to_string(line) + ": ";
  }

 private:
  std::string_view text_;
};

class Section {
 public:
  Section(const ordered_json& j, std::string path, const SchemaContext& ctx) : j_(j), path_(std::move(path)), ctx_(ctx) {
    if (!j_.is_object()) ctx_.error(last_key(), "'" + path_ + "' must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const ordered_json& v = j_.at(key);
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      // The library silently wraps negatives and truncates fractions.
      const bool ok = std::is_unsigned_v<T> ? v.is_number_unsigned() : v.is_number_integer();
      if (!ok) ctx_.error(key, "'" + qualified(key) + "' must be a " + (std::is_unsigned_v<T> ? "non-negative " : "") + "integer");
    }
    try {
      out = v.get<T>();
    } catch (const nlohmann::json::exception&) {
      ctx_.error(key, "'" + qualified(key) + "' has the wrong type");
    }
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    read(key, fallback);
    return fallback;
  }

  const ordered_json* child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) ctx_.error(key, "unknown key '" + qualified(key) + "'");
    }
  }

  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const SchemaContext& context() const { return ctx_; }

 private:
  std::string last_key() const {
    const auto dot = path_.rfind('.');
    return dot == std::string::npos ? path_ : path_.substr(dot + 1);
  }

  const ordered_json& j_;
  std::string path_;
  const SchemaContext& ctx_;
  std::set<std::string> seen_;
};

// Re-raises library validation errors with a line anchor.
template <typename F>
void validated(const SchemaContext& ctx, const std::string& key, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::configuration) throw;
    std::string msg = e.what();
    const std::string prefix = std::string(to_string(ErrorKind::configuration)) + ": ";
    if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
    ctx.error(key, msg);
  }
}

ordered_json neuron_to_json(const NeuronConfig& n) {
  return ordered_json{{"tau", n.tau}, {"v_th", n.v_th}, {"reset_grad", n.reset_grad}, {"detach_temporal", n.detach_temporal}};
}

NeuronConfig neuron_from_json(const ordered_json& j, const std::string& path, const SchemaContext& ctx) {
  Section s(j, path, ctx);
  NeuronConfig n;
  s.read("tau", n.tau);
  s.read("v_th", n.v_th);
  s.read("reset_grad", n.reset_grad);
  s.read("detach_temporal", n.detach_temporal);
  s.finish();
  validated(ctx, "tau", [&] { n.validate(); });
  return n;
}

ordered_json surrogate_to_json(const SurrogateSpec& sg) {
  ordered_json j{{"kind", std::string(to_string(sg.kind))}};
  switch (sg.kind) {
    case SurrogateKind::triangular: j["gamma"] = sg.gamma; break;
    case SurrogateKind::rectangular: j["a"] = sg.a; break;
    case SurrogateKind::tanh_like: j["k"] = sg.k; break;
  }
  return j;
}

SurrogateSpec surrogate_from_json(const ordered_json& j, const std::string& path, const SchemaContext& ctx) {
  Section s(j, path, ctx);
  SurrogateSpec sg;
  std::string kind = "triangular";
  s.read("kind", kind);
  validated(ctx, "kind", [&] { sg.kind = parse_surrogate_kind(kind); });
  switch (sg.kind) {
    case SurrogateKind::triangular: s.read("gamma", sg.gamma); break;
    case SurrogateKind::rectangular: s.read("a", sg.a); break;
    case SurrogateKind::tanh_like: s.read("k", sg.k); break;
  }
  s.finish();
  validated(ctx, "kind", [&] { sg.validate(); });
  return sg;
}

ordered_json block_to_json(const BlockSpec& b) {
  return ordered_json{{"channels_in", b.channels_in}, {"channels_out", b.channels_out}, {"stages", b.stages},
                      {"residual", b.residual},       {"stride", b.stride},             {"kernel", b.kernel}};
}

BlockSpec block_from_json(const ordered_json& j, const std::string& path, const SchemaContext& ctx) {
  Section s(j, path, ctx);
  BlockSpec b;
  s.read("channels_in", b.channels_in);
  s.read("channels_out", b.channels_out);
  s.read("stages", b.stages);
  s.read("residual", b.residual);
  s.read("stride", b.stride);
  s.read("kernel", b.kernel);
  s.finish();
  return b;
}

// Network topology section of a run config; neuron, surrogate and mode live
// at the top level there.
ordered_json topology_to_json(const NetworkSpec& spec) {
  ordered_json blocks = ordered_json::array();
  for (const auto& b : spec.blocks) blocks.push_back(block_to_json(b));
  return ordered_json{{"in_channels", spec.in_channels},
                      {"height", spec.height},
                      {"width", spec.width},
                      {"classes", spec.classes},
                      {"timesteps", spec.timesteps},
                      {"batch_norm", spec.batch_norm},
                      {"fire_mode", spec.fire_mode == FireMode::proxy ? "proxy" : "spike"},
                      {"blocks", std::move(blocks)}};
}

void topology_from_json(Section& s, NetworkSpec& spec, const SchemaContext& ctx) {
  s.read("in_channels", spec.in_channels);
  s.read("height", spec.height);
  s.read("width", spec.width);
  s.read("classes", spec.classes);
  s.read("timesteps", spec.timesteps);
  s.read("batch_norm", spec.batch_norm);
  std::string fire_mode = spec.fire_mode == FireMode::proxy ? "proxy" : "spike";
  s.read("fire_mode", fire_mode);
  if (fire_mode == "spike") {
    spec.fire_mode = FireMode::spike;
  } else if (fire_mode == "proxy") {
    spec.fire_mode = FireMode::proxy;
  } else {
    ctx.error("fire_mode", "fire_mode must be 'spike' or 'proxy'");
  }
  std::string preset;
  s.read("preset", preset);
  const ordered_json* blocks = s.child("blocks");
  if (!preset.empty() && blocks) ctx.error("preset", "give either 'preset' or 'blocks', not both");
  if (!preset.empty()) {
    if (preset != "deep8") ctx.error("preset", "unknown network preset '" + preset + "'");
    spec.blocks = NetworkSpec::deep8(spec.mode, spec.in_channels, spec.height, spec.width).blocks;
  } else if (blocks) {
    if (!blocks->is_array()) ctx.error("blocks", "'blocks' must be an array");
    spec.blocks.clear();
    for (std::size_t i = 0; i < blocks->size(); ++i) {
      spec.blocks.push_back(block_from_json((*blocks)[i], s.qualified("blocks[" + std::to_string(i) + "]"), ctx));
    }
  }
}

ordered_json dataset_to_json(const DatasetDescriptor& d) {
  if (d.kind == "idx") {
    return ordered_json{{"kind", "idx"},
                        {"train_images", d.train_images},
                        {"train_labels", d.train_labels},
                        {"test_images", d.test_images},
                        {"test_labels", d.test_labels},
                        {"crop", d.crop},
                        {"normalize", d.normalize}};
  }
  const auto& s = d.synthetic;
  return ordered_json{{"kind", "synthetic"},
                      {"classes", s.classes},
                      {"train_per_class", s.train_per_class},
                      {"test_per_class", s.test_per_class},
                      {"channels", s.channels},
                      {"height", s.height},
                      {"width", s.width},
                      {"noise", s.noise},
                      {"contrast", s.contrast},
                      {"seed", s.seed},
                      {"crop", d.crop},
                      {"normalize", d.normalize}};
}

DatasetDescriptor dataset_from_json(const ordered_json& j, const SchemaContext& ctx) {
  Section s(j, "dataset", ctx);
  DatasetDescriptor d;
  s.read("kind", d.kind);
  s.read("normalize", d.normalize);
  s.read("crop", d.crop);
  if (d.kind == "synthetic") {
    auto& t = d.synthetic;
    s.read("classes", t.classes);
    s.read("train_per_class", t.train_per_class);
    s.read("test_per_class", t.test_per_class);
    s.read("channels", t.channels);
    s.read("height", t.height);
    s.read("width", t.width);
    s.read("noise", t.noise);
    s.read("contrast", t.contrast);
    s.read("seed", t.seed);
    s.finish();
    validated(ctx, "dataset", [&] { t.validate(); });
  } else if (d.kind == "idx") {
    s.read("train_images", d.train_images);
    s.read("train_labels", d.train_labels);
    s.read("test_images", d.test_images);
    s.read("test_labels", d.test_labels);
    s.finish();
    if (d.train_images.empty() || d.train_labels.empty() || d.test_images.empty() || d.test_labels.empty()) {
      ctx.error("kind", "idx dataset needs train_images, train_labels, test_images and test_labels");
    }
  } else {
    ctx.error("kind", "dataset kind must be 'synthetic' or 'idx'");
  }
  return d;
}

ordered_json trainer_to_json(const TrainerConfig& t) {
  return ordered_json{{"lr", t.lr},
                      {"weight_decay", t.weight_decay},
                      {"batch", t.batch},
                      {"epochs", t.epochs},
                      {"optimizer", std::string(to_string(t.optimizer))},
                      {"lambda0", t.lambda0},
                      {"per_branch_loss", t.per_branch_loss},
                      {"eval_batch", t.eval_batch}};
}

TrainerConfig trainer_from_json(const ordered_json& j, const SchemaContext& ctx) {
  Section s(j, "trainer", ctx);
  TrainerConfig t;
  s.read("lr", t.lr);
  s.read("weight_decay", t.weight_decay);
  s.read("batch", t.batch);
  s.read("epochs", t.epochs);
  std::string optimizer = "adamw";
  s.read("optimizer", optimizer);
  validated(ctx, "optimizer", [&] { t.optimizer = parse_optimizer_kind(optimizer); });
  s.read("lambda0", t.lambda0);
  s.read("per_branch_loss", t.per_branch_loss);
  s.read("eval_batch", t.eval_batch);
  s.finish();
  return t;
}

ordered_json parse_json(std::string_view text) {
  try {
    return ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // The library message carries "at line L, column C".
    fail(ErrorKind::configuration, std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

void RunConfig::sync() {
  network.mode = mode;
  trainer.mode = mode;
  trainer.seed = seed;
}

void RunConfig::validate() const {
  network.validate();
  trainer.validate();
  if (dataset.kind == "synthetic") {
    dataset.synthetic.validate();
    const auto& s = dataset.synthetic;
    const std::size_t h = dataset.crop ? dataset.crop : s.height;
    const std::size_t w = dataset.crop ? dataset.crop : s.width;
    if (s.channels != network.in_channels || h != network.height || w != network.width ||
        s.classes != network.classes) {
      fail(ErrorKind::configuration, "network input/classes do not match the synthetic dataset");
    }
  }
  if (network.mode != mode || trainer.mode != mode || trainer.seed != seed) {
    fail(ErrorKind::configuration, "run config sections disagree on mode or seed");
  }
}

RunConfig parse_run_config(std::string_view text) {
  const ordered_json j = parse_json(text);
  SchemaContext ctx(text);
  Section root(j, "", ctx);
  RunConfig cfg;

  std::string mode = std::string(to_string(cfg.mode));
  root.read("mode", mode);
  validated(ctx, "mode", [&] { cfg.mode = parse_training_mode(mode); });
  root.read("seed", cfg.seed);
  root.read("out_dir", cfg.out_dir);

  if (const auto* d = root.child("dataset")) cfg.dataset = dataset_from_json(*d, ctx);
  if (const auto* t = root.child("trainer")) cfg.trainer = trainer_from_json(*t, ctx);
  if (const auto* n = root.child("neuron")) cfg.network.neuron = neuron_from_json(*n, "neuron", ctx);
  if (const auto* sg = root.child("surrogate")) cfg.network.surrogate = surrogate_from_json(*sg, "surrogate", ctx);

  NetworkSpec& net = cfg.network;
  net.mode = cfg.mode;
  if (cfg.dataset.kind == "synthetic") {
    net.in_channels = cfg.dataset.synthetic.channels;
    net.height = cfg.dataset.synthetic.height;
    net.width = cfg.dataset.synthetic.width;
    net.classes = cfg.dataset.synthetic.classes;
  } else {
    net.in_channels = 1;
    net.height = 28;
    net.width = 28;
    net.classes = 10;
  }
  if (cfg.dataset.crop != 0) net.height = net.width = cfg.dataset.crop;
  net.blocks = NetworkSpec::deep8(cfg.mode, net.in_channels).blocks;
  if (const auto* n = root.child("network")) {
    Section s(*n, "network", ctx);
    topology_from_json(s, net, ctx);
    s.finish();
  }
  root.finish();

  cfg.sync();
  validated(ctx, "network", [&] { cfg.validate(); });
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_run_config(buf.str());
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::configuration) throw;
    fail(ErrorKind::configuration, path.string() + ": " + e.message());
  }
}

std::string dump_run_config(const RunConfig& config) {
  ordered_json j;
  j["mode"] = std::string(to_string(config.mode));
  j["seed"] = config.seed;
  j["out_dir"] = config.out_dir;
  j["network"] = topology_to_json(config.network);
  j["neuron"] = neuron_to_json(config.network.neuron);
  j["surrogate"] = surrogate_to_json(config.network.surrogate);
  j["trainer"] = trainer_to_json(config.trainer);
  j["dataset"] = dataset_to_json(config.dataset);
  return j.dump(2) + "\n";
}

std::string run_config_hash(const RunConfig& config) {
  RunConfig keyed = config;
  keyed.seed = 0;
  keyed.out_dir.clear();
  keyed.sync();
  const std::string text = dump_run_config(keyed);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string network_spec_to_json(const NetworkSpec& spec) {
  ordered_json j = topology_to_json(spec);
  j["mode"] = std::string(to_string(spec.mode));
  j["neuron"] = neuron_to_json(spec.neuron);
  j["surrogate"] = surrogate_to_json(spec.surrogate);
  return j.dump();
}

NetworkSpec network_spec_from_json(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::format, std::string("network metadata is not valid JSON: ") + e.what());
  }
  SchemaContext ctx(text);
  NetworkSpec spec;
  try {
    Section s(j, "network", ctx);
    std::string mode = "vanilla";
    s.read("mode", mode);
    spec.mode = parse_training_mode(mode);
    if (const auto* n = s.child("neuron")) spec.neuron = neuron_from_json(*n, "neuron", ctx);
    if (const auto* sg = s.child("surrogate")) spec.surrogate = surrogate_from_json(*sg, "surrogate", ctx);
    topology_from_json(s, spec, ctx);
    s.finish();
    spec.validate();
  } catch (const Error& e) {
    fail(ErrorKind::format, std::string("network metadata: ") + e.message());
  }
  return spec;
}

std::pair<Dataset, Dataset> load_datasets(const DatasetDescriptor& descriptor) {
  std::pair<Dataset, Dataset> splits;
  if (descriptor.kind == "idx") {
    splits.first = load_idx(descriptor.train_images, descriptor.train_labels, "train");
    splits.second = load_idx(descriptor.test_images, descriptor.test_labels, "test", splits.first.classes);
  } else {
    splits = make_synthetic(descriptor.synthetic);
  }
  if (descriptor.crop != 0) {
    splits.first = center_crop(splits.first, descriptor.crop);
    splits.second = center_crop(splits.second, descriptor.crop);
  }
  if (descriptor.normalize) {
    const auto stats = compute_normalization(splits.first);
    splits.first = normalize(splits.first, stats);
    splits.second = normalize(splits.second, stats);
  }
  return splits;
}

}  // namespace spikeshort
