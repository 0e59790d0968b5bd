#include "spikeshort/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"

#include "spikeshort/checkpoint.hpp"
#include "spikeshort/errors.hpp"

namespace spikeshort {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) << 24 | static_cast<std::uint32_t>(b[at + 1]) << 16 |
         static_cast<std::uint32_t>(b[at + 2]) << 8 | static_cast<std::uint32_t>(b[at + 3]);
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "0x%08x", v);
  return buf;
}

}  // namespace

void Dataset::validate() const {
  if (labels.empty()) fail(ErrorKind::input, "dataset '" + split + "' is empty");
  if (!images.defined() || images.rank() != 4 || images.dim(0) != labels.size()) {
    fail(ErrorKind::consistency, "dataset '" + split + "': images and labels disagree in count");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      fail(ErrorKind::input, "dataset '" + split + "': label " + std::to_string(l) + " outside [0, " +
                                 std::to_string(classes) + ")");
    }
  }
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::string split, std::optional<std::size_t> classes) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);

  if (img.size() < 4) fail(ErrorKind::format, images_path.string() + ": truncated IDX header");
  if (const auto magic = be32(img, 0); magic != 0x00000803u) {
    fail(ErrorKind::format, images_path.string() + ": expected image magic 0x00000803, found " + hex32(magic));
  }
  if (img.size() < 16) fail(ErrorKind::format, images_path.string() + ": truncated IDX header");
  const std::size_t n = be32(img, 4), rows = be32(img, 8), cols = be32(img, 12);
  if (n == 0 || rows == 0 || cols == 0) fail(ErrorKind::format, images_path.string() + ": zero extent in IDX header");
  if (img.size() != 16 + n * rows * cols) {
    fail(ErrorKind::format, images_path.string() + ": expected " + std::to_string(16 + n * rows * cols) +
                                " bytes, file has " + std::to_string(img.size()));
  }

  if (lab.size() < 4) fail(ErrorKind::format, labels_path.string() + ": truncated IDX header");
  if (const auto magic = be32(lab, 0); magic != 0x00000801u) {
    fail(ErrorKind::format, labels_path.string() + ": expected label magic 0x00000801, found " + hex32(magic));
  }
  if (lab.size() < 8) fail(ErrorKind::format, labels_path.string() + ": truncated IDX header");
  const std::size_t n_labels = be32(lab, 4);
  if (lab.size() != 8 + n_labels) {
    fail(ErrorKind::format, labels_path.string() + ": expected " + std::to_string(8 + n_labels) +
                                " bytes, file has " + std::to_string(lab.size()));
  }
  if (n_labels != n) {
    fail(ErrorKind::consistency, "IDX image count " + std::to_string(n) + " does not match label count " +
                                     std::to_string(n_labels));
  }

  Dataset d;
  d.split = std::move(split);
  d.images = Tensor::zeros({n, 1, rows, cols});
  auto v = d.images.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<real>(img[16 + i]) / 255.0;
  d.labels.resize(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    d.labels[i] = lab[8 + i];
    max_label = std::max(max_label, d.labels[i]);
  }
  d.classes = classes.value_or(static_cast<std::size_t>(max_label) + 1);
  d.validate();
  return d;
}

NormalizationStats compute_normalization(const Dataset& d) {
  d.validate();
  const std::size_t n = d.images.dim(0), c = d.images.dim(1), area = d.images.dim(2) * d.images.dim(3);
  const std::size_t groups = c == 1 ? 1 : c;
  NormalizationStats stats{std::vector<real>(groups, 0.0), std::vector<real>(groups, 0.0)};
  auto v = d.images.values();
  const real count = static_cast<real>(n * area * (c / groups));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < area; ++p) stats.mean[ch % groups] += v[(i * c + ch) * area + p];
  for (auto& m : stats.mean) m /= count;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < area; ++p) {
        const real dv = v[(i * c + ch) * area + p] - stats.mean[ch % groups];
        stats.std[ch % groups] += dv * dv;
      }
  for (auto& s : stats.std) s = std::sqrt(s / count);
  for (real s : stats.std) {
    if (!(s > 0.0)) fail(ErrorKind::input, "dataset '" + d.split + "' has zero standard deviation");
  }
  return stats;
}

Dataset normalize(const Dataset& d, const NormalizationStats& stats) {
  const std::size_t c = d.images.dim(1), area = d.images.dim(2) * d.images.dim(3);
  const std::size_t groups = stats.mean.size();
  if (groups == 0 || stats.std.size() != groups || (groups != 1 && groups != c)) {
    fail(ErrorKind::input, "normalization statistics do not match " + std::to_string(c) + " channels");
  }
  for (real s : stats.std) {
    if (!(s > 0.0)) fail(ErrorKind::input, "normalization std must be positive");
  }
  Dataset out = d;
  out.images = d.images.clone();
  auto v = out.images.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t g = groups == 1 ? 0 : (i / area) % c;
    v[i] = (v[i] - stats.mean[g]) / stats.std[g];
  }
  return out;
}

Dataset normalize(const Dataset& d, real mean, real std) { return normalize(d, NormalizationStats{{mean}, {std}}); }

Dataset center_crop(const Dataset& d, std::size_t extent) {
  d.validate();
  const std::size_t n = d.images.dim(0), c = d.images.dim(1), h = d.images.dim(2), w = d.images.dim(3);
  if (extent == 0 || extent > h || extent > w) {
    fail(ErrorKind::configuration, "crop extent " + std::to_string(extent) + " does not fit images of " +
                                       std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t oy = (h - extent) / 2, ox = (w - extent) / 2;
  Dataset out = d;
  out.images = Tensor::zeros({n, c, extent, extent});
  const auto src = d.images.values();
  auto dst = out.images.values();
  for (std::size_t i = 0; i < n * c; ++i)
    for (std::size_t y = 0; y < extent; ++y)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((i * h + oy + y) * w + ox), extent,
                  dst.begin() + static_cast<std::ptrdiff_t>((i * extent + y) * extent));
  return out;
}

void SyntheticTaskSpec::validate() const {
  if (classes < 2) fail(ErrorKind::configuration, "synthetic task needs at least 2 classes");
  if (train_per_class < 1 || test_per_class < 1) fail(ErrorKind::configuration, "synthetic task needs samples per class");
  if (channels < 1 || height < 1 || width < 1) fail(ErrorKind::configuration, "synthetic image extents must be >= 1");
  if (!(noise >= 0.0)) fail(ErrorKind::configuration, "synthetic noise must be >= 0");
  if (!(contrast > 0.0 && contrast <= 1.0)) fail(ErrorKind::configuration, "synthetic contrast must lie in (0, 1]");
}

std::vector<Tensor> synthetic_prototypes(const SyntheticTaskSpec& spec) {
  spec.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32), 0x70726f74u};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<real> unit(0.0, 1.0);
  const Shape shape{spec.channels, spec.height, spec.width};
  std::vector<Tensor> protos;
  while (protos.size() < spec.classes) {
    Tensor p = Tensor::zeros(shape);
    for (auto& v : p.values()) v = 0.5 + spec.contrast * (unit(rng) - 0.5);
    const bool collides = std::any_of(protos.begin(), protos.end(), [&p](const Tensor& q) {
      return std::equal(p.values().begin(), p.values().end(), q.values().begin());
    });
    if (!collides) protos.push_back(p);
  }
  return protos;
}

std::pair<Dataset, Dataset> make_synthetic(const SyntheticTaskSpec& spec) {
  const auto protos = synthetic_prototypes(spec);
  const std::size_t pixels = spec.channels * spec.height * spec.width;
  auto make_split = [&](const std::string& split, std::size_t per_class, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32), stream};
    std::mt19937_64 rng(seq);
    std::normal_distribution<real> noise(0.0, 1.0);
    const std::size_t n = per_class * spec.classes;
    Dataset d;
    d.split = split;
    d.classes = spec.classes;
    d.images = Tensor::zeros({n, spec.channels, spec.height, spec.width});
    d.labels.resize(n);
    auto v = d.images.values();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t label = i % spec.classes;
      d.labels[i] = static_cast<int>(label);
      auto proto = protos[label].values();
      for (std::size_t p = 0; p < pixels; ++p) {
        const real jitter = spec.noise > 0.0 ? spec.noise * noise(rng) : 0.0;
        v[i * pixels + p] = std::clamp(proto[p] + jitter, 0.0, 1.0);
      }
    }
    return d;
  };
  return {make_split("train", spec.train_per_class, 0x74726e00u), make_split("test", spec.test_per_class, 0x74737400u)};
}

Batch gather(const Dataset& d, std::span<const std::size_t> indices) {
  const Shape& s = d.images.shape();
  const std::size_t sample = s[1] * s[2] * s[3];
  Batch b;
  b.images = Tensor::zeros({indices.size(), s[1], s[2], s[3]});
  auto src = d.images.values();
  auto dst = b.images.values();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t k = indices[i];
    if (k >= d.size()) fail(ErrorKind::input, "batch index " + std::to_string(k) + " out of range");
    std::copy_n(src.begin() + k * sample, sample, dst.begin() + i * sample);
    b.labels.push_back(d.labels[k]);
  }
  b.indices.assign(indices.begin(), indices.end());
  return b;
}

BatchSequence::BatchSequence(const Dataset& d, std::size_t batch, std::uint64_t shuffle_seed) : dataset_(&d) {
  if (batch < 1) fail(ErrorKind::input, "batch size must be >= 1");
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t first = 0; first < order.size(); first += batch) {
    const std::size_t last = std::min(order.size(), first + batch);
    groups_.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(first),
                         order.begin() + static_cast<std::ptrdiff_t>(last));
  }
}

BatchSequence batches(const Dataset& d, std::size_t batch, std::uint64_t shuffle_seed) {
  return BatchSequence(d, batch, shuffle_seed);
}

std::size_t batch_count(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  d.validate();
  Checkpoint ck;
  ck.metadata = nlohmann::json{{"kind", "dataset"}, {"classes", d.classes}, {"split", d.split}}.dump();
  auto v = d.images.values();
  ck.records.push_back({"images", d.images.shape(), std::vector<float>(v.begin(), v.end())});
  std::vector<float> labels(d.labels.begin(), d.labels.end());
  ck.records.push_back({"labels", Shape{d.labels.size()}, std::move(labels)});
  save_checkpoint(ck, path);
}

Dataset load_dataset(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ck.metadata);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, path.string() + ": dataset metadata is not JSON");
  }
  if (!meta.is_object() || meta.value("kind", "") != "dataset") {
    fail(ErrorKind::format, path.string() + ": not a dataset file");
  }
  const auto* images = ck.find("images");
  const auto* labels = ck.find("labels");
  if (!images || !labels || images->shape.size() != 4) {
    fail(ErrorKind::format, path.string() + ": dataset file lacks images/labels records");
  }
  Dataset d;
  d.classes = meta.value("classes", std::size_t{0});
  d.split = meta.value("split", std::string("test"));
  d.images = Tensor(images->shape, std::vector<real>(images->values.begin(), images->values.end()));
  for (float l : labels->values) d.labels.push_back(static_cast<int>(l));
  d.validate();
  return d;
}

}  // namespace spikeshort
