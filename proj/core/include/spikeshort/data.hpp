#pragma once

#include <cstdint>
#include <filesystem>
#include <iterator>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spikeshort/tensor.hpp"

namespace spikeshort {

struct Dataset {
  Tensor images;  // [n, c, h, w]
  std::vector<int> labels;
  std::size_t classes = 0;
  std::string split;

  std::size_t size() const { return labels.size(); }
  void validate() const;
};

/// Parses a big-endian IDX image file (magic 0x00000803) and label file
/// (magic 0x00000801). Pixels are scaled to [0, 1]; images come back as
/// [n, 1, rows, cols]. `classes` defaults to max(label) + 1.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::string split = "train", std::optional<std::size_t> classes = std::nullopt);

/// Scalar mean/std for single-channel data, per-channel otherwise.
struct NormalizationStats {
  std::vector<real> mean;
  std::vector<real> std;
};

/// Population mean and standard deviation of the images. A zero standard
/// deviation is an input error.
NormalizationStats compute_normalization(const Dataset& d);
Dataset normalize(const Dataset& d, const NormalizationStats& stats);
Dataset normalize(const Dataset& d, real mean, real std);

/// Central extent x extent window of every image; odd extents let stride-2
/// 3x3 convolutions divide evenly.
Dataset center_crop(const Dataset& d, std::size_t extent);

struct SyntheticTaskSpec {
  std::size_t classes = 10;
  std::size_t train_per_class = 50;
  std::size_t test_per_class = 30;
  std::size_t channels = 1;
  std::size_t height = 13;
  std::size_t width = 13;
  real noise = 0.45;    // Gaussian sigma added to the prototype
  real contrast = 0.8;  // prototype pixels are 0.5 + contrast * (U(0,1) - 0.5)
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SyntheticTaskSpec&) const = default;
};

/// Class prototypes drawn once from the seed; samples are prototype plus
/// Gaussian noise, clipped to [0, 1]. Labels cycle through the classes.
std::pair<Dataset, Dataset> make_synthetic(const SyntheticTaskSpec& spec);
std::vector<Tensor> synthetic_prototypes(const SyntheticTaskSpec& spec);

struct Batch {
  Tensor images;
  std::vector<int> labels;
  std::vector<std::size_t> indices;
};

Batch gather(const Dataset& d, std::span<const std::size_t> indices);

/// One epoch of mini-batches over a seeded permutation. The last batch may
/// be short.
class BatchSequence {
 public:
  BatchSequence(const Dataset& d, std::size_t batch, std::uint64_t shuffle_seed);

  std::size_t size() const { return groups_.size(); }
  Batch operator[](std::size_t i) const { return gather(*dataset_, groups_.at(i)); }
  const std::vector<std::vector<std::size_t>>& index_groups() const { return groups_; }

  class iterator {
   public:
    using iterator_category = std::input_iterator_tag;
    using value_type = Batch;
    using difference_type = std::ptrdiff_t;

    iterator(const BatchSequence* seq, std::size_t i) : seq_(seq), i_(i) {}
    Batch operator*() const { return (*seq_)[i_]; }
    iterator& operator++() {
      ++i_;
      return *this;
    }
    bool operator==(const iterator& o) const { return i_ == o.i_; }

   private:
    const BatchSequence* seq_;
    std::size_t i_;
  };

  iterator begin() const { return {this, 0}; }
  iterator end() const { return {this, groups_.size()}; }

 private:
  const Dataset* dataset_;
  std::vector<std::vector<std::size_t>> groups_;
};

BatchSequence batches(const Dataset& d, std::size_t batch, std::uint64_t shuffle_seed);
std::size_t batch_count(std::size_t n, std::size_t batch);

/// Dataset cache in the checkpoint container ("images", "labels" records).
void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace spikeshort
