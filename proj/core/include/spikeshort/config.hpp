#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "spikeshort/data.hpp"
#include "spikeshort/network.hpp"
#include "spikeshort/trainer.hpp"

namespace spikeshort {

struct DatasetDescriptor {
  std::string kind = "synthetic";  // "synthetic" or "idx"
  SyntheticTaskSpec synthetic;
  std::string train_images, train_labels, test_images, test_labels;
  /// Center-crop to crop x crop before normalization; 0 keeps the images.
  std::size_t crop = 0;
  bool normalize = true;

  bool operator==(const DatasetDescriptor&) const = default;
};

/// Fully resolved run configuration. `mode` and `seed` are mirrored into the
/// network and trainer sections by sync().
struct RunConfig {
  TrainingMode mode = TrainingMode::evolutionary;
  std::uint64_t seed = 0;
  std::string out_dir = "runs";
  NetworkSpec network = NetworkSpec::deep8(TrainingMode::evolutionary);
  TrainerConfig trainer;
  DatasetDescriptor dataset;

  void sync();
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Parses a JSON run config. Unknown keys and type errors are configuration
/// errors whose message names the offending line.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

/// The effective config with every default written out.
std::string dump_run_config(const RunConfig& config);

/// 16 hex digits identifying the config, ignoring seed and out_dir.
std::string run_config_hash(const RunConfig& config);

std::string network_spec_to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(std::string_view text);

/// Train and test splits, normalized by training-split statistics when the
/// descriptor asks for it.
std::pair<Dataset, Dataset> load_datasets(const DatasetDescriptor& descriptor);

}  // namespace spikeshort
