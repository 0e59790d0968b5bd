#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "spikeshort/network.hpp"

namespace spikeshort {

// Container layout, all integers little-endian:
//
//   8 bytes   magic "SPKSHRT\0"
//   u32       format version (1)
//   u32       metadata length, then that many bytes of UTF-8 JSON
//   u32       record count
//   per record:
//     u32 name length, name bytes
//     u32 rank, rank x u32 extents
//     product(extents) x float32 values

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string metadata;
  std::vector<CheckpointRecord> records;

  const CheckpointRecord* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
/// Throws a format error on bad magic, unknown version or truncation.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters and running statistics, with the network spec as metadata.
Checkpoint network_checkpoint(Network& net);
/// Rebuilds the network described by the metadata and loads every record.
/// A checkpoint without side-head records yields a stripped network.
Network network_from_checkpoint(const Checkpoint& checkpoint);
/// Same, but for a caller-supplied topology; the first record whose shape
/// disagrees is named in a dimension error.
Network network_from_checkpoint(const Checkpoint& checkpoint, const NetworkSpec& spec);

/// Drops the records of side heads ("head.l<l>." for l < n).
Checkpoint strip_head_records(const Checkpoint& checkpoint);

}  // namespace spikeshort
