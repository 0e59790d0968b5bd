#include "spikeshort/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "spikeshort/config.hpp"
#include "spikeshort/errors.hpp"

namespace spikeshort {

namespace {

constexpr char kMagic[8] = {'S', 'P', 'K', 'S', 'H', 'R', 'T', '\0'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      fail(ErrorKind::format, std::string("checkpoint truncated while reading ") + what);
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32(const char* what) {
    auto s = take(4, what);
    return static_cast<std::uint32_t>(s[0]) | static_cast<std::uint32_t>(s[1]) << 8 |
           static_cast<std::uint32_t>(s[2]) << 16 | static_cast<std::uint32_t>(s[3]) << 24;
  }

  std::string str(std::size_t n, const char* what) {
    auto s = take(n, what);
    return std::string(s.begin(), s.end());
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

// Head index l of "head.l<l>.*", or 0 when the name is not a head record.
std::size_t head_index(const std::string& name) {
  const std::string prefix = "head.l";
  if (name.rfind(prefix, 0) != 0) return 0;
  const auto dot = name.find('.', prefix.size());
  if (dot == std::string::npos || dot == prefix.size()) return 0;
  std::size_t l = 0;
  for (std::size_t i = prefix.size(); i < dot; ++i) {
    if (name[i] < '0' || name[i] > '9') return 0;
    l = l * 10 + static_cast<std::size_t>(name[i] - '0');
  }
  return l;
}

}  // namespace

const CheckpointRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, checkpoint.version);
  put_u32(out, static_cast<std::uint32_t>(checkpoint.metadata.size()));
  out.insert(out.end(), checkpoint.metadata.begin(), checkpoint.metadata.end());
  put_u32(out, static_cast<std::uint32_t>(checkpoint.records.size()));
  for (const auto& r : checkpoint.records) {
    if (shape_numel(r.shape) != r.values.size()) {
      fail(ErrorKind::consistency, "record '" + r.name + "' has shape " + shape_string(r.shape) + " but " +
                                       std::to_string(r.values.size()) + " values");
    }
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    put_u32(out, static_cast<std::uint32_t>(r.shape.size()));
    for (auto e : r.shape) put_u32(out, static_cast<std::uint32_t>(e));
    for (float v : r.values) put_f32(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  auto magic = in.take(sizeof(kMagic), "magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    fail(ErrorKind::format, "not a spikeshort checkpoint (bad magic)");
  }
  Checkpoint ck;
  ck.version = in.u32("version");
  if (ck.version != kCheckpointVersion) {
    fail(ErrorKind::format, "unsupported checkpoint version " + std::to_string(ck.version));
  }
  ck.metadata = in.str(in.u32("metadata length"), "metadata");
  const std::uint32_t count = in.u32("record count");
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointRecord r;
    r.name = in.str(in.u32("record name length"), "record name");
    const std::uint32_t rank = in.u32("record rank");
    if (rank > 8) fail(ErrorKind::format, "record '" + r.name + "' has implausible rank " + std::to_string(rank));
    for (std::uint32_t d = 0; d < rank; ++d) r.shape.push_back(in.u32("record extent"));
    const std::size_t n = shape_numel(r.shape);
    auto raw = in.take(n * 4, "record values");
    r.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::uint32_t bits = static_cast<std::uint32_t>(raw[4 * k]) |
                                 static_cast<std::uint32_t>(raw[4 * k + 1]) << 8 |
                                 static_cast<std::uint32_t>(raw[4 * k + 2]) << 16 |
                                 static_cast<std::uint32_t>(raw[4 * k + 3]) << 24;
      r.values[k] = std::bit_cast<float>(bits);
    }
    ck.records.push_back(std::move(r));
  }
  if (!in.done()) fail(ErrorKind::format, "trailing bytes after the last checkpoint record");
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::io, "failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::format) throw;
    fail(ErrorKind::format, path.string() + ": " + e.message());
  }
}

Checkpoint network_checkpoint(Network& net) {
  Checkpoint ck;
  ck.metadata = network_spec_to_json(net.spec());
  for (const auto& p : net.named_parameters()) {
    auto v = p.tensor.values();
    ck.records.push_back({p.name, p.tensor.shape(), std::vector<float>(v.begin(), v.end())});
  }
  for (const auto& b : net.named_buffers()) {
    ck.records.push_back({b.name, Shape{b.values->size()}, std::vector<float>(b.values->begin(), b.values->end())});
  }
  return ck;
}

Network network_from_checkpoint(const Checkpoint& checkpoint) {
  return network_from_checkpoint(checkpoint, network_spec_from_json(checkpoint.metadata));
}

Network network_from_checkpoint(const Checkpoint& checkpoint, const NetworkSpec& spec) {
  spec.validate();
  Network net = Network::build(spec, 0);
  const std::size_t n = spec.block_count();

  bool any_side = false;
  for (const auto& r : checkpoint.records) {
    const std::size_t l = head_index(r.name);
    if (l > 0 && l < n) any_side = true;
  }
  if (!any_side) net = net.strip_heads();

  std::map<std::string, const CheckpointRecord*> by_name;
  for (const auto& r : checkpoint.records) {
    if (!by_name.emplace(r.name, &r).second) fail(ErrorKind::consistency, "duplicate checkpoint record '" + r.name + "'");
  }
  auto load_into = [&by_name](const std::string& name, const Shape& shape, std::span<real> dst) {
    auto it = by_name.find(name);
    if (it == by_name.end()) fail(ErrorKind::consistency, "checkpoint is missing parameter '" + name + "'");
    const auto& r = *it->second;
    if (r.shape != shape) {
      fail(ErrorKind::dimension, "parameter '" + name + "': checkpoint shape " + shape_string(r.shape) +
                                     ", network expects " + shape_string(shape));
    }
    std::copy(r.values.begin(), r.values.end(), dst.begin());
    by_name.erase(it);
  };
  for (auto& p : net.named_parameters()) load_into(p.name, p.tensor.shape(), p.tensor.values());
  for (auto& b : net.named_buffers()) load_into(b.name, Shape{b.values->size()}, *b.values);
  if (!by_name.empty()) {
    fail(ErrorKind::consistency, "checkpoint record '" + by_name.begin()->first + "' has no matching parameter");
  }
  return net;
}

Checkpoint strip_head_records(const Checkpoint& checkpoint) {
  const NetworkSpec spec = network_spec_from_json(checkpoint.metadata);
  const std::size_t n = spec.block_count();
  Checkpoint out;
  out.version = checkpoint.version;
  out.metadata = checkpoint.metadata;
  for (const auto& r : checkpoint.records) {
    const std::size_t l = head_index(r.name);
    if (l > 0 && l < n) continue;
    out.records.push_back(r);
  }
  return out;
}

}  // namespace spikeshort
