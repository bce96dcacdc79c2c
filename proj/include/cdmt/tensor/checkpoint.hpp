#pragma once

// Binary checkpoint layout, all integers little-endian:
//
//   bytes 0..7   magic "CDMTCKPT"
//   u32          format version (currently 1)
//   u64          FNV-1a 64 digest of the header text
//   u32          header length L, then L bytes of UTF-8 header (JSON text)
//   u32          record count N
//   N records:
//     u32        name length, then name bytes
//     u8         scalar width in bytes (4 = IEEE binary32, 8 = IEEE binary64)
//     u32        rank R, then R x u64 dimensions
//     prod(dims) values of the given width, little-endian
//
// Values are written in their native width, so a save/load round trip at the
// same width is bit-exact.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cdmt/tensor/tensor.hpp"

namespace cdmt {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'C', 'D', 'M', 'T', 'C', 'K', 'P', 'T'};

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TensorRecord {
  std::string name;
  Shape shape;
  std::uint8_t width = 8;
  std::vector<double> values;  // exact for both widths
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t digest = 0;
  std::string header;
  std::vector<TensorRecord> records;

  const TensorRecord& find(std::string_view name) const {
    for (const auto& r : records)
      if (r.name == name) return r;
    throw CheckpointError("checkpoint has no tensor named '" + std::string(name) + "'");
  }
};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(std::string_view s) { buf_.append(s); }
  void scalar(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void scalar(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string data) : data_(std::move(data)) {}
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw CheckpointError("checkpoint truncated");
  }
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

template <typename T>
std::string encode_checkpoint(std::string_view header, std::span<const Parameter<T>* const> params) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  detail::ByteWriter w;
  w.bytes(std::string_view(kCheckpointMagic, 8));
  w.u32(kCheckpointVersion);
  w.u64(fnv1a64(header));
  w.u32(static_cast<std::uint32_t>(header.size()));
  w.bytes(header);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    w.u32(static_cast<std::uint32_t>(p->name.size()));
    w.bytes(p->name);
    w.u8(sizeof(T));
    w.u32(static_cast<std::uint32_t>(p->shape.size()));
    for (auto d : p->shape) w.u64(d);
    for (T v : p->value) w.scalar(v);
  }
  return w.str();
}

inline Checkpoint decode_checkpoint(std::string data) {
  detail::ByteReader r(std::move(data));
  if (r.bytes(8) != std::string_view(kCheckpointMagic, 8)) throw CheckpointError("not a checkpoint (bad magic)");
  Checkpoint ck;
  ck.version = r.u32();
  if (ck.version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(ck.version));
  ck.digest = r.u64();
  ck.header = r.bytes(r.u32());
  if (fnv1a64(ck.header) != ck.digest) throw CheckpointError("checkpoint header digest mismatch");
  const std::uint32_t n = r.u32();
  ck.records.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    TensorRecord rec;
    rec.name = r.bytes(r.u32());
    rec.width = r.u8();
    if (rec.width != 4 && rec.width != 8) throw CheckpointError("bad scalar width for " + rec.name);
    rec.shape.resize(r.u32());
    for (auto& d : rec.shape) d = r.u64();
    rec.values.resize(numel(rec.shape));
    for (auto& v : rec.values)
      v = rec.width == 4 ? static_cast<double>(std::bit_cast<float>(r.u32())) : std::bit_cast<double>(r.u64());
    ck.records.push_back(std::move(rec));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint records");
  return ck;
}

template <typename T>
void save_checkpoint(const std::string& path, std::string_view header, std::span<const Parameter<T>* const> params) {
  const std::string bytes = encode_checkpoint<T>(header, params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(std::move(data));
}

/// Copy records into parameters matched by name; shapes must agree.
template <typename T>
void assign_parameters(const Checkpoint& ck, std::span<Parameter<T>* const> params) {
  for (auto* p : params) {
    const auto& rec = ck.find(p->name);
    if (rec.shape != p->shape)
      throw CheckpointError("shape mismatch for " + p->name + ": checkpoint " + to_string(rec.shape) + ", model " +
                            to_string(p->shape));
    for (std::size_t i = 0; i < rec.values.size(); ++i) p->value[i] = static_cast<T>(rec.values[i]);
  }
}

}  // namespace cdmt
