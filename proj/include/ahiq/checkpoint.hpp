// Copyright 2026 The AHIQ Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// AHIQW1 named-tensor container.
//
//   offset  size  field
//   0       6     magic "AHIQW1"
//   6       1     u8 version (= 1)
//   7       4     u32 tensor count
//   then per tensor:
//           4     u32 name length n
//           n     UTF-8 name
//           1     u8 dtype tag (0 = f32, 1 = f64)
//           4     u32 rank r
//           8r    u64 dims
//           ...   raw element data
//   end-4   4     u32 CRC-32 of every preceding byte
//
// All integers and element data are little-endian.

#pragma once

#include <bit>
#include <boost/crc.hpp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <variant>

#include "ahiq/core.hpp"

namespace ahiq {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

inline std::string to_string(DType d) { return d == DType::f32 ? "f32" : "f64"; }

struct StoredTensor {
  std::string name;
  Shape shape;  // extents may be zero here
  std::variant<std::vector<float>, std::vector<double>> values;

  DType dtype() const { return values.index() == 0 ? DType::f32 : DType::f64; }
  std::size_t size() const {
    return std::visit([](const auto& v) { return v.size(); }, values);
  }
  bool operator==(const StoredTensor&) const = default;
};

// Insertion-ordered tensors with unique names.
class TensorMap {
 public:
  void insert(StoredTensor t) {
    if (shape_numel(t.shape) != t.size()) {
      throw DimensionError("tensor " + t.name + ": shape " + shape_str(t.shape) +
                           " vs " + std::to_string(t.size()) + " values");
    }
    if (!index_.emplace(t.name, items_.size()).second) {
      throw ContractError("duplicate tensor name " + t.name);
    }
    items_.push_back(std::move(t));
  }

  template <typename V>
  void insert(std::string name, Shape shape, std::vector<V> values) {
    insert(StoredTensor{std::move(name), std::move(shape), std::move(values)});
  }

  const StoredTensor* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &items_[it->second];
  }

  const std::vector<StoredTensor>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  bool operator==(const TensorMap& o) const { return items_ == o.items_; }

 private:
  std::vector<StoredTensor> items_;
  std::map<std::string, std::size_t> index_;
};

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "AHIQW1 element copies assume a little-endian host");

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, std::string_view what) const {
    if (remaining() < n) {
      throw FormatError("truncated AHIQW1 data while reading " + std::string(what),
                        bytes_.size());
    }
  }
  std::uint8_t u8(std::string_view what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t u32(std::string_view what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_++]} << (8 * i);
    return v;
  }
  std::uint64_t u64(std::string_view what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_++]} << (8 * i);
    return v;
  }
  void raw(void* out, std::size_t n, std::string_view what) {
    need(n, what);
    if (n) std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

}  // namespace detail

inline constexpr char kCheckpointMagic[6] = {'A', 'H', 'I', 'Q', 'W', '1'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

inline std::vector<std::uint8_t> encode_checkpoint(const TensorMap& tensors) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u8(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors.items()) {
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.raw(t.name.data(), t.name.size());
    w.u8(static_cast<std::uint8_t>(t.dtype()));
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u64(d);
    std::visit([&](const auto& v) { w.raw(v.data(), v.size() * sizeof(v[0])); },
               t.values);
  }
  w.u32(detail::crc32(w.bytes()));
  return std::move(w.bytes());
}

inline TensorMap decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  char magic[6];
  r.raw(magic, sizeof magic, "magic");
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw FormatError("bad AHIQW1 magic", 0);
  }
  const std::size_t version_at = r.offset();
  if (const auto v = r.u8("version"); v != kCheckpointVersion) {
    throw FormatError("unsupported AHIQW1 version " + std::to_string(v), version_at);
  }
  const std::uint32_t count = r.u32("tensor count");
  TensorMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t entry_at = r.offset();
    const std::uint32_t name_len = r.u32("name length");
    r.need(name_len, "name");
    std::string name(name_len, '\0');
    r.raw(name.data(), name_len, "name");
    const std::size_t dtype_at = r.offset();
    const std::uint8_t tag = r.u8("dtype");
    if (tag > 1) {
      throw FormatError("tensor " + name + ": unknown dtype tag " + std::to_string(tag),
                        dtype_at);
    }
    const std::uint32_t rank = r.u32("rank");
    r.need(std::size_t{rank} * 8, "dims");
    Shape shape(rank);
    long double elems = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.u64("dims"));
      elems *= static_cast<long double>(d);
    }
    const std::size_t width = tag == 0 ? 4 : 8;
    if (elems * width > static_cast<long double>(r.remaining())) {
      throw FormatError("truncated AHIQW1 data in tensor " + name, bytes.size());
    }
    const std::size_t n = shape_numel(shape);
    StoredTensor t{name, shape, {}};
    if (tag == 0) {
      std::vector<float> v(n);
      r.raw(v.data(), n * 4, "tensor data");
      t.values = std::move(v);
    } else {
      std::vector<double> v(n);
      r.raw(v.data(), n * 8, "tensor data");
      t.values = std::move(v);
    }
    if (out.find(name)) throw FormatError("duplicate tensor name " + name, entry_at);
    out.insert(std::move(t));
  }
  const std::size_t crc_at = r.offset();
  const std::uint32_t stored = r.u32("checksum");
  if (r.remaining() != 0) {
    throw FormatError("trailing bytes after AHIQW1 checksum", r.offset());
  }
  if (stored != detail::crc32(bytes.first(crc_at))) {
    throw FormatError("AHIQW1 CRC-32 mismatch", crc_at);
  }
  return out;
}

inline void save_checkpoint(const TensorMap& tensors, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline TensorMap load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace ahiq
