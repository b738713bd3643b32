#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "quamba/tensor.hpp"

namespace quamba {

// On-disk layout (all integers little-endian):
//
//   bytes [0, 8)      magic "QMBARCH1"
//   bytes [8, 16)     u64 manifest length L
//   bytes [16, 16+L)  UTF-8 JSON manifest
//   bytes [16+L, ..)  blob
//
// Manifest: {"version": 1, "blob_length": N, "entries": [{"name", "dtype",
// "shape", "offset", "length"}, ...]} with offsets relative to the blob start.
// Entries are written in name order with ascending, contiguous offsets.
// dtype is one of "f32", "i8", "u4packed", "json-meta"; json-meta payloads are
// compact JSON text and carry shape [byte length].
inline constexpr char kArchiveMagic[8] = {'Q', 'M', 'B', 'A', 'R', 'C', 'H', '1'};
inline constexpr int kArchiveVersion = 1;

enum class DType { F32, I8, U4Packed, JsonMeta };

const char* dtype_name(DType d);
DType dtype_from_name(const std::string& name);

struct Int8Tensor {
  Shape shape;
  std::vector<std::int8_t> data;
};

// Signed 4-bit payload; packed holds int4_packed_size(numel) bytes.
struct Int4Tensor {
  Shape shape;
  std::vector<std::uint8_t> packed;
};

using ArchiveValue = std::variant<Tensor, Int8Tensor, Int4Tensor, nlohmann::json>;

DType value_dtype(const ArchiveValue& v);

class Archive {
 public:
  // Throws on a name collision.
  void add(const std::string& name, ArchiveValue value);
  void add(const std::string& name, Tensor t) { add(name, ArchiveValue(std::move(t))); }
  void add_meta(const std::string& name, nlohmann::json j) {
    add(name, ArchiveValue(std::in_place_type<nlohmann::json>, std::move(j)));
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const ArchiveValue& get(const std::string& name) const;
  const Tensor& tensor(const std::string& name) const;
  const Int8Tensor& int8(const std::string& name) const;
  const Int4Tensor& int4(const std::string& name) const;
  const nlohmann::json& meta(const std::string& name) const;

  const std::map<std::string, ArchiveValue>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::map<std::string, ArchiveValue> entries_;
};

std::vector<std::uint8_t> archive_encode(const Archive& archive);
Archive archive_decode(std::span<const std::uint8_t> bytes);

void archive_write(const Archive& archive, const std::string& path);
Archive archive_read(const std::string& path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace quamba
