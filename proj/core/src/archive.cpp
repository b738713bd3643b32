#include "quamba/archive.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "quamba/error.hpp"
#include "quamba/int4.hpp"

static_assert(std::endian::native == std::endian::little,
              "archive payloads are copied as little-endian host memory");

namespace quamba {

using nlohmann::json;


const char* dtype_name(DType d) {
  switch (d) {
    case DType::F32: return "f32";
    case DType::I8: return "i8";
    case DType::U4Packed: return "u4packed";
    case DType::JsonMeta: return "json-meta";
  }
  return "?";
}

DType dtype_from_name(const std::string& name) {
  if (name == "f32") return DType::F32;
  if (name == "i8") return DType::I8;
  if (name == "u4packed") return DType::U4Packed;
  if (name == "json-meta") return DType::JsonMeta;
  throw Error("corrupt manifest: unknown dtype '" + name + "'");
}

DType value_dtype(const ArchiveValue& v) {
  return std::visit(
      [](const auto& x) -> DType {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Tensor>) return DType::F32;
        else if constexpr (std::is_same_v<T, Int8Tensor>) return DType::I8;
        else if constexpr (std::is_same_v<T, Int4Tensor>) return DType::U4Packed;
        else return DType::JsonMeta;
      },
      v);
}

namespace {

void check_u4_shape(const std::string& name, const Shape& shape) {
  QUAMBA_CHECK(!shape.empty() && shape.back() % 2 == 0,
               "u4packed entry '" + name + "' needs an even last dimension");
}

void validate_value(const std::string& name, const ArchiveValue& v) {
  if (const auto* t = std::get_if<Tensor>(&v)) {
    QUAMBA_CHECK(t->all_finite(), "non-finite float in entry '" + name + "'");
  } else if (const auto* q = std::get_if<Int8Tensor>(&v)) {
    QUAMBA_CHECK(q->data.size() == shape_numel(q->shape),
                 "i8 entry '" + name + "' length does not match shape");
  } else if (const auto* p = std::get_if<Int4Tensor>(&v)) {
    check_u4_shape(name, p->shape);
    QUAMBA_CHECK(p->packed.size() == int4_packed_size(shape_numel(p->shape)),
                 "u4packed entry '" + name + "' length does not match shape");
  }
}

}  // namespace

void Archive::add(const std::string& name, ArchiveValue value) {
  QUAMBA_CHECK(!name.empty(), "archive entry names must be non-empty");
  QUAMBA_CHECK(!contains(name), "archive name collision: '" + name + "'");
  validate_value(name, value);
  entries_.emplace(name, std::move(value));
}

const ArchiveValue& Archive::get(const std::string& name) const {
  auto it = entries_.find(name);
  QUAMBA_CHECK(it != entries_.end(), "archive has no entry '" + name + "'");
  return it->second;
}

template <typename T>
static const T& get_as(const Archive& a, const std::string& name, const char* want) {
  const auto* p = std::get_if<T>(&a.get(name));
  QUAMBA_CHECK(p != nullptr, "archive entry '" + name + "' is not " + want);
  return *p;
}

const Tensor& Archive::tensor(const std::string& name) const {
  return get_as<Tensor>(*this, name, "f32");
}
const Int8Tensor& Archive::int8(const std::string& name) const {
  return get_as<Int8Tensor>(*this, name, "i8");
}
const Int4Tensor& Archive::int4(const std::string& name) const {
  return get_as<Int4Tensor>(*this, name, "u4packed");
}
const json& Archive::meta(const std::string& name) const {
  return get_as<json>(*this, name, "json-meta");
}

std::vector<std::uint8_t> archive_encode(const Archive& archive) {
  std::vector<std::uint8_t> blob;
  json entries = json::array();
  for (const auto& [name, value] : archive.entries()) {
    const std::size_t offset = blob.size();
    Shape shape;
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, Tensor>) {
            shape = x.shape();
            const auto* p = reinterpret_cast<const std::uint8_t*>(x.data().data());
            blob.insert(blob.end(), p, p + x.numel() * sizeof(float));
          } else if constexpr (std::is_same_v<T, Int8Tensor>) {
            shape = x.shape;
            const auto* p = reinterpret_cast<const std::uint8_t*>(x.data.data());
            blob.insert(blob.end(), p, p + x.data.size());
          } else if constexpr (std::is_same_v<T, Int4Tensor>) {
            shape = x.shape;
            blob.insert(blob.end(), x.packed.begin(), x.packed.end());
          } else {
            const std::string text = x.dump();
            shape = {text.size()};
            blob.insert(blob.end(), text.begin(), text.end());
          }
        },
        value);
    entries.push_back({{"name", name},
                       {"dtype", dtype_name(value_dtype(value))},
                       {"shape", shape},
                       {"offset", offset},
                       {"length", blob.size() - offset}});
  }
  json manifest = {{"version", kArchiveVersion},
                   {"blob_length", blob.size()},
                   {"entries", std::move(entries)}};
  const std::string header = manifest.dump();

  std::vector<std::uint8_t> out(16 + header.size() + blob.size());
  std::memcpy(out.data(), kArchiveMagic, 8);
  const std::uint64_t len = header.size();
  for (std::size_t i = 0; i < 8; ++i) out[8 + i] = static_cast<std::uint8_t>(len >> (8 * i));
  std::memcpy(out.data() + 16, header.data(), header.size());
  if (!blob.empty()) std::memcpy(out.data() + 16 + header.size(), blob.data(), blob.size());
  return out;
}

Archive archive_decode(std::span<const std::uint8_t> bytes) {
  QUAMBA_CHECK(bytes.size() >= 16, "corrupt manifest: file shorter than archive header");
  QUAMBA_CHECK(std::memcmp(bytes.data(), kArchiveMagic, 8) == 0,
               "corrupt manifest: bad archive magic");
  std::uint64_t header_len = 0;
  for (std::size_t i = 0; i < 8; ++i) header_len |= std::uint64_t{bytes[8 + i]} << (8 * i);
  QUAMBA_CHECK(header_len <= bytes.size() - 16,
               "corrupt manifest: declared manifest length exceeds file size");

  json manifest;
  try {
    manifest = json::parse(bytes.begin() + 16,
                           bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::exception& e) {
    throw Error(std::string("corrupt manifest: ") + e.what());
  }
  const std::span<const std::uint8_t> blob = bytes.subspan(16 + header_len);

  Archive archive;
  try {
    QUAMBA_CHECK(manifest.at("version").get<int>() == kArchiveVersion,
                 "corrupt manifest: unsupported archive version");
    std::size_t prev_end = 0;
    for (const auto& e : manifest.at("entries")) {
      const auto name = e.at("name").get<std::string>();
      const DType dtype = dtype_from_name(e.at("dtype").get<std::string>());
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto length = e.at("length").get<std::size_t>();
      QUAMBA_CHECK(offset >= prev_end,
                   "corrupt manifest: entry '" + name + "' overlaps or is out of order");
      QUAMBA_CHECK(offset <= blob.size() && length <= blob.size() - offset,
                   "blob shorter than manifest extent");
      prev_end = offset + length;
      const auto* p = blob.data() + offset;
      const std::size_t n = shape_numel(shape);

      switch (dtype) {
        case DType::F32: {
          QUAMBA_CHECK(length == n * sizeof(float),
                       "corrupt manifest: f32 entry '" + name + "' length mismatch");
          std::vector<float> data(n);
          if (n) std::memcpy(data.data(), p, length);
          archive.add(name, Tensor(shape, std::move(data)));
          break;
        }
        case DType::I8: {
          QUAMBA_CHECK(length == n, "corrupt manifest: i8 entry '" + name + "' length mismatch");
          Int8Tensor q{shape, std::vector<std::int8_t>(n)};
          if (n) std::memcpy(q.data.data(), p, n);
          archive.add(name, std::move(q));
          break;
        }
        case DType::U4Packed: {
          check_u4_shape(name, shape);
          QUAMBA_CHECK(length == int4_packed_size(n),
                       "corrupt manifest: u4packed entry '" + name + "' length mismatch");
          archive.add(name, Int4Tensor{shape, std::vector<std::uint8_t>(p, p + length)});
          break;
        }
        case DType::JsonMeta: {
          QUAMBA_CHECK(shape.size() == 1 && shape[0] == length,
                       "corrupt manifest: json-meta entry '" + name + "' shape mismatch");
          archive.add_meta(name, json::parse(p, p + length));
          break;
        }
      }
    }
    QUAMBA_CHECK(manifest.at("blob_length").get<std::size_t>() <= blob.size(),
                 "blob shorter than manifest extent");
  } catch (const json::exception& e) {
    throw Error(std::string("corrupt manifest: ") + e.what());
  }
  return archive;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  QUAMBA_CHECK(in.good(), "cannot open '" + path + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  QUAMBA_CHECK(!in.bad(), "I/O error reading '" + path + "'");
  return bytes;
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  QUAMBA_CHECK(out.good(), "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  QUAMBA_CHECK(out.good(), "I/O error writing '" + path + "'");
}

void archive_write(const Archive& archive, const std::string& path) {
  write_file_bytes(path, archive_encode(archive));
}

Archive archive_read(const std::string& path) { return archive_decode(read_file_bytes(path)); }

}  // namespace quamba
