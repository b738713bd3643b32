#include "quamba/int4.hpp"

#include <string>

#include "quamba/error.hpp"

namespace quamba {

std::vector<std::uint8_t> pack_int4(std::span<const std::int8_t> values) {
  std::vector<std::uint8_t> out(int4_packed_size(values.size()), 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int v = values[i];
    QUAMBA_CHECK(v >= -8 && v <= 7, "int4 value out of range: " + std::to_string(v));
    const auto nib = static_cast<std::uint8_t>(v & 0x0F);
    out[i / 2] |= (i % 2 == 0) ? nib : static_cast<std::uint8_t>(nib << 4);
  }
  return out;
}

std::vector<std::int8_t> unpack_int4(std::span<const std::uint8_t> packed, std::size_t count) {
  QUAMBA_CHECK(packed.size() >= int4_packed_size(count), "int4 buffer too short");
  std::vector<std::int8_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = int4_at(packed, i);
  return out;
}

}  // namespace quamba
