#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace quamba {

// Signed 4-bit values in [-8, 7], two per byte. Element 2i goes in the low
// nibble of byte i, element 2i+1 in the high nibble; an odd tail leaves the
// last high nibble zero.
std::vector<std::uint8_t> pack_int4(std::span<const std::int8_t> values);
std::vector<std::int8_t> unpack_int4(std::span<const std::uint8_t> packed, std::size_t count);

inline std::size_t int4_packed_size(std::size_t count) { return (count + 1) / 2; }

inline std::int8_t int4_at(std::span<const std::uint8_t> packed, std::size_t i) {
  const std::uint8_t byte = packed[i / 2];
  const std::uint8_t nib = (i % 2 == 0) ? (byte & 0x0F) : (byte >> 4);
  return static_cast<std::int8_t>(nib >= 8 ? static_cast<int>(nib) - 16 : nib);
}

}  // namespace quamba
