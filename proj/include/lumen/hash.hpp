#pragma once

#include <cstdint>
#include <span>

namespace lumen {

// FNV-1a 64-bit; content fingerprint for manifest source entries.
inline std::uint64_t fnv1a64(std::span<const std::uint8_t> data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : data) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace lumen
