#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace lfdnet {

/// 64-bit FNV-1a; used for content addressing, never for security.
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h = kFnvOffset) {
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = kFnvOffset) {
  return fnv1a64({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}, h);
}

}  // namespace lfdnet
