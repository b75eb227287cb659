#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace saltseg {

/// 64-bit FNV-1a; incremental via the `state` argument.
inline std::uint64_t fnv1a64_bytes(const void* data, std::size_t size, std::uint64_t state = 0xcbf29ce484222325ULL) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    state ^= bytes[i];
    state *= 0x100000001b3ULL;
  }
  return state;
}

inline std::uint64_t fnv1a64(std::string_view text, std::uint64_t state = 0xcbf29ce484222325ULL) {
  return fnv1a64_bytes(text.data(), text.size(), state);
}

inline std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace saltseg
