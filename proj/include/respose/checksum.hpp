#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace respose {

// FNV-1a, 64 bit. Used for skeleton identity and file content checks.
inline constexpr std::uint64_t kFnv64Offset = 14695981039346656037ull;
inline constexpr std::uint64_t kFnv64Prime = 1099511628211ull;

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = kFnv64Offset) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnv64Prime;
  }
  return h;
}

inline std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h = kFnv64Offset) {
  return fnv1a64(std::string_view(static_cast<const char*>(data), size), h);
}

inline std::string checksum_hex(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

inline std::uint64_t parse_checksum_hex(const std::string& hex) {
  return std::stoull(hex, nullptr, 16);
}

}  // namespace respose
