#pragma once

#include <cstdint>
#include <string_view>

namespace hpdp {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seed for the index-th child of a parent stream.
inline std::uint64_t child_seed(std::uint64_t parent, std::uint64_t index) {
  return splitmix64(parent ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

// Seed for a named stream ("data", "init", "shuffle", ...).
inline std::uint64_t stream_seed(std::uint64_t parent, std::string_view name) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return splitmix64(parent ^ h);
}

}  // namespace hpdp
