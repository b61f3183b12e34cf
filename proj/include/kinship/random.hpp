#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace kinship {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Fans a single root seed out into independent named streams
/// ("sampler", "augment", "init", "negatives", ...).
inline constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(root ^ splitmix64(h));
}

inline Rng make_rng(std::uint64_t root, std::string_view stream) {
  return Rng{derive_seed(root, stream)};
}

}  // namespace kinship
