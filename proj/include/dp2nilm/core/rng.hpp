#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dp2nilm {

using Seed = std::uint64_t;
using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent seeds from a parent.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Child seed for (parent, index). Pure function of its inputs, so the seed of
/// child i never depends on how many siblings exist.
constexpr Seed derive_seed(Seed parent, std::uint64_t index) {
  return splitmix64(splitmix64(parent) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

constexpr Seed derive_seed(Seed parent, std::string_view tag) {
  return splitmix64(splitmix64(parent) ^ hash_tag(tag));
}

template <typename... Rest>
constexpr Seed derive_seed(Seed parent, std::uint64_t first, std::uint64_t second,
                           Rest... rest) {
  return derive_seed(derive_seed(parent, first), second, rest...);
}

inline Rng make_rng(Seed seed) { return Rng(seed); }

}  // namespace dp2nilm
