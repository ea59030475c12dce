#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tripletlab {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Named sub-seed of a top-level seed ("sampler", "mining", "init", "data", ...).
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
  return splitmix64(seed ^ splitmix64(fnv1a(name)));
}

inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

/// Stateless counter-based draws: the value depends only on (key, a, b), so
/// callers may evaluate draws in any order.
struct CounterRng {
  std::uint64_t key = 0;

  constexpr std::uint64_t bits(std::uint64_t a, std::uint64_t b) const {
    return splitmix64(splitmix64(key ^ splitmix64(a)) ^ (b * 0xD1B54A32D192ED03ULL));
  }

  /// Uniform index in [0, n).
  constexpr std::size_t index(std::uint64_t a, std::uint64_t b, std::size_t n) const {
    const double u = static_cast<double>(bits(a, b) >> 11) * 0x1.0p-53;
    auto idx = static_cast<std::size_t>(u * static_cast<double>(n));
    return idx < n ? idx : n - 1;
  }
};

}  // namespace tripletlab
