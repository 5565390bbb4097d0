#pragma once

#include <cstdint>
#include <random>

namespace fdreward {

// std::mt19937_64 is bit-exact across standard libraries; the std
// distributions are not, so draws are mapped to reals by hand.
using Rng = std::mt19937_64;

// 53-bit draw mapped onto [0, 1).
inline double unit_open(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

// 53-bit draw mapped onto [0, 1].
inline double unit_closed(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) / static_cast<double>((std::uint64_t{1} << 53) - 1);
}

// Uniform integer in [0, n) by rejection, n > 0.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

// Derives an independent stream seed from a base seed and a stream id.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace fdreward
