#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace hetcomm {

using Rng = std::mt19937_64;

// Uniform in [0, 1) from the top 53 bits; identical across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Uniform index in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
  return i < n ? i : n - 1;
}

// Values drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
std::vector<double> fan_in_uniform(std::size_t count, std::size_t fan_in, Rng& rng);

// Stateless 64-bit mix for deriving independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace hetcomm
