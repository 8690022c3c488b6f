#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace npksd {

/// One splitmix64 step: advances the state and returns a mixed word.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Deterministic seed derivation: folds the tag path into the base seed
/// one splitmix64 step per tag. Every trial / round / replicate gets its
/// own stream keyed by (base, tags...), so neither execution order nor
/// thread count can change which random numbers a work unit sees.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> tags) {
  std::uint64_t state = base;
  std::uint64_t out = splitmix64(state);
  for (std::uint64_t t : tags) {
    state ^= (t + 0x9e3779b97f4a7c15ull) * 0xff51afd7ed558ccdull;
    out = splitmix64(state);
  }
  return out;
}

/// Seeded random stream. The engine (mt19937_64) has standard-mandated
/// output, and all transforms below are written out explicitly, so a given
/// seed produces the same draws on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller. No cached spare: each call consumes
  /// exactly two engine words, which keeps interleaved use reproducible.
  double normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  /// Uniform integer in [0, n); rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - max % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  /// Rademacher sign, +1 or -1.
  double sign() { return (engine_() & 1ull) ? 1.0 : -1.0; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace npksd
