#pragma once

#include <cstdint>

namespace qsa {

/// Counter-based generator with a fixed cross-platform bit stream.
/// Used everywhere randomness is needed so that a (seed, index) pair
/// reproduces byte-identical experiment output on any machine.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Fair coin: returns +1.0 or -1.0.
  double sign() { return (next_u64() >> 63) ? 1.0 : -1.0; }

 private:
  std::uint64_t state_;
};

/// Derives an independent per-replicate stream from a base seed.
/// Distinct indices give distinct, reproducible streams.
inline std::uint64_t seed_fanout(std::uint64_t base_seed, std::uint64_t index) {
  SplitMix64 mix(base_seed ^ (0xA0761D6478BD642FULL + index * 0xE7037ED1A0B428DBULL));
  return mix.next_u64();
}

}  // namespace qsa
