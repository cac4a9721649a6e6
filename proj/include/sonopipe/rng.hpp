#pragma once

// Counter-based random numbers.
//
// Every draw is a pure function of (seed, stream, counter), so any frame or
// shuffle can be regenerated independently and in parallel. The integer
// stream is portable; see docs/rng.md for the exact construction.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace sonopipe::rng {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

class CounterRng {
 public:
  constexpr CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix64(seed ^ (stream * 0x9E3779B97F4A7C15ULL))) {}

  constexpr std::uint64_t bits(std::uint64_t counter) const {
    return mix64(key_ + counter * 0xD1B54A32D192ED03ULL);
  }

  /// Uniform in the open interval (0, 1).
  constexpr double uniform(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound), bound > 0.
  constexpr std::uint64_t below(std::uint64_t counter, std::uint64_t bound) const {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(bits(counter)) * bound) >> 64);
  }

  /// Standard normal via Box-Muller on counters 2c and 2c+1.
  double normal(std::uint64_t counter) const {
    const double u1 = uniform(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Unit-mean exponential.
  double exponential(std::uint64_t counter) const { return -std::log(uniform(counter)); }

 private:
  std::uint64_t key_;
};

}  // namespace sonopipe::rng
