#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace pursuit {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

/// Derives an independent seed for a named substream (e.g. "env", "init", "sampling").
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                                           std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ fnv1a(stream)) + splitmix64(index + 0x51ED2701ull));
}

/// Seeded random stream. The engine's output sequence is fixed by the standard; the
/// conversions to floating point are done here so results do not depend on the
/// standard library's distribution implementations.
class Rng {
 public:
  Rng() : engine_(0) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0)
      : engine_(derive_seed(seed, stream, index)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection keeps the draw unbiased.
    const std::uint64_t limit = ~0ull - (~0ull % n);
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  /// Standard normal via Box-Muller (one draw per call, no cached pair).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool operator==(const Rng&) const = default;

 private:
  std::mt19937_64 engine_;
};

}  // namespace pursuit
