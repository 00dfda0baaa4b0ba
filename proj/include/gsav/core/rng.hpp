#pragma once

// Deterministic RNG with explicit sampling transforms. std::mt19937_64 is
// specified bit-exactly by the standard; the distributions here avoid
// libstdc++'s unspecified distribution implementations so that seeded runs
// are reproducible across standard libraries.

#include <cmath>
#include <cstdint>
#include <random>

namespace gsav {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; caches the second variate.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    cached_ = r * std::sin(2.0 * M_PI * u2);
    has_cached_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform integer in [0, n) via rejection sampling.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace gsav
