#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace dmpp {

using Vec2 = std::array<double, 2>;
using Vec3 = std::array<double, 3>;  // (t, s1, s2)

/// Problem with input data: malformed files, events outside the domain,
/// inconsistent shapes between data and configuration.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration inconsistent with the requested operation (missing modality,
/// variant mismatch, invalid hyperparameter).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure: NaN objective, diverged optimizer step, violated
/// dominating rate, degenerate likelihood.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool finite(double x) { return std::isfinite(x); }

/// splitmix64 step; also used to derive independent seed streams.
inline std::uint64_t mix_seed(std::uint64_t state) {
  std::uint64_t z = state + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return mix_seed(a ^ (0x9E3779B97F4A7C15ull + mix_seed(b)));
}

/// Deterministic RNG with explicit algorithms so that seeded runs reproduce
/// byte-identically across platforms and standard-library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  /// Poisson draw by Knuth's product method, chunked so large means do not
  /// underflow exp(-mean).
  long poisson(double mean) {
    long total = 0;
    while (mean > 0) {
      const double chunk = mean > 400.0 ? 400.0 : mean;
      mean -= chunk;
      const double limit = std::exp(-chunk);
      double p = 1.0;
      long k = 0;
      do {
        ++k;
        p *= uniform();
      } while (p > limit);
      total += k - 1;
    }
    return total;
  }

 private:
  std::uint64_t state_;
};

}  // namespace dmpp
