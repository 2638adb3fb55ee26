#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace clab {

// Counter-based random streams: every draw is a pure function of
// (key, counter), so sampling order and worker count never change results.

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Combine a key with a counter into a fresh 64-bit word.
inline std::uint64_t rng_word(std::uint64_t key, std::uint64_t counter) {
  return detail::mix64(detail::mix64(key) ^ detail::mix64(counter * 0xd1342543de82ef95ULL + 1));
}

/// Derive the per-sample seed from a master seed, stable across workers.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return rng_word(master, index ^ 0x5ee225aceb1d0a4fULL);
}

/// Uniform double in (0, 1], from a (key, counter) pair.
inline double rng_uniform(std::uint64_t key, std::uint64_t counter) {
  const std::uint64_t w = rng_word(key, counter);
  return (static_cast<double>(w >> 11) + 1.0) * 0x1.0p-53;
}

/// Two independent standard Gaussians from one (key, counter) pair (Box-Muller).
inline std::pair<double, double> rng_gaussian_pair(std::uint64_t key, std::uint64_t counter) {
  const double u1 = rng_uniform(key, 2 * counter);
  const double u2 = rng_uniform(key, 2 * counter + 1);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(t), r * std::sin(t)};
}

/// Small sequential generator for tests and Monte-Carlo point sampling.
class SequentialRng {
 public:
  explicit SequentialRng(std::uint64_t key) : key_(key) {}

  double uniform() { return rng_uniform(key_, counter_++); }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double gaussian() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace clab
