#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cemt {

// Deterministic RNG used everywhere in the project. All randomness must flow
// through explicitly seeded Rng instances so that a (seed, stream) pair fully
// determines every draw. Distributions are implemented by hand instead of via
// <random> adapters to keep the byte-level output independent of the standard
// library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Derives an independent stream from a master seed and a stream index.
  static Rng stream(std::uint64_t master_seed, std::uint64_t stream_index) {
    return Rng(mix(master_seed, stream_index));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) {
    // Rejection-free modulo is biased for huge n; all our n are tiny, but use
    // rejection sampling anyway so the stream is unbiased for any n.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  bool bernoulli(double p = 0.5) { return uniform() < p; }

  // Standard normal via Box-Muller. One value per call; the partner value is
  // discarded to keep the draw count predictable.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // splitmix64 finalizer; decorrelates (seed, index) pairs.
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cemt
