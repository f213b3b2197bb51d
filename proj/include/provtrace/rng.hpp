#pragma once

#include <cmath>
#include <cstdint>

namespace provtrace {

// Deterministic PRNG with a fully specified algorithm (xoshiro256** seeded
// via splitmix64). The standard <random> engines are portable but the
// distributions are not; every draw here is pinned so that seeded runs
// produce identical bytes on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& w : state_) w = splitmix64(x);
  }

  // Derives an independent stream, e.g. one per trace or per epoch.
  Rng substream(std::uint64_t stream_id) const {
    std::uint64_t x = state_[0] ^ (0x9e3779b97f4a7c15ULL + stream_id);
    return Rng(splitmix64(x) ^ stream_id);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, n). Rejection sampling, bias-free.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Uniform in [0, 1), 53-bit mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller (one value per call, no cached spare,
  // so the draw count stays predictable).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Normal(0, sigma) clipped by redraw to +/- 2 sigma.
  double truncated_normal(double sigma) {
    for (;;) {
      const double x = normal() * sigma;
      if (std::fabs(x) <= 2.0 * sigma) return x;
    }
  }

  double exponential(double mean) {
    double u = uniform();
    while (u >= 1.0) u = uniform();
    return -mean * std::log1p(-u);
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
  }

  std::uint64_t state_[4];
};

}  // namespace provtrace
