#pragma once

#include <cstdint>
#include <random>

namespace sd {

// Deterministic RNG used by every stochastic operation in the toolkit.
// Same seed, same platform -> bit-identical sample stream.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : seed_(seed), eng_(mix(seed)) {}

  // Derived stream for worker `index`; independent of the parent stream state.
  Rng worker(std::uint64_t index) const {
    return Rng(seed_ ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(eng_); }

  // inclusive bounds
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(eng_);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    return mean + stddev * std_normal_(eng_);
  }

  std::int64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    return std::poisson_distribution<std::int64_t>(mean)(eng_);
  }

  std::mt19937_64& engine() { return eng_; }

private:
  static std::uint64_t mix(std::uint64_t z) {
    // splitmix64 finalizer; spreads low-entropy seeds across the state space
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_ = 0;
  std::mt19937_64 eng_;
  std::normal_distribution<double> std_normal_{0.0, 1.0};
};

} // namespace sd
