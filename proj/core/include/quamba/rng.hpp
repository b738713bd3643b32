#pragma once

#include <cstdint>
#include <vector>

namespace quamba {

// Counter-based generator: draw i is splitmix64(seed + i·golden). The stream
// is a pure function of (seed, counter), so results do not depend on the
// platform's <random> implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  // Derive an independent stream, e.g. Rng::derive(base, generation, index).
  static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller (one draw per pair of uniforms, no caching).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace quamba
