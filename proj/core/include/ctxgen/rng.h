#pragma once

#include <cstdint>

namespace ctxgen {

// Counter-based generator: draw k of stream `seed` is a pure function of
// (seed, k), so any state can be reproduced from its two integers.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0, uint64_t counter = 0) : seed_(seed), counter_(counter) {}

  uint64_t seed() const { return seed_; }
  uint64_t counter() const { return counter_; }

  uint64_t NextU64();
  // Uniform on [0, 1) with 53 random bits.
  double Uniform();
  // Uniform integer on [0, n). n must be positive.
  uint64_t UniformInt(uint64_t n);
  // Standard normal via Box-Muller; consumes two draws.
  double Normal();
  bool Bernoulli(double p) { return Uniform() < p; }

  // Independent stream derived from this one's seed and `stream`. Does not
  // advance this generator.
  Rng Fork(uint64_t stream) const;

 private:
  uint64_t seed_;
  uint64_t counter_;
};

uint64_t SplitMix64(uint64_t x);

}  // namespace ctxgen
