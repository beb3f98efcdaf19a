#include "ctxgen/rng.h"

#include <cmath>
#include <numbers>

#include "ctxgen/errors.h"

namespace ctxgen {

uint64_t SplitMix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

uint64_t Rng::NextU64() {
  const uint64_t k = counter_++;
  return SplitMix64(SplitMix64(seed_) ^ SplitMix64(k * 0xD1B54A32D192ED03ULL + 0x632BE59BD9B4E019ULL));
}

double Rng::Uniform() { return static_cast<double>(NextU64() >> 11) * 0x1.0p-53; }

uint64_t Rng::UniformInt(uint64_t n) {
  if (n == 0) throw ContractError("UniformInt requires n > 0");
  // Rejection sampling keeps the draw unbiased.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  for (;;) {
    const uint64_t v = NextU64();
    if (v < limit) return v % n;
  }
}

double Rng::Normal() {
  double u1 = Uniform();
  const double u2 = Uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::Fork(uint64_t stream) const {
  return Rng(SplitMix64(seed_ ^ SplitMix64(stream + 0x5851F42D4C957F2DULL)), 0);
}

}  // namespace ctxgen
