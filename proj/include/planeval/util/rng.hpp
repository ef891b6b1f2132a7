#pragma once

#include <cmath>
#include <cstdint>

namespace planeval {

// SplitMix64 generator; also used to derive independent per-stream seeds.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// Deterministic double-precision RNG. The standard-library distributions are
// implementation-defined, so seeded replay uses these fixed algorithms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_.next(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_.next() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (two uniforms per draw, no cached spare).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Derives a child seed for stream `index` without disturbing `base`.
  static std::uint64_t derive(std::uint64_t base, std::uint64_t index) {
    SplitMix64 g(base ^ (0xD1B54A32D192ED03ULL * (index + 1)));
    return g.next();
  }

 private:
  SplitMix64 gen_;
};

}  // namespace planeval
