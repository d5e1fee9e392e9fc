#pragma once

// Deterministic 64-bit random number generation. The generator is splitmix64:
// the state advances by a fixed odd constant (the golden-ratio gamma) and each
// output is a finalizing hash of the new state. One u64 of state makes streams
// trivially serializable and bitwise reproducible across platforms.
//
// Constants are the canonical splitmix64 set:
//   gamma  0x9E3779B97F4A7C15
//   mix    0xBF58476D1CE4E5B9, 0x94D049BB133111EB  with shifts 30/27/31

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "swapvae/errors.hpp"

namespace swapvae {

// splitmix64 finalizer; also used to derive independent substreams.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  // Derives the generator for one named substream of a base seed. Streams with
  // distinct (tag, index) are independent for all practical purposes; training
  // uses this so that iteration i consumes the same draws regardless of where
  // a run was checkpointed and resumed.
  static Rng derive(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) {
    return Rng(mix64(seed + 0x9E3779B97F4A7C15ull * (tag + 1)) ^ mix64(~index));
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix64(state_);
  }

  // Uniform in [0, 1); exactly the top 53 bits, so every value is a
  // representable double and the mapping is platform independent.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform_in(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n) by threshold rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw numeric_error("Rng::below requires n > 0");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return r % n;
  }

  // Standard normal via Box-Muller. Consumes exactly two uniforms and keeps no
  // cached second value, so the stream position is a pure function of the
  // number of draws. log1p(-u) maps u in [0,1) to a strictly positive log argument.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Poisson count by Knuth's product-of-uniforms method. Means above 500 are
  // split into chunks so exp(-chunk) stays away from underflow; chunk counts
  // add because Poisson(a + b) = Poisson(a) + Poisson(b) for independent draws.
  std::uint64_t poisson(double mean) {
    if (!std::isfinite(mean) || mean < 0.0)
      throw numeric_error("Rng::poisson requires a finite nonnegative mean");
    std::uint64_t k = 0;
    while (mean > 0.0) {
      const double chunk = std::min(mean, 500.0);
      const double limit = std::exp(-chunk);
      double p = 1.0;
      for (;;) {
        p *= uniform();
        if (p <= limit) break;
        ++k;
      }
      mean -= chunk;
    }
    return k;
  }

  // Fisher-Yates shuffle of indices 0..n-1.
  template <typename Int>
  void shuffle(std::vector<Int>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t state() const { return state_; }
  void set_state(std::uint64_t s) { state_ = s; }

 private:
  std::uint64_t state_;
};

}  // namespace swapvae
