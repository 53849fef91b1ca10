#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "core/common.h"

namespace gnvc {

// Deterministic PRNG used everywhere randomness is needed.  splitmix64 core:
// small, fast, and identical output on every platform we care about.  Streams
// are derived by hashing a (seed, tag) pair so independent consumers never
// share a sequence even when they draw in interleaved order.
struct Rng {
  uint64_t state;

  explicit Rng(uint64_t seed = 0) : state(seed) {}

  static uint64_t mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t next_u64() {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Derive an independent stream for (this seed, tag [, index]).
  static Rng derive(uint64_t seed, const std::string &tag, uint64_t index = 0) {
    uint64_t h = fnv1a64(tag);
    return Rng(mix(seed ^ mix(h) ^ mix(index * 0x9e3779b97f4a7c15ull + 0x71ull)));
  }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) {
    GNVC_CHECK(n > 0, "Rng::below(0)");
    // Rejection-free modulo bias is negligible for our n << 2^64; use
    // multiply-shift to keep it unbiased anyway.
    __uint128_t m = (__uint128_t)next_u64() * n;
    return uint64_t(m >> 64);
  }

  int range_int(int lo, int hi_inclusive) {
    return lo + int(below(uint64_t(hi_inclusive - lo + 1)));
  }

  // Standard normal via Box-Muller (pair cached).
  double normal() {
    if (have_spare) {
      have_spare = false;
      return spare;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare = r * std::sin(a);
    have_spare = true;
    return r * std::cos(a);
  }

private:
  bool have_spare = false;
  double spare = 0.0;
};

} // namespace gnvc
