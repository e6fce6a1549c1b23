#pragma once

#include <cstdint>

namespace posecal {

// Portable seeded PRNG used everywhere randomness is needed, so that
// datasets and models are bit-reproducible across platforms and
// standard libraries (std:: distributions are implementation-defined).
//
// Algorithms:
//   - splitmix64 (Steele/Lea/Flood mixer) for seeding and stream
//     derivation,
//   - xoshiro256** (Blackman/Vigna) as the main generator,
//   - bounded integers by rejection from the top 2^64 range,
//   - doubles from the top 53 bits.

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform integer in [0, bound). bound must be > 0.
  uint64_t bounded(uint64_t bound) {
    // Rejection sampling: draw until the value falls inside the largest
    // multiple of bound, which keeps the result exactly uniform.
    const uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  int uniform_int(int lo, int hi) {  // inclusive range [lo, hi]
    return lo + static_cast<int>(bounded(static_cast<uint64_t>(hi - lo) + 1));
  }

  // Uniform double in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static constexpr uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  uint64_t s_[4];
};

// Derives an independent stream from a master seed and up to three
// salts (e.g. (seed, model_id, view) or (seed, tree_index)). The salts
// are folded through splitmix64 so that adjacent values yield
// uncorrelated streams, and results never depend on scheduling order.
inline uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b = 0,
                            uint64_t c = 0) {
  uint64_t s = master;
  uint64_t mix = splitmix64(s) ^ a;
  mix = splitmix64(mix) ^ b;
  mix = splitmix64(mix) ^ c;
  return splitmix64(mix);
}

inline Rng derive_stream(uint64_t master, uint64_t a, uint64_t b = 0,
                         uint64_t c = 0) {
  return Rng(derive_seed(master, a, b, c));
}

}  // namespace posecal
