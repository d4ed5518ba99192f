#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace eqv {

// splitmix64: tiny, fast, passes BigCrush, and bit-stable across platforms,
// which is what the determinism guarantees lean on.
inline uint64_t splitmix64_next(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// FNV-1a over bytes; used to derive per-item seeds from canonical strings.
inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Derive an independent stream seed from a base seed and a salt.
inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t s = seed;
  splitmix64_next(s);
  s ^= salt * 0x9e3779b97f4a7c15ull + 0x7f4a7c15ull;
  splitmix64_next(s);
  return s;
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {
    // Burn a couple of outputs so nearby seeds decorrelate.
    next();
    next();
  }

  uint64_t next() { return splitmix64_next(state_); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is ~n/2^64, irrelevant here.
  uint64_t below(uint64_t n) { return next() % n; }

  // Inclusive range.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo + 1)));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; used only for weight init.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  uint64_t state_;
};

}  // namespace eqv
