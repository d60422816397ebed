#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace atk {

// splitmix64 finalizer; used both as a hash and to derive sub-seeds.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t a) { return mix64(seed ^ mix64(a)); }

inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
  return derive_seed(derive_seed(seed, a, b), c);
}

// mt19937_64 with explicit output mappings. The engine is fully specified by
// the standard; std::uniform_real_distribution and friends are not, so we map
// raw engine words ourselves to keep streams bit-identical everywhere.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  // uniform in [0, 1)
  double next_double() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // uniform in [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // uniform integer in [0, n), n >= 1; rejection sampling over a power-of-two mask
  uint64_t next_below(uint64_t n) {
    if (n <= 1) return 0;
    uint64_t mask = ~0ULL >> __builtin_clzll((n - 1) | 1);
    uint64_t v;
    do {
      v = engine_() & mask;
    } while (v >= n);
    return v;
  }

  bool next_bool() { return (engine_() >> 63) != 0; }

  // standard normal via Box-Muller (cached second value)
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace atk
