#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace samt {

// Deterministic RNG. mt19937_64 has a standard-mandated output sequence and
// all derived draws below avoid std::*_distribution, whose outputs vary
// between standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // [0, 1), 53-bit resolution
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // integer in [lo, hi] inclusive
  int64_t randint(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(eng_() % span);
  }

  // standard normal via Box-Muller; second value cached
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // normal(0, sigma) resampled until |x| <= 2*sigma
  double truncated_normal(double sigma) {
    for (;;) {
      double x = normal() * sigma;
      if (std::abs(x) <= 2.0 * sigma) return x;
    }
  }

  // derive an independent child stream (e.g. one per worker)
  Rng fork(uint64_t salt) {
    uint64_t s = next_u64() ^ (salt * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull);
    return Rng(s);
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace samt
