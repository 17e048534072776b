#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace frl {

// Deterministic random source. std::mt19937_64 has a standard-specified
// sequence; the distributions are hand-rolled because the standard library's
// distribution objects are implementation-defined and would break the
// byte-identical-rerun contract.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // uniform in [0, 1) with 53-bit resolution
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // standard normal, Box-Muller with cached spare
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // uniform integer in [0, n); modulo bias is < 2^-32 for the sizes used here
  uint64_t below(uint64_t n) { return eng_() % n; }

  uint8_t byte() { return static_cast<uint8_t>(eng_() & 0xFF); }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// splitmix64 finalizer; derives independent stream seeds from (base, index)
inline uint64_t mix_seed(uint64_t base, uint64_t salt) {
  uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t hash_str(const char* s) {
  // FNV-1a, used to salt per-dataset seeds
  uint64_t h = 0xcbf29ce484222325ULL;
  for (; *s; ++s) h = (h ^ static_cast<uint8_t>(*s)) * 0x100000001b3ULL;
  return h;
}

}  // namespace frl
