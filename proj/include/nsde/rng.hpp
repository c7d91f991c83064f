#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

#include "nsde/common.hpp"

namespace nsde {

// Stable 64-bit stream-key combiner (splitmix64 finalizer).
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ull + b;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

// Deterministic standard-normal stream. Uniforms come from a fixed mapping of
// mt19937_64 output, normals from Box-Muller, so sequences do not depend on
// the standard library's distribution implementations.
class NormalStream {
 public:
  explicit NormalStream(uint64_t seed) : gen_(seed) {}

  double uniform01() {  // in (0, 1]
    return (static_cast<double>(gen_() >> 11) + 1.0) * 0x1p-53;
  }

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  void fill(double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = next();
  }
  void fill(Vec& out) { fill(out.data(), out.size()); }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) {
    double u = (static_cast<double>(gen_() >> 11)) * 0x1p-53;
    return lo + (hi - lo) * u;
  }

  uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// FNV-1a over raw bytes; used to key noise streams by value rather than by
// position so batch reordering cannot change per-item draws.
inline uint64_t fnv1a64(const void* data, size_t n) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t hash_doubles(std::span<const double> v) {
  return fnv1a64(v.data(), v.size() * sizeof(double));
}

// n i.i.d. standard-normal draws; identical seed gives an identical sequence.
inline Vec seeded_gaussians(uint64_t seed, size_t n) {
  Vec out(n);
  NormalStream s(seed);
  s.fill(out.data(), n);
  return out;
}

}  // namespace nsde
