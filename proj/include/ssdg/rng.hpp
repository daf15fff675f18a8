#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace ssdg {

// Counter-free splitmix64 generator. Kept deliberately tiny so that every
// stream in the pipeline is bit-reproducible across platforms; the standard
// library distributions are implementation-defined and are avoided.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller. Two uniforms per call; the spare is
  // discarded so the draw count per call is fixed.
  double gaussian() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Marsaglia-Tsang, with the a<1 boost. Used only for Beta sampling.
  double gamma_sample(double a) {
    if (a < 1.0) {
      double u = uniform();
      if (u < 1e-300) u = 1e-300;
      return gamma_sample(a + 1.0) * std::pow(u, 1.0 / a);
    }
    const double d = a - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = gaussian();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 1e-300 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Beta(a, a); samples lie in [0, 1].
  double beta(double a) {
    const double x = gamma_sample(a);
    const double y = gamma_sample(a);
    const double s = x + y;
    return s > 0.0 ? x / s : 0.5;
  }

  // Fisher-Yates permutation of {0, ..., n-1} into out[0..n).
  template <typename Int>
  void permutation(Int* out, uint64_t n) {
    for (uint64_t i = 0; i < n; ++i) out[i] = static_cast<Int>(i);
    for (uint64_t i = n; i > 1; --i) {
      const uint64_t j = uniform_index(i);
      const Int tmp = out[i - 1];
      out[i - 1] = out[j];
      out[j] = tmp;
    }
  }

 private:
  uint64_t state_;
};

// FNV-1a over the stream name, mixed with the parent seed. Adding a new
// named stream never perturbs existing ones.
inline uint64_t derive_seed(uint64_t seed, std::string_view name) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const char c : name) {
    h ^= static_cast<uint64_t>(static_cast<unsigned char>(c));
    h *= 0x100000001b3ull;
  }
  h ^= seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

inline uint64_t derive_seed(uint64_t seed, std::string_view name, uint64_t a) {
  return derive_seed(derive_seed(seed, name) + a * 0x9e3779b97f4a7c15ull, name);
}

inline uint64_t derive_seed(uint64_t seed, std::string_view name, uint64_t a, uint64_t b) {
  return derive_seed(derive_seed(seed, name, a) ^ (b * 0xff51afd7ed558ccdull), name);
}

}  // namespace ssdg
