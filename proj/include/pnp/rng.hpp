#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

#include "pnp/image.hpp"

namespace pnp {

struct RngSeed {
  std::uint64_t value = 0;
};

/// Reproducible random source.
///
/// std::mt19937_64 is bit-exact across standard libraries, but the standard
/// distributions are not, so uniforms and normals are derived here: uniforms
/// from the top 53 bits, normals by the Box-Muller transform (both outputs
/// used, cached pairwise).
class Rng {
 public:
  explicit Rng(RngSeed seed) : engine_(seed.value) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Seed for an independent child stream.
  RngSeed split() { return RngSeed{engine_() ^ 0x9e3779b97f4a7c15ULL}; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Image of i.i.d. N(0, sigma^2) samples.
inline Image gaussian_noise(int height, int width, double sigma, Rng& rng) {
  Image out(height, width);
  for (double& v : out.pixels()) v = sigma * rng.normal();
  return out;
}

/// 64-bit FNV-1a, stable across platforms (std::hash is not).
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace pnp
