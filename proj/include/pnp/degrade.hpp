#pragma once

#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "pnp/conv.hpp"
#include "pnp/image.hpp"
#include "pnp/rng.hpp"

namespace pnp {

/// Forward operator of the observation model y = Kx + noise.
struct DegradationSpec {
  enum class Variant { blur, inpaint };

  Variant variant = Variant::blur;
  std::optional<BlurKernel> kernel;  // blur only
  std::optional<Image> mask;         // inpaint only, 1 = observed
  double sigma = 0.0;

  static DegradationSpec blur(BlurKernel k, double sigma) {
    require_sigma(sigma);
    return {Variant::blur, std::move(k), std::nullopt, sigma};
  }

  static DegradationSpec inpaint(Image mask, double sigma) {
    require_sigma(sigma);
    require_binary(mask);
    return {Variant::inpaint, std::nullopt, std::move(mask), sigma};
  }

  static void require_sigma(double sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("sigma must be >= 0");
  }

  static void require_binary(const Image& mask) {
    for (double v : mask.vec())
      if (v != 0.0 && v != 1.0) throw InvalidArgument("mask entries must be exactly 0 or 1");
  }
};

/// Valid-area blur with the flipped kernel plus i.i.d. N(0, sigma^2) noise.
/// The result is not clipped.
inline Image degrade_blur(const Image& x, const BlurKernel& k, double sigma, RngSeed seed) {
  DegradationSpec::require_sigma(sigma);
  Image y = conv2d_valid(x, k, true);
  if (sigma > 0.0) {
    Rng rng(seed);
    for (double& v : y.pixels()) v += sigma * rng.normal();
  }
  return y;
}

struct InpaintObservation {
  Image observed;
  Image mask;
};

/// Drops exactly round(missing_fraction * H * W) uniformly chosen pixels and
/// adds N(0, sigma^2) noise to the kept ones. Dropped pixels read as 0.
inline InpaintObservation degrade_inpaint(const Image& x, double missing_fraction, double sigma,
                                          RngSeed seed) {
  if (!(missing_fraction >= 0.0 && missing_fraction < 1.0))
    throw InvalidArgument("missing fraction must be in [0, 1)");
  DegradationSpec::require_sigma(sigma);
  Rng rng(seed);
  const std::size_t n = x.size();
  const auto missing = static_cast<std::size_t>(std::llround(missing_fraction * static_cast<double>(n)));

  // Partial Fisher-Yates: the first `missing` entries form the dropped set.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < missing; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(order[i], order[j]);
  }
  Image mask(x.height(), x.width(), 1.0);
  for (std::size_t i = 0; i < missing; ++i) mask[order[i]] = 0.0;

  Image y = x;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i] == 0.0)
      y[i] = 0.0;
    else if (sigma > 0.0)
      y[i] += sigma * rng.normal();
  }
  return {std::move(y), std::move(mask)};
}

/// Applies a DegradationSpec. For the inpaint variant the stored mask is used.
inline Image apply_degradation(const Image& x, const DegradationSpec& spec, RngSeed seed) {
  if (spec.variant == DegradationSpec::Variant::blur) return degrade_blur(x, *spec.kernel, spec.sigma, seed);
  const Image& m = *spec.mask;
  x.require_same(m, "apply_degradation");
  Rng rng(seed);
  Image y = x;
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = m[i] == 0.0 ? 0.0 : y[i] + (spec.sigma > 0.0 ? spec.sigma * rng.normal() : 0.0);
  return y;
}

}  // namespace pnp
