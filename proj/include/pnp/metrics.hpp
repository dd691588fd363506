#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "pnp/image.hpp"

namespace pnp {

inline double mse(const Image& a, const Image& b) {
  a.require_same(b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

/// Peak signal-to-noise ratio in dB; +infinity when the images are equal.
inline double psnr(const Image& a, const Image& b, double peak = 255.0) {
  if (!(peak > 0.0)) throw InvalidArgument("psnr peak must be positive");
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

struct SsimParams {
  int window = 8;
  double peak = 255.0;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean SSIM over all window x window blocks (stride 1, uniform weights,
/// population statistics), C1 = (k1*peak)^2, C2 = (k2*peak)^2.
inline double ssim(const Image& a, const Image& b, const SsimParams& p = {}) {
  a.require_same(b, "ssim");
  const int n = p.window;
  if (a.height() < n || a.width() < n)
    throw DimensionError("ssim needs images of at least " + std::to_string(n) + "x" +
                         std::to_string(n));
  const int h = a.height(), w = a.width();
  const int sw = w + 1;
  // Summed-area tables of a, b, a^2, b^2, ab.
  std::vector<double> sa((h + 1) * sw), sb(sa.size()), saa(sa.size()), sbb(sa.size()),
      sab(sa.size());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double x = a(r, c), y = b(r, c);
      const int i = (r + 1) * sw + (c + 1);
      const int up = r * sw + (c + 1), left = (r + 1) * sw + c, diag = r * sw + c;
      sa[i] = x + sa[up] + sa[left] - sa[diag];
      sb[i] = y + sb[up] + sb[left] - sb[diag];
      saa[i] = x * x + saa[up] + saa[left] - saa[diag];
      sbb[i] = y * y + sbb[up] + sbb[left] - sbb[diag];
      sab[i] = x * y + sab[up] + sab[left] - sab[diag];
    }
  }
  auto box = [&](const std::vector<double>& s, int r, int c) {
    return s[(r + n) * sw + (c + n)] - s[r * sw + (c + n)] - s[(r + n) * sw + c] + s[r * sw + c];
  };
  const double c1 = (p.k1 * p.peak) * (p.k1 * p.peak);
  const double c2 = (p.k2 * p.peak) * (p.k2 * p.peak);
  const double inv = 1.0 / static_cast<double>(n * n);
  double total = 0.0;
  for (int r = 0; r + n <= h; ++r) {
    for (int c = 0; c + n <= w; ++c) {
      const double ma = box(sa, r, c) * inv, mb = box(sb, r, c) * inv;
      const double va = box(saa, r, c) * inv - ma * ma;
      const double vb = box(sbb, r, c) * inv - mb * mb;
      const double cov = box(sab, r, c) * inv - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  }
  return total / static_cast<double>((h - n + 1) * (w - n + 1));
}

}  // namespace pnp
