#pragma once

#include <algorithm>

#include "pnp/fft.hpp"
#include "pnp/image.hpp"

namespace pnp {

/// Margins that a valid-area convolution removes, split as evenly as possible.
/// For a kernel of height kh the full image has kh-1 extra rows: `top` above
/// the valid region and `bottom` below it (bottom >= top).
struct Margins {
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;

  static Margins for_kernel(const BlurKernel& k) {
    const int top = (k.height() - 1) / 2;
    const int left = (k.width() - 1) / 2;
    return {top, k.height() - 1 - top, left, k.width() - 1 - left};
  }
};

/// Correlation over positions where the kernel fully overlaps the image.
/// With flip=true the kernel is rotated by 180 degrees first, giving a true
/// convolution.
inline Image conv2d_valid(const Image& img, const BlurKernel& k, bool flip) {
  const int kh = k.height(), kw = k.width();
  if (img.height() < kh || img.width() < kw)
    throw DimensionError("kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " larger than image " + img.shape_string());
  const BlurKernel kk = flip ? k.flipped() : k;
  const int oh = img.height() - kh + 1, ow = img.width() - kw + 1;
  Image out(oh, ow);
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int a = 0; a < kh; ++a)
        for (int b = 0; b < kw; ++b) acc += img(r + a, c + b) * kk(a, b);
      out(r, c) = acc;
    }
  }
  return out;
}

/// Adjoint of conv2d_valid(., k, flip=true): maps a valid-size residual back
/// to the full image size (zero-padded correlation with the unflipped kernel).
inline Image conv2d_valid_adjoint(const Image& residual, const BlurKernel& k) {
  const int kh = k.height(), kw = k.width();
  Image padded(residual.height() + 2 * (kh - 1), residual.width() + 2 * (kw - 1));
  paste(padded, residual, kh - 1, kw - 1);
  return conv2d_valid(padded, k, false);
}

/// Convolution with wrap-around boundaries, kernel anchored at
/// (kh/2, kw/2) so that the 1x1 identity kernel is the identity map.
inline Image conv2d_circular(const Image& img, const BlurKernel& k) {
  const int h = img.height(), w = img.width();
  const int kh = k.height(), kw = k.width();
  const int cr = k.center_row(), cc = k.center_col();
  Image out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int a = 0; a < kh; ++a) {
        int sr = (r - (a - cr)) % h;
        if (sr < 0) sr += h;
        for (int b = 0; b < kw; ++b) {
          int sc = (c - (b - cc)) % w;
          if (sc < 0) sc += w;
          acc += k(a, b) * img(sr, sc);
        }
      }
      out(r, c) = acc;
    }
  }
  return out;
}

/// Adjoint of conv2d_circular: circular correlation with the same anchor.
inline Image conv2d_circular_adjoint(const Image& img, const BlurKernel& k) {
  const int h = img.height(), w = img.width();
  const int cr = k.center_row(), cc = k.center_col();
  Image out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int a = 0; a < k.height(); ++a) {
        const int sr = ((r + (a - cr)) % h + h) % h;
        for (int b = 0; b < k.width(); ++b) acc += k(a, b) * img(sr, ((c + (b - cc)) % w + w) % w);
      }
      out(r, c) = acc;
    }
  }
  return out;
}

/// Kernel placed on an H x W grid with its anchor at the origin (wrapped),
/// the embedding whose DFT diagonalizes conv2d_circular.
inline Image embed_kernel(const BlurKernel& k, int height, int width) {
  Image out(height, width);
  const int cr = k.center_row(), cc = k.center_col();
  for (int a = 0; a < k.height(); ++a) {
    for (int b = 0; b < k.width(); ++b) {
      int r = (a - cr) % height;
      if (r < 0) r += height;
      int c = (b - cc) % width;
      if (c < 0) c += width;
      out(r, c) += k(a, b);
    }
  }
  return out;
}

/// conv2d_circular evaluated through the DFT.
inline Image conv2d_circular_fft(const Image& img, const BlurKernel& k) {
  const ComplexPlane fi = dft2(img);
  const ComplexPlane fk = dft2(embed_kernel(k, img.height(), img.width()));
  ComplexPlane prod(img.height(), img.width());
  for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = fi[i] * fk[i];
  return idft2(prod);
}

/// Grows the image by the given margins, copying the nearest edge pixel.
inline Image pad_replicate(const Image& img, int top, int bottom, int left, int right) {
  if (top < 0 || bottom < 0 || left < 0 || right < 0)
    throw InvalidArgument("padding margins must be non-negative");
  const int h = img.height(), w = img.width();
  Image out(h + top + bottom, w + left + right);
  for (int r = 0; r < out.height(); ++r) {
    const int sr = std::clamp(r - top, 0, h - 1);
    for (int c = 0; c < out.width(); ++c) out(r, c) = img(sr, std::clamp(c - left, 0, w - 1));
  }
  return out;
}

inline Image pad_replicate(const Image& img, const Margins& m) {
  return pad_replicate(img, m.top, m.bottom, m.left, m.right);
}

/// Inverse of pad_replicate for the given margins.
inline Image valid_region(const Image& full, const Margins& m) {
  return crop(full, m.top, m.left, full.height() - m.top - m.bottom,
              full.width() - m.left - m.right);
}

}  // namespace pnp
