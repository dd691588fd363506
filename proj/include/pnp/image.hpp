#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pnp/error.hpp"

namespace pnp {

/// Gray-scale raster, row-major, intensities in [0, 255] for clean images.
/// Intermediate iterates may leave that range; only final outputs are clipped.
class Image {
 public:
  Image() = default;
  Image(int height, int width, double fill = 0.0)
      : height_(checked_dim(height)), width_(checked_dim(width)),
        data_(static_cast<std::size_t>(height) * width, fill) {}
  Image(int height, int width, std::vector<double> data)
      : height_(checked_dim(height)), width_(checked_dim(width)), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(height_) * width_)
      throw DimensionError("image data length does not match " + shape_string());
  }

  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * width_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * width_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  [[nodiscard]] std::span<double> pixels() { return data_; }
  [[nodiscard]] std::span<const double> pixels() const { return data_; }
  [[nodiscard]] const std::vector<double>& vec() const { return data_; }

  [[nodiscard]] bool same_shape(const Image& o) const {
    return height_ == o.height_ && width_ == o.width_;
  }
  [[nodiscard]] std::string shape_string() const {
    return std::to_string(height_) + "x" + std::to_string(width_);
  }

  [[nodiscard]] bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Image& operator+=(const Image& o) {
    require_same(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Image& operator-=(const Image& o) {
    require_same(o, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Image& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }
  Image& operator+=(double s) {
    for (double& v : data_) v += s;
    return *this;
  }

  friend Image operator+(Image a, const Image& b) { return a += b; }
  friend Image operator-(Image a, const Image& b) { return a -= b; }
  friend Image operator*(Image a, double s) { return a *= s; }
  friend Image operator*(double s, Image a) { return a *= s; }
  friend bool operator==(const Image&, const Image&) = default;

  void require_same(const Image& o, const char* what) const {
    if (!same_shape(o))
      throw DimensionError(std::string(what) + ": shape " + shape_string() + " vs " +
                           o.shape_string());
  }

 private:
  static int checked_dim(int d) {
    if (d <= 0) throw DimensionError("image dimensions must be positive");
    return d;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

inline double sum(const Image& a) { return std::accumulate(a.vec().begin(), a.vec().end(), 0.0); }

inline double mean(const Image& a) { return sum(a) / static_cast<double>(a.size()); }

inline double dot(const Image& a, const Image& b) {
  a.require_same(b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(const Image& a) { return dot(a, a); }

inline double l2_norm(const Image& a) { return std::sqrt(squared_norm(a)); }

inline double max_abs(const Image& a) {
  double m = 0.0;
  for (double v : a.vec()) m = std::max(m, std::abs(v));
  return m;
}

inline double max_abs_diff(const Image& a, const Image& b) {
  a.require_same(b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Elementwise product.
inline Image hadamard(Image a, const Image& b) {
  a.require_same(b, "hadamard");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= b[i];
  return a;
}

inline Image clip(Image a, double lo = 0.0, double hi = 255.0) {
  for (double& v : a.pixels()) v = std::clamp(v, lo, hi);
  return a;
}

/// Sub-window copy. Throws when the window leaves the image.
inline Image crop(const Image& a, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || height <= 0 || width <= 0 || top + height > a.height() ||
      left + width > a.width())
    throw DimensionError("crop window outside " + a.shape_string());
  Image out(height, width);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) out(r, c) = a(top + r, left + c);
  return out;
}

/// Writes `src` into `dst` with its top-left corner at (top, left).
inline void paste(Image& dst, const Image& src, int top, int left) {
  if (top < 0 || left < 0 || top + src.height() > dst.height() ||
      left + src.width() > dst.width())
    throw DimensionError("paste window outside " + dst.shape_string());
  for (int r = 0; r < src.height(); ++r)
    for (int c = 0; c < src.width(); ++c) dst(top + r, left + c) = src(r, c);
}

/// Small real kernel. Physical blur kernels are non-negative and sum to one;
/// `signed_kernel` skips both checks (used by tests and internal operators).
class BlurKernel {
 public:
  BlurKernel() = default;

  /// Normalizes the weights to unit sum; rejects negative entries.
  static BlurKernel normalized(int kh, int kw, std::vector<double> weights) {
    BlurKernel k(kh, kw, std::move(weights));
    double total = 0.0;
    for (double w : k.weights_) {
      if (!std::isfinite(w)) throw InvalidArgument("kernel weight is not finite");
      if (w < 0.0) throw InvalidArgument("physical blur kernels must be non-negative");
      total += w;
    }
    if (total <= 0.0) throw InvalidArgument("kernel weights sum to zero");
    for (double& w : k.weights_) w /= total;
    return k;
  }

  static BlurKernel signed_kernel(int kh, int kw, std::vector<double> weights) {
    return BlurKernel(kh, kw, std::move(weights));
  }

  static BlurKernel identity() { return BlurKernel(1, 1, {1.0}); }

  [[nodiscard]] int height() const { return kh_; }
  [[nodiscard]] int width() const { return kw_; }
  double operator()(int r, int c) const { return weights_[static_cast<std::size_t>(r) * kw_ + c]; }
  [[nodiscard]] std::span<const double> weights() const { return weights_; }

  /// Anchor used by circular convolution.
  [[nodiscard]] int center_row() const { return kh_ / 2; }
  [[nodiscard]] int center_col() const { return kw_ / 2; }

  /// 180 degree rotation.
  [[nodiscard]] BlurKernel flipped() const {
    std::vector<double> w(weights_.rbegin(), weights_.rend());
    return BlurKernel(kh_, kw_, std::move(w));
  }

  friend bool operator==(const BlurKernel&, const BlurKernel&) = default;

 private:
  BlurKernel(int kh, int kw, std::vector<double> weights)
      : kh_(kh), kw_(kw), weights_(std::move(weights)) {
    if (kh <= 0 || kw <= 0) throw DimensionError("kernel dimensions must be positive");
    if (weights_.size() != static_cast<std::size_t>(kh) * kw)
      throw DimensionError("kernel weight count does not match its dimensions");
  }

  int kh_ = 0;
  int kw_ = 0;
  std::vector<double> weights_;
};

/// Complex spectrum of an image, same row-major layout as Image.
class ComplexPlane {
 public:
  ComplexPlane() = default;
  ComplexPlane(int height, int width)
      : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width) {}

  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }

  std::complex<double>& operator()(int r, int c) {
    return data_[static_cast<std::size_t>(r) * width_ + c];
  }
  std::complex<double> operator()(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * width_ + c];
  }
  std::complex<double>& operator[](std::size_t i) { return data_[i]; }
  std::complex<double> operator[](std::size_t i) const { return data_[i]; }
  [[nodiscard]] std::span<std::complex<double>> bins() { return data_; }
  [[nodiscard]] std::span<const std::complex<double>> bins() const { return data_; }

  [[nodiscard]] double real(int r, int c) const { return (*this)(r, c).real(); }
  [[nodiscard]] double imag(int r, int c) const { return (*this)(r, c).imag(); }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::complex<double>> data_;
};

}  // namespace pnp
