#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>

#include "pnp/conv.hpp"
#include "pnp/fft.hpp"
#include "pnp/image.hpp"

namespace pnp {

/// Autocorrelation r(d) = sum_p k(p) k(p + d): the kernel of K^T K.
/// Size (2kh-1) x (2kw-1); zero lag sits at the anchor (kh-1, kw-1).
inline BlurKernel autocorrelation(const BlurKernel& k) {
  const int kh = k.height(), kw = k.width();
  const int ah = 2 * kh - 1, aw = 2 * kw - 1;
  std::vector<double> w(static_cast<std::size_t>(ah) * aw, 0.0);
  for (int dr = -(kh - 1); dr <= kh - 1; ++dr) {
    for (int dc = -(kw - 1); dc <= kw - 1; ++dc) {
      double acc = 0.0;
      for (int r = std::max(0, -dr); r < std::min(kh, kh - dr); ++r)
        for (int c = std::max(0, -dc); c < std::min(kw, kw - dc); ++c) acc += k(r, c) * k(r + dr, c + dc);
      w[static_cast<std::size_t>(dr + kh - 1) * aw + (dc + kw - 1)] = acc;
    }
  }
  return BlurKernel::signed_kernel(ah, aw, std::move(w));
}

/// Precomputed spectra for the closed-form deblurring data step under
/// circular boundary conditions.
class FftSolverPlan {
 public:
  FftSolverPlan(const BlurKernel& k, int height, int width, double sigma, double rho)
      : height_(height), width_(width), sigma_(sigma), rho_(rho), weight_(sigma * sigma * rho) {
    if (!(rho > 0.0)) throw InvalidArgument("rho must be positive");
    if (!(sigma >= 0.0)) throw InvalidArgument("sigma must be non-negative");
    if (k.height() > height || k.width() > width)
      throw DimensionError("kernel does not fit the solver grid");
    kernel_ = dft2(embed_kernel(k, height, width));
    // autocorrelation anchored at (kh-1, kw-1) == its center_row/col
    gram_ = dft2(embed_kernel(autocorrelation(k), height, width));
    for (std::size_t i = 0; i < gram_.size(); ++i) {
      if (!(gram_[i].real() + weight_ > 0.0))
        throw InvalidArgument("data-step denominator is not positive; need sigma^2 * rho > 0 "
                              "or a kernel without spectral zeros");
    }
  }

  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] double sigma() const { return sigma_; }
  [[nodiscard]] double rho() const { return rho_; }
  /// sigma^2 * rho
  [[nodiscard]] double penalty_weight() const { return weight_; }
  /// DFT of the embedded kernel; its conjugate realizes K^T.
  [[nodiscard]] const ComplexPlane& kernel_spectrum() const { return kernel_; }
  /// DFT of the embedded K^T K kernel (real up to rounding).
  [[nodiscard]] const ComplexPlane& gram_spectrum() const { return gram_; }

 private:
  int height_, width_;
  double sigma_, rho_, weight_;
  ComplexPlane kernel_;
  ComplexPlane gram_;
};

inline FftSolverPlan build_plan(const BlurKernel& k, int height, int width, double sigma,
                                double rho) {
  return FftSolverPlan(k, height, width, sigma, rho);
}

/// Closed-form minimizer of (1/2 sigma^2)||Kx - y||^2 + (rho/2)||x - z + lambda||^2
/// with circular K:
///   x = F^-1[(conj(F k) F y + sigma^2 rho F(z - lambda)) / (F(K^T K) + sigma^2 rho)].
inline Image solve_data_fft(const FftSolverPlan& plan, const Image& y_full, const Image& z_hat,
                            const Image& lambda) {
  for (const Image* img : {&y_full, &z_hat, &lambda})
    if (img->height() != plan.height() || img->width() != plan.width())
      throw DimensionError("image " + img->shape_string() + " does not match the solver plan");
  const ComplexPlane fy = dft2(y_full);
  const ComplexPlane fd = dft2(z_hat - lambda);
  const auto& fk = plan.kernel_spectrum();
  const auto& fg = plan.gram_spectrum();
  const double w = plan.penalty_weight();
  ComplexPlane num(plan.height(), plan.width());
  for (std::size_t i = 0; i < num.size(); ++i)
    num[i] = (std::conj(fk[i]) * fy[i] + w * fd[i]) / (fg[i] + w);
  return idft2(num);
}

/// Dense circular-convolution matrix of k on an H x W grid (row-major pixels).
inline Eigen::MatrixXd circular_operator_matrix(const BlurKernel& k, int height, int width) {
  const int n = height * width;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  const int cr = k.center_row(), cc = k.center_col();
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      for (int a = 0; a < k.height(); ++a) {
        for (int b = 0; b < k.width(); ++b) {
          const int sr = ((r - (a - cr)) % height + height) % height;
          const int sc = ((c - (b - cc)) % width + width) % width;
          m(r * width + c, sr * width + sc) += k(a, b);
        }
      }
    }
  }
  return m;
}

/// Reference solve of (K^T K + sigma^2 rho I) x = K^T y + sigma^2 rho (z - lambda)
/// with K materialized densely. Only for small images (<= 24 x 24).
inline Image solve_data_direct(const BlurKernel& k, const Image& y, const Image& z_hat,
                               const Image& lambda, double sigma, double rho) {
  if (y.height() > 24 || y.width() > 24)
    throw DimensionError("solve_data_direct is limited to 24x24 images");
  y.require_same(z_hat, "solve_data_direct");
  y.require_same(lambda, "solve_data_direct");
  const int n = static_cast<int>(y.size());
  const Eigen::MatrixXd K = circular_operator_matrix(k, y.height(), y.width());
  const double w = sigma * sigma * rho;
  const Eigen::Map<const Eigen::VectorXd> yv(y.pixels().data(), n);
  const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(z_hat.pixels().data(), n) -
                            Eigen::Map<const Eigen::VectorXd>(lambda.pixels().data(), n);
  const Eigen::MatrixXd A = K.transpose() * K + w * Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd rhs = K.transpose() * yv + w * d;
  const Eigen::VectorXd x = A.partialPivLu().solve(rhs);
  return Image(y.height(), y.width(), std::vector<double>(x.data(), x.data() + n));
}

/// Gradient of (1/2 sigma^2)||Kx - y||^2 + (rho/2)||x - z + lambda||^2 for circular K.
inline Image data_objective_gradient(const BlurKernel& k, const Image& x, const Image& y,
                                     const Image& z_hat, const Image& lambda, double sigma,
                                     double rho) {
  Image g = conv2d_circular_adjoint(conv2d_circular(x, k) - y, k);
  g *= 1.0 / (sigma * sigma);
  Image prior = x - z_hat + lambda;
  prior *= rho;
  return g + prior;
}

/// Data objective value for circular K.
inline double data_objective(const BlurKernel& k, const Image& x, const Image& y,
                             const Image& z_hat, const Image& lambda, double sigma, double rho) {
  return squared_norm(conv2d_circular(x, k) - y) / (2.0 * sigma * sigma) +
         0.5 * rho * squared_norm(x - z_hat + lambda);
}

/// Full-size observation for the FFT step: the valid region holds the
/// measurement, the margin is synthesized by circularly blurring the current
/// estimate.
inline Image estimate_boundary(const Image& x_hat, const BlurKernel& k, const Image& y_valid) {
  const Margins m = Margins::for_kernel(k);
  if (y_valid.height() + m.top + m.bottom != x_hat.height() ||
      y_valid.width() + m.left + m.right != x_hat.width())
    throw DimensionError("observation " + y_valid.shape_string() + " does not fit estimate " +
                         x_hat.shape_string() + " for this kernel");
  Image y_full = conv2d_circular_fft(x_hat, k);
  paste(y_full, y_valid, m.top, m.left);
  return y_full;
}

// ---------------------------------------------------------------- masked data step

/// (1/2 sigma^2)||M x - y||^2 + (rho/2)||x - z + lambda||^2 for a binary mask M.
inline double masked_objective(const Image& x, const Image& y, const Image& mask, double sigma,
                               double rho, const Image& z_hat, const Image& lambda) {
  double data = 0.0, prior = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = mask[i] * x[i] - y[i];
    const double p = x[i] - z_hat[i] + lambda[i];
    data += r * r;
    prior += p * p;
  }
  return data / (2.0 * sigma * sigma) + 0.5 * rho * prior;
}

namespace detail {

inline void check_masked_inputs(const Image& y, const Image& mask, const Image& z_hat,
                                const Image& lambda, double sigma, double rho) {
  y.require_same(mask, "masked solve");
  y.require_same(z_hat, "masked solve");
  y.require_same(lambda, "masked solve");
  if (!(sigma >= 0.0)) throw InvalidArgument("sigma must be non-negative");
  if (!(rho > 0.0)) throw InvalidArgument("rho must be positive");
  for (double v : mask.vec())
    if (v != 0.0 && v != 1.0) throw InvalidArgument("mask entries must be exactly 0 or 1");
}

}  // namespace detail

/// Exact per-pixel minimizer x_i = (m_i y_i / sigma^2 + rho (z_i - lambda_i)) / (m_i / sigma^2 + rho).
/// sigma = 0 pins observed pixels to y.
inline Image solve_data_mask_exact(const Image& y, const Image& mask, double sigma, double rho,
                                   const Image& z_hat, const Image& lambda) {
  detail::check_masked_inputs(y, mask, z_hat, lambda, sigma, rho);
  Image x(y.height(), y.width());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double prior = z_hat[i] - lambda[i];
    if (mask[i] == 0.0)
      x[i] = prior;
    else if (sigma == 0.0)
      x[i] = y[i];
    else {
      const double a = 1.0 / (sigma * sigma);
      x[i] = (a * y[i] + rho * prior) / (a + rho);
    }
  }
  return x;
}

struct GdOptions {
  int steps = 200;
  std::optional<double> step_size;  // default 1 / (1/sigma^2 + rho)
  std::optional<Image> start;       // default z_hat - lambda
  int divergence_patience = 10;
};

struct GdReport {
  Image x;
  double initial_gradient_norm = 0.0;
  double final_gradient_norm = 0.0;
  std::vector<double> energies;  // objective before the first step and after each step
};

/// Gradient descent on the masked data objective. With sigma = 0 observed
/// pixels are pinned to y and only missing pixels are updated.
inline GdReport solve_data_gd_report(const Image& y, const Image& mask, double sigma, double rho,
                                     const Image& z_hat, const Image& lambda,
                                     const GdOptions& opt = {}) {
  detail::check_masked_inputs(y, mask, z_hat, lambda, sigma, rho);
  if (opt.steps < 1) throw InvalidArgument("gradient descent needs at least one step");
  const bool pinned = sigma == 0.0;
  const double data_w = pinned ? 0.0 : 1.0 / (sigma * sigma);
  const double step = opt.step_size.value_or(1.0 / (data_w + rho));
  if (!(step > 0.0)) throw InvalidArgument("step size must be positive");

  GdReport rep;
  rep.x = opt.start ? *opt.start : z_hat - lambda;
  rep.x.require_same(y, "gd start");
  if (pinned)
    for (std::size_t i = 0; i < y.size(); ++i)
      if (mask[i] != 0.0) rep.x[i] = y[i];

  auto gradient = [&](const Image& x) {
    Image g(x.height(), x.width());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double data = (pinned || mask[i] == 0.0) ? 0.0 : data_w * (x[i] - y[i]);
      const double free = (pinned && mask[i] != 0.0) ? 0.0 : 1.0;
      g[i] = free * (data + rho * (x[i] - z_hat[i] + lambda[i]));
    }
    return g;
  };
  auto energy = [&](const Image& x) {
    double e = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double p = x[i] - z_hat[i] + lambda[i];
      const double r = mask[i] * (x[i] - y[i]);
      e += 0.5 * rho * p * p + 0.5 * data_w * r * r;
    }
    return e;
  };

  Image g = gradient(rep.x);
  rep.initial_gradient_norm = l2_norm(g);
  rep.energies.push_back(energy(rep.x));
  int rising = 0;
  for (int s = 0; s < opt.steps; ++s) {
    for (std::size_t i = 0; i < rep.x.size(); ++i) rep.x[i] -= step * g[i];
    rep.energies.push_back(energy(rep.x));
    const double e1 = rep.energies.back(), e0 = rep.energies[rep.energies.size() - 2];
    if (!std::isfinite(e1)) throw DivergenceError("masked data step produced non-finite energy");
    rising = e1 > e0 ? rising + 1 : 0;
    if (rising >= opt.divergence_patience)
      throw DivergenceError("masked data step energy increased for " +
                            std::to_string(rising) + " consecutive steps");
    g = gradient(rep.x);
  }
  rep.final_gradient_norm = l2_norm(g);
  return rep;
}

inline Image solve_data_gd(const Image& y, const Image& mask, double sigma, double rho,
                           const Image& z_hat, const Image& lambda, const GdOptions& opt = {}) {
  return solve_data_gd_report(y, mask, sigma, rho, z_hat, lambda, opt).x;
}

}  // namespace pnp
