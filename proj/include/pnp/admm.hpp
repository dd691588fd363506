#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <locale>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pnp/conv.hpp"
#include "pnp/denoiser.hpp"
#include "pnp/image.hpp"
#include "pnp/metrics.hpp"
#include "pnp/solver.hpp"

namespace pnp {

struct TraceRow {
  int iter = 0;
  double primal_residual = 0.0;  // ||x_hat - z_hat||_2
  double psnr = std::numeric_limits<double>::quiet_NaN();  // vs truth on the valid area, NaN without truth
  double wall_ms = 0.0;          // elapsed since the iteration loop started
};

using Trace = std::vector<TraceRow>;

/// The split-variable iterate (x_hat, z_hat, lambda) with fixed penalty rho.
struct AdmmState {
  Image x_hat;
  Image z_hat;
  Image lambda;
  double rho = 1.0 / 49.0;
  int iteration = 0;
  Trace trace;
};

enum class MaskSolver { gradient_descent, exact };

struct RestoreConfig {
  double sigma_r = 7.0;
  std::optional<double> rho;  // 1/sigma_r^2 when unset
  int iterations = 75;
  const Denoiser* denoiser = nullptr;
  std::optional<Image> track_truth;  // ground truth, full size or valid size
  MaskSolver mask_solver = MaskSolver::gradient_descent;
  int gd_steps = 200;
  bool record_timing = true;

  [[nodiscard]] double effective_rho() const { return rho ? *rho : 1.0 / (sigma_r * sigma_r); }

  void validate() const {
    if (iterations < 1) throw InvalidArgument("iterations must be >= 1");
    if (!(effective_rho() > 0.0)) throw InvalidArgument("rho must be positive");
    if (denoiser == nullptr) throw InvalidArgument("restore config has no denoiser");
    if (gd_steps < 1) throw InvalidArgument("gd steps must be >= 1");
  }

  static RestoreConfig deblur_defaults(const Denoiser& d) {
    RestoreConfig c;
    c.denoiser = &d;
    c.iterations = 75;
    return c;
  }
  static RestoreConfig inpaint_defaults(const Denoiser& d) {
    RestoreConfig c;
    c.denoiser = &d;
    c.iterations = 300;
    return c;
  }
};

struct RestoreResult {
  Image image;
  Trace trace;
};

namespace detail {

class Stopwatch {
 public:
  explicit Stopwatch(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  [[nodiscard]] double ms() const {
    if (!enabled_) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

// PSNR of the valid area of `x_full` against a truth image that is either
// full size or already cropped to the valid area.
inline double valid_psnr(const Image& x_full, const Image& truth, const Margins& m) {
  const Image xv = valid_region(x_full, m);
  if (truth.same_shape(x_full)) return psnr(xv, valid_region(truth, m));
  return psnr(xv, truth);
}

inline void finish_step(AdmmState& s, const Denoiser& denoiser) {
  s.z_hat = denoiser.denoise(s.x_hat + s.lambda);
  if (!s.z_hat.same_shape(s.x_hat)) throw DimensionError("denoiser changed the image size");
  s.lambda += s.x_hat - s.z_hat;
  if (!s.x_hat.all_finite() || !s.z_hat.all_finite() || !s.lambda.all_finite())
    throw DivergenceError("ADMM iterate became non-finite at iteration " +
                          std::to_string(s.iteration + 1));
  ++s.iteration;
}

}  // namespace detail

using DataSolve = std::function<Image(const Image& y_full, const Image& z_hat, const Image& lambda)>;

/// One deblurring iteration with a caller-supplied data solve: re-estimate
/// the observation margin from x_hat, solve the data step, denoise
/// x_hat + lambda, update lambda += x_hat - z_hat.
inline void admm_step_deblur_with(AdmmState& s, const DataSolve& solve, const Image& y_valid,
                                  const BlurKernel& k, const Denoiser& denoiser,
                                  const std::optional<Image>& truth = std::nullopt,
                                  double elapsed_ms = 0.0) {
  const Image y_full = estimate_boundary(s.x_hat, k, y_valid);
  s.x_hat = solve(y_full, s.z_hat, s.lambda);
  detail::finish_step(s, denoiser);
  TraceRow row{s.iteration, l2_norm(s.x_hat - s.z_hat),
               std::numeric_limits<double>::quiet_NaN(), elapsed_ms};
  if (truth) row.psnr = detail::valid_psnr(s.x_hat, *truth, Margins::for_kernel(k));
  s.trace.push_back(row);
}

inline void admm_step_deblur(AdmmState& s, const FftSolverPlan& plan, const Image& y_valid,
                             const BlurKernel& k, const Denoiser& denoiser,
                             const std::optional<Image>& truth = std::nullopt,
                             double elapsed_ms = 0.0) {
  if (s.x_hat.height() != plan.height() || s.x_hat.width() != plan.width())
    throw DimensionError("ADMM state does not match the solver plan");
  admm_step_deblur_with(
      s, [&](const Image& y, const Image& z, const Image& l) { return solve_data_fft(plan, y, z, l); },
      y_valid, k, denoiser, truth, elapsed_ms);
}

/// x_hat = z_hat = replicate-padded observation, lambda = 0.
inline AdmmState init_deblur_state(const Image& y_valid, const BlurKernel& k, double rho) {
  AdmmState s;
  s.x_hat = pad_replicate(y_valid, Margins::for_kernel(k));
  s.z_hat = s.x_hat;
  s.lambda = Image(s.x_hat.height(), s.x_hat.width());
  s.rho = rho;
  return s;
}

/// Non-blind deblurring of a valid-area observation. Returns the valid area
/// of x_hat, clipped to [0, 255].
inline RestoreResult restore_deblur(const Image& y, const BlurKernel& k, double sigma,
                                    const RestoreConfig& cfg) {
  cfg.validate();
  const double rho = cfg.effective_rho();
  AdmmState s = init_deblur_state(y, k, rho);
  const FftSolverPlan plan(k, s.x_hat.height(), s.x_hat.width(), sigma, rho);
  const detail::Stopwatch clock(cfg.record_timing);
  for (int it = 0; it < cfg.iterations; ++it) {
    admm_step_deblur(s, plan, y, k, *cfg.denoiser, cfg.track_truth);
    s.trace.back().wall_ms = clock.ms();
  }
  return {clip(valid_region(s.x_hat, Margins::for_kernel(k))), std::move(s.trace)};
}

/// Fills missing pixels (mask 0) with the median of known neighbours in a
/// window x window box, one Jacobi pass at a time, until none are missing.
/// Even-sized neighbourhoods use the mean of the two middle values.
inline Image median_fill(const Image& y, const Image& mask, int window = 3, int passes = -1) {
  y.require_same(mask, "median_fill");
  if (window < 3 || window % 2 == 0) throw InvalidArgument("median window must be odd and >= 3");
  if (passes < 0) passes = std::max(y.height(), y.width());
  Image out = y;
  std::vector<char> known(mask.size());
  std::size_t missing = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0.0 && mask[i] != 1.0) throw InvalidArgument("mask entries must be 0 or 1");
    known[i] = mask[i] != 0.0;
    missing += known[i] ? 0 : 1;
  }
  const int h = y.height(), w = y.width(), rad = window / 2;
  std::vector<double> vals;
  for (int pass = 0; pass < passes && missing > 0; ++pass) {
    std::vector<std::pair<std::size_t, double>> filled;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * w + c;
        if (known[i]) continue;
        vals.clear();
        for (int dr = -rad; dr <= rad; ++dr) {
          for (int dc = -rad; dc <= rad; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
            const std::size_t j = static_cast<std::size_t>(rr) * w + cc;
            if (known[j]) vals.push_back(out[j]);
          }
        }
        if (vals.empty()) continue;
        std::sort(vals.begin(), vals.end());
        const std::size_t n = vals.size();
        filled.emplace_back(i, n % 2 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]));
      }
    }
    for (const auto& [i, v] : filled) {
      out[i] = v;
      known[i] = 1;
    }
    missing -= filled.size();
  }
  if (missing > 0)
    throw InvalidArgument("median fill left " + std::to_string(missing) +
                          " pixels unfilled (empty mask or too few passes)");
  return out;
}

/// Plug-and-play inpainting: median-filled start, masked data step (200
/// gradient steps by default, or the exact per-pixel solve), denoiser,
/// multiplier update. Returns x_hat clipped to [0, 255].
inline RestoreResult restore_inpaint(const Image& y, const Image& mask, double sigma,
                                     const RestoreConfig& cfg) {
  cfg.validate();
  y.require_same(mask, "restore_inpaint");
  const double rho = cfg.effective_rho();
  AdmmState s;
  s.x_hat = median_fill(y, mask);
  s.z_hat = s.x_hat;
  s.lambda = Image(y.height(), y.width());
  s.rho = rho;
  const detail::Stopwatch clock(cfg.record_timing);
  for (int it = 0; it < cfg.iterations; ++it) {
    if (cfg.mask_solver == MaskSolver::exact) {
      s.x_hat = solve_data_mask_exact(y, mask, sigma, rho, s.z_hat, s.lambda);
    } else {
      GdOptions opt;
      opt.steps = cfg.gd_steps;
      opt.start = s.x_hat;
      s.x_hat = solve_data_gd(y, mask, sigma, rho, s.z_hat, s.lambda, opt);
    }
    detail::finish_step(s, *cfg.denoiser);
    TraceRow row{s.iteration, l2_norm(s.x_hat - s.z_hat),
                 std::numeric_limits<double>::quiet_NaN(), clock.ms()};
    if (cfg.track_truth) row.psnr = psnr(s.x_hat, *cfg.track_truth);
    s.trace.push_back(row);
  }
  return {clip(s.x_hat), std::move(s.trace)};
}

/// CSV with header "iter,primal_residual,psnr,wall_ms", six significant digits.
inline std::string export_trace(const Trace& trace) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out << "iter,primal_residual,psnr,wall_ms\n" << std::setprecision(6);
  for (const auto& r : trace)
    out << r.iter << ',' << r.primal_residual << ',' << r.psnr << ',' << r.wall_ms << '\n';
  return out.str();
}

inline Trace parse_trace(const std::string& csv) {
  std::istringstream in(csv);
  in.imbue(std::locale::classic());
  std::string line;
  if (!std::getline(in, line) || line != "iter,primal_residual,psnr,wall_ms")
    throw IoError("trace CSV header missing");
  Trace t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string f[4];
    for (auto& s : f)
      if (!std::getline(row, s, ',')) throw IoError("trace CSV row has fewer than 4 fields");
    t.push_back({std::stoi(f[0]), std::strtod(f[1].c_str(), nullptr),
                 std::strtod(f[2].c_str(), nullptr), std::strtod(f[3].c_str(), nullptr)});
  }
  return t;
}

}  // namespace pnp
