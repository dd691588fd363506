#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <locale>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pnp/admm.hpp"
#include "pnp/conv.hpp"
#include "pnp/degrade.hpp"
#include "pnp/denoiser.hpp"
#include "pnp/io.hpp"
#include "pnp/metrics.hpp"
#include "pnp/rng.hpp"

namespace pnp {

enum class BenchTask { deblur, inpaint };

inline std::string to_string(BenchTask t) { return t == BenchTask::deblur ? "deblur" : "inpaint"; }

struct BenchMethod {
  std::string name;
  const Denoiser* denoiser = nullptr;
  int iterations = 75;
  double sigma_r = 7.0;
  std::optional<double> rho;
  MaskSolver mask_solver = MaskSolver::gradient_descent;
  int gd_steps = 200;
};

struct BenchmarkSpec {
  std::string dataset = "desk";
  std::vector<std::filesystem::path> images;
  std::vector<std::filesystem::path> kernels;  // ignored for inpainting
  std::vector<double> sigmas = {2.55, 5.10, 7.65, 10.2};
  BenchTask task = BenchTask::deblur;
  double missing_fraction = 0.8;
  std::vector<BenchMethod> methods;
  std::uint64_t seed = 0;
  int crop = 0;  // side of a center crop, 0 keeps the whole image
  int workers = 1;
  bool record_timing = true;

  void validate() const {
    if (images.empty()) throw InvalidArgument("benchmark image manifest is empty");
    if (task == BenchTask::deblur && kernels.empty())
      throw InvalidArgument("benchmark kernel manifest is empty");
    if (sigmas.empty()) throw InvalidArgument("benchmark sigma list is empty");
    for (double s : sigmas)
      if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidArgument("benchmark sigmas must be >= 0");
    if (methods.empty()) throw InvalidArgument("benchmark has no methods");
    for (const auto& m : methods) {
      if (m.denoiser == nullptr) throw InvalidArgument("method " + m.name + " has no denoiser");
      if (m.iterations < 1) throw InvalidArgument("method " + m.name + " needs iterations >= 1");
    }
    if (crop < 0) throw InvalidArgument("crop must be >= 0");
    if (workers < 1) throw InvalidArgument("workers must be >= 1");
    if (task == BenchTask::inpaint && !(missing_fraction >= 0.0 && missing_fraction < 1.0))
      throw InvalidArgument("missing fraction must be in [0, 1)");
  }
};

/// Three significant digits with trailing zeros kept: 2.55, 5.10, 10.2.
inline std::string sigma_label(double sigma) {
  std::ostringstream s;
  s.imbue(std::locale::classic());
  s << std::showpoint << std::setprecision(3) << sigma;
  return s.str();
}

inline std::uint64_t tuple_seed(const std::string& image, const std::string& kernel, double sigma,
                                std::uint64_t global) {
  std::ostringstream s;
  s.imbue(std::locale::classic());
  s << image << '\x1f' << kernel << '\x1f' << std::setprecision(17) << sigma << '\x1f' << global;
  return fnv1a(s.str());
}

struct ItemResult {
  std::string method;
  std::string image;
  std::string kernel;  // "-" for inpainting
  double sigma = 0.0;
  double psnr = std::numeric_limits<double>::quiet_NaN();
  double ssim = std::numeric_limits<double>::quiet_NaN();
  double input_psnr = std::numeric_limits<double>::quiet_NaN();
  double ms_per_iter = 0.0;
  bool ok = false;
  std::string error;
};

struct ResultRow {
  std::string method;
  std::string dataset;
  double sigma = 0.0;
  double mean_psnr = std::numeric_limits<double>::quiet_NaN();
  double mean_ssim = std::numeric_limits<double>::quiet_NaN();
  double mean_ms_per_iter = std::numeric_limits<double>::quiet_NaN();
  double mean_input_psnr = std::numeric_limits<double>::quiet_NaN();
  int items = 0;
  int failures = 0;

  [[nodiscard]] bool valid() const { return failures == 0 && items > 0; }
};

struct ResultTable {
  std::vector<ResultRow> rows;  // methods in spec order, sigmas in spec order
  std::vector<ItemResult> items;

  [[nodiscard]] const ResultRow* find(const std::string& method, double sigma) const {
    for (const auto& r : rows)
      if (r.method == method && r.sigma == sigma) return &r;
    return nullptr;
  }

  /// Wall time covers the iteration loop only (no image I/O).
  [[nodiscard]] std::string to_csv() const {
    std::ostringstream out;
    out.imbue(std::locale::classic());
    out << "method,dataset,sigma,psnr,ssim,ms_per_iter,input_psnr,items,failures,valid\n";
    out << std::setprecision(6);
    for (const auto& r : rows)
      out << r.method << ',' << r.dataset << ',' << sigma_label(r.sigma) << ',' << r.mean_psnr
          << ',' << r.mean_ssim << ',' << r.mean_ms_per_iter << ',' << r.mean_input_psnr << ','
          << r.items << ',' << r.failures << ',' << (r.valid() ? 1 : 0) << '\n';
    return out.str();
  }

  /// Methods down, sigmas across; one block each for PSNR, SSIM and ms/iter.
  /// Invalid cells print as "invalid".
  [[nodiscard]] std::string to_text() const {
    std::vector<std::string> methods;
    std::vector<double> sigmas;
    for (const auto& r : rows) {
      if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
        methods.push_back(r.method);
      if (std::find(sigmas.begin(), sigmas.end(), r.sigma) == sigmas.end())
        sigmas.push_back(r.sigma);
    }
    std::size_t name_w = 6;
    for (const auto& m : methods) name_w = std::max(name_w, m.size());
    std::ostringstream out;
    out.imbue(std::locale::classic());
    auto block = [&](const std::string& title, int prec, auto field) {
      out << std::left << std::setw(static_cast<int>(name_w)) << title;
      for (double s : sigmas) out << "  " << std::right << std::setw(9) << sigma_label(s);
      out << '\n';
      for (const auto& m : methods) {
        out << std::left << std::setw(static_cast<int>(name_w)) << m;
        for (double s : sigmas) {
          const ResultRow* r = find(m, s);
          out << "  " << std::right << std::setw(9);
          if (r == nullptr || !r->valid()) {
            out << "invalid";
          } else {
            std::ostringstream cell;
            cell.imbue(std::locale::classic());
            cell << std::fixed << std::setprecision(prec) << field(*r);
            out << cell.str();
          }
        }
        out << '\n';
      }
      out << '\n';
    };
    block("PSNR", 2, [](const ResultRow& r) { return r.mean_psnr; });
    block("SSIM", 3, [](const ResultRow& r) { return r.mean_ssim; });
    block("ms/it", 2, [](const ResultRow& r) { return r.mean_ms_per_iter; });
    return out.str();
  }
};

namespace detail {

inline Image center_crop(const Image& img, int side) {
  if (side <= 0) return img;
  const int h = std::min(side, img.height()), w = std::min(side, img.width());
  return crop(img, (img.height() - h) / 2, (img.width() - w) / 2, h, w);
}

template <typename T>
struct Loaded {
  std::optional<T> value;
  std::string error;
};

template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const int count = static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(workers)));
  for (int t = 0; t < count; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Degrade-restore-score over every (image, kernel, sigma, method). Restored
/// images are scored after rounding to 8 bits, as they would be written to
/// PGM; deblurring is scored on the valid area.
inline ResultTable run_benchmark(const BenchmarkSpec& spec) {
  spec.validate();
  std::vector<detail::Loaded<Image>> images(spec.images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    try {
      images[i].value = detail::center_crop(read_pgm(spec.images[i]), spec.crop);
    } catch (const std::exception& e) {
      images[i].error = e.what();
    }
  }
  const bool deblur = spec.task == BenchTask::deblur;
  std::vector<detail::Loaded<BlurKernel>> kernels(deblur ? spec.kernels.size() : 1);
  if (deblur) {
    for (std::size_t i = 0; i < kernels.size(); ++i) {
      try {
        kernels[i].value = read_kernel(spec.kernels[i]);
      } catch (const std::exception& e) {
        kernels[i].error = e.what();
      }
    }
  }

  const std::size_t ni = images.size(), nk = kernels.size(), ns = spec.sigmas.size(),
                    nm = spec.methods.size();
  std::vector<ItemResult> items(ni * nk * ns * nm);
  auto run_item = [&](std::size_t idx) {
    const std::size_t m = idx % nm, s = (idx / nm) % ns, k = (idx / (nm * ns)) % nk,
                      i = idx / (nm * ns * nk);
    ItemResult& out = items[idx];
    const BenchMethod& method = spec.methods[m];
    out.method = method.name;
    out.image = spec.images[i].string();
    out.kernel = deblur ? spec.kernels[k].string() : "-";
    out.sigma = spec.sigmas[s];
    try {
      if (!images[i].value) throw IoError(images[i].error);
      if (deblur && !kernels[k].value) throw IoError(kernels[k].error);
      const Image& truth = *images[i].value;
      const RngSeed seed{tuple_seed(out.image, out.kernel, out.sigma, spec.seed)};
      RestoreConfig cfg;
      cfg.sigma_r = method.sigma_r;
      cfg.rho = method.rho;
      cfg.iterations = method.iterations;
      cfg.denoiser = method.denoiser;
      cfg.mask_solver = method.mask_solver;
      cfg.gd_steps = method.gd_steps;
      cfg.record_timing = spec.record_timing;
      Image reference, restored;
      RestoreResult res;
      if (deblur) {
        const BlurKernel& kern = *kernels[k].value;
        const Image y = degrade_blur(truth, kern, out.sigma, seed);
        reference = valid_region(truth, Margins::for_kernel(kern));
        out.input_psnr = psnr(y, reference);
        res = restore_deblur(y, kern, out.sigma, cfg);
      } else {
        const InpaintObservation obs = degrade_inpaint(truth, spec.missing_fraction, out.sigma, seed);
        reference = truth;
        out.input_psnr = psnr(median_fill(obs.observed, obs.mask), reference);
        res = restore_inpaint(obs.observed, obs.mask, out.sigma, cfg);
      }
      restored = res.image;
      for (double& v : restored.pixels()) v = detail::quantize_u8(v);
      out.psnr = psnr(restored, reference);
      out.ssim = ssim(restored, reference);
      out.ms_per_iter = res.trace.empty() ? 0.0 : res.trace.back().wall_ms / res.trace.size();
      out.ok = true;
    } catch (const std::exception& e) {
      out.ok = false;
      out.error = e.what();
    }
  };
  detail::parallel_for(items.size(), spec.workers, run_item);

  ResultTable table;
  for (std::size_t m = 0; m < nm; ++m) {
    for (std::size_t s = 0; s < ns; ++s) {
      ResultRow row;
      row.method = spec.methods[m].name;
      row.dataset = spec.dataset;
      row.sigma = spec.sigmas[s];
      double p = 0, q = 0, t = 0, in = 0;
      for (std::size_t i = 0; i < ni; ++i) {
        for (std::size_t k = 0; k < nk; ++k) {
          const ItemResult& it = items[((i * nk + k) * ns + s) * nm + m];
          if (!it.ok) {
            ++row.failures;
            continue;
          }
          ++row.items;
          p += it.psnr;
          q += it.ssim;
          t += it.ms_per_iter;
          in += it.input_psnr;
        }
      }
      if (row.items > 0) {
        row.mean_psnr = p / row.items;
        row.mean_ssim = q / row.items;
        row.mean_ms_per_iter = t / row.items;
        row.mean_input_psnr = in / row.items;
      }
      table.rows.push_back(row);
    }
  }
  table.items = std::move(items);
  return table;
}

/// Direct gradient descent on the MAP objective with the denoising
/// autoencoder residual standing in for the prior gradient:
///   x <- x - step * (K^T (K x - y) / sigma^2 - (R(x + eta) - x) / sigma_r^2),
/// eta ~ N(0, sigma_r^2) redrawn each step. K is the valid convolution, so x
/// lives on the full (padded) grid. The trace's primal_residual column holds
/// ||x_{t+1} - x_t||.
struct ScoreGdOptions {
  int iterations = 300;
  double step = 0.1;
  double sigma_r = 7.0;
  RngSeed seed{0};
  bool record_timing = true;
};

inline RestoreResult restore_deblur_score_gd(const Image& y, const BlurKernel& k, double sigma,
                                             const Denoiser& dae, const ScoreGdOptions& opt,
                                             const std::optional<Image>& truth = std::nullopt) {
  if (!(sigma > 0.0)) throw InvalidArgument("score gradient descent needs sigma > 0");
  if (opt.iterations < 1) throw InvalidArgument("iterations must be >= 1");
  const Margins m = Margins::for_kernel(k);
  Image x = pad_replicate(y, m);
  Rng rng(opt.seed);
  const double data_w = 1.0 / (sigma * sigma), prior_w = 1.0 / (opt.sigma_r * opt.sigma_r);
  Trace trace;
  const detail::Stopwatch clock(opt.record_timing);
  for (int it = 1; it <= opt.iterations; ++it) {
    const Image resid = conv2d_valid(x, k, true) - y;
    Image grad = conv2d_valid_adjoint(resid, k);
    grad *= data_w;
    const Image noisy = x + gaussian_noise(x.height(), x.width(), opt.sigma_r, rng);
    Image prior = dae.denoise(noisy) - x;
    prior *= prior_w;
    grad -= prior;
    grad *= opt.step;
    x -= grad;
    if (!x.all_finite()) throw DivergenceError("score gradient descent diverged at step " +
                                               std::to_string(it));
    TraceRow row{it, l2_norm(grad), std::numeric_limits<double>::quiet_NaN(), clock.ms()};
    if (truth) row.psnr = detail::valid_psnr(x, *truth, m);
    trace.push_back(row);
  }
  return {clip(valid_region(x, m)), std::move(trace)};
}

struct ConvergenceMethod {
  enum class Kind { admm, score_gd };
  std::string name;
  Kind kind = Kind::admm;
  const Denoiser* denoiser = nullptr;
  int iterations = 75;
  double sigma_r = 7.0;
  std::optional<double> rho;  // ADMM only
  double step = 0.1;          // score GD only
};

struct ConvergenceTrace {
  std::string method;
  Trace trace;
};

/// Degrades `truth` once (seeded), then runs every method on the same
/// observation, tracing PSNR on the valid area by iteration and wall time.
inline std::vector<ConvergenceTrace> compare_convergence(const Image& truth, const BlurKernel& k,
                                                         double sigma,
                                                         std::span<const ConvergenceMethod> methods,
                                                         RngSeed seed, bool record_timing = true) {
  if (methods.empty()) throw InvalidArgument("compare_convergence needs at least one method");
  const Image y = degrade_blur(truth, k, sigma, seed);
  std::vector<ConvergenceTrace> out;
  for (const auto& m : methods) {
    if (m.denoiser == nullptr) throw InvalidArgument("method " + m.name + " has no denoiser");
    if (m.kind == ConvergenceMethod::Kind::admm) {
      RestoreConfig cfg;
      cfg.sigma_r = m.sigma_r;
      cfg.rho = m.rho;
      cfg.iterations = m.iterations;
      cfg.denoiser = m.denoiser;
      cfg.track_truth = truth;
      cfg.record_timing = record_timing;
      out.push_back({m.name, restore_deblur(y, k, sigma, cfg).trace});
    } else {
      ScoreGdOptions opt;
      opt.iterations = m.iterations;
      opt.step = m.step;
      opt.sigma_r = m.sigma_r;
      opt.seed = RngSeed{seed.value ^ 0x9e3779b97f4a7c15ULL};
      opt.record_timing = record_timing;
      out.push_back({m.name, restore_deblur_score_gd(y, k, sigma, *m.denoiser, opt, truth).trace});
    }
  }
  return out;
}

/// One method: exactly export_trace. Several: a "method" column is prepended.
inline std::string convergence_csv(const std::vector<ConvergenceTrace>& traces) {
  if (traces.size() == 1) return export_trace(traces.front().trace);
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out << "method,iter,primal_residual,psnr,wall_ms\n" << std::setprecision(6);
  for (const auto& t : traces)
    for (const auto& r : t.trace)
      out << t.method << ',' << r.iter << ',' << r.primal_residual << ',' << r.psnr << ','
          << r.wall_ms << '\n';
  return out.str();
}

/// First iteration whose PSNR reaches `target`, or nullopt.
inline std::optional<int> iterations_to_reach(const Trace& trace, double target) {
  for (const auto& r : trace)
    if (r.psnr >= target) return r.iter;
  return std::nullopt;
}

}  // namespace pnp
