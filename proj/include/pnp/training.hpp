#pragma once

#include <cmath>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "pnp/denoiser.hpp"
#include "pnp/image.hpp"
#include "pnp/net.hpp"
#include "pnp/rng.hpp"

namespace pnp {

enum class OptimizerKind { sgd, adam };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw InvalidArgument("unknown optimizer '" + s + "' (expected sgd or adam)");
}

struct TrainConfig {
  double sigma_r = 7.0;         // DAE noise std, intensity units
  std::optional<double> rho;    // ADMM penalty; 1/sigma_r^2 when unset
  int patch_size = 40;
  int batch_size = 16;
  int steps = 1000;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double grad_clip = 1e3;       // max global gradient norm, <= 0 disables
  RngSeed seed{0};
  int log_every = 50;
  int heldout_count = 16;
  int checkpoint_every = 0;     // 0 disables

  [[nodiscard]] double effective_rho() const { return rho ? *rho : 1.0 / (sigma_r * sigma_r); }

  void validate(int receptive_field) const {
    if (!(sigma_r > 0.0)) throw InvalidArgument("sigma_r must be positive");
    if (!(effective_rho() > 0.0)) throw InvalidArgument("rho must be positive");
    if (patch_size < receptive_field)
      throw InvalidArgument("patch size " + std::to_string(patch_size) +
                            " is smaller than the receptive field " +
                            std::to_string(receptive_field));
    if (batch_size < 1 || steps < 0 || heldout_count < 1)
      throw InvalidArgument("batch size, steps and held-out count must be positive");
    if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  }
};

// ---------------------------------------------------------------- patches

struct PatchOrigin {
  std::string source;
  int row = 0;
  int col = 0;
};

/// Square clean patches plus where each one was cropped from.
struct PatchDataset {
  int patch_size = 0;
  std::vector<Image> patches;
  std::vector<PatchOrigin> manifest;

  [[nodiscard]] bool empty() const { return patches.empty(); }
  [[nodiscard]] std::size_t size() const { return patches.size(); }
};

/// `count` random crops taken round-robin from the source images.
inline PatchDataset extract_patches(std::span<const Image> images,
                                    std::span<const std::string> names, int patch_size,
                                    int count, RngSeed seed) {
  if (images.size() != names.size()) throw InvalidArgument("one name per source image required");
  if (images.empty()) throw InvalidArgument("no source images");
  if (patch_size <= 0) throw InvalidArgument("patch size must be positive");
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < images.size(); ++i)
    if (images[i].height() >= patch_size && images[i].width() >= patch_size) usable.push_back(i);
  if (usable.empty()) throw DimensionError("no source image can hold a patch");

  Rng rng(seed);
  PatchDataset ds;
  ds.patch_size = patch_size;
  for (int i = 0; i < count; ++i) {
    const std::size_t src = usable[static_cast<std::size_t>(i) % usable.size()];
    const Image& img = images[src];
    const int row = static_cast<int>(rng.uniform_index(img.height() - patch_size + 1));
    const int col = static_cast<int>(rng.uniform_index(img.width() - patch_size + 1));
    ds.patches.push_back(crop(img, row, col, patch_size, patch_size));
    ds.manifest.push_back({names[src], row, col});
  }
  return ds;
}

/// Rebuilds a dataset from its manifest; `load` maps a source name to its image.
inline PatchDataset patches_from_manifest(const std::vector<PatchOrigin>& manifest, int patch_size,
                                          const std::function<const Image&(const std::string&)>& load) {
  PatchDataset ds;
  ds.patch_size = patch_size;
  for (const auto& o : manifest) {
    ds.patches.push_back(crop(load(o.source), o.row, o.col, patch_size, patch_size));
    ds.manifest.push_back(o);
  }
  return ds;
}

inline std::string manifest_text(const PatchDataset& ds) {
  std::ostringstream out;
  out << "# patch_size " << ds.patch_size << "\n# source row col\n";
  for (const auto& o : ds.manifest) out << o.source << ' ' << o.row << ' ' << o.col << '\n';
  return out.str();
}

/// One of the 8 symmetries of the square: bit 2 transposes, bit 0 flips
/// rows, bit 1 flips columns.
inline Image dihedral(const Image& img, unsigned t) {
  const bool transpose = (t & 4u) != 0;
  const int h = transpose ? img.width() : img.height();
  const int w = transpose ? img.height() : img.width();
  Image out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      int sr = (t & 1u) ? h - 1 - r : r;
      int sc = (t & 2u) ? w - 1 - c : c;
      if (transpose) std::swap(sr, sc);
      out(r, c) = img(sr, sc);
    }
  }
  return out;
}

/// n random patches, each under a random flip/rotation.
inline std::vector<Image> sample_patch_batch(const PatchDataset& ds, int n, Rng& rng) {
  if (n < 0) throw InvalidArgument("negative batch size");
  if (n == 0) return {};
  if (ds.empty()) throw InvalidArgument("cannot sample from an empty dataset");
  std::vector<Image> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const auto idx = rng.uniform_index(ds.size());
    const auto t = static_cast<unsigned>(rng.uniform_index(8));
    out.push_back(dihedral(ds.patches[idx], t));
  }
  return out;
}

// ---------------------------------------------------------------- losses

struct LossWithGrad {
  double loss = 0.0;
  Image grad;  // d loss / d output
};

/// Sum of squared differences and its gradient 2 (out - clean).
inline LossWithGrad mse_dae_loss(const Image& out, const Image& clean) {
  out.require_same(clean, "mse_dae_loss");
  LossWithGrad r{0.0, Image(out.height(), out.width())};
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = out[i] - clean[i];
    r.loss += d * d;
    r.grad[i] = 2.0 * d;
  }
  return r;
}

struct MapLossParams {
  double sigma_r = 7.0;
  double rho = 1.0 / 49.0;
  bool inject_noise = true;  // v_bar_bar = R(v_bar + eta), eta ~ N(0, sigma_r^2)

  static MapLossParams from(const TrainConfig& cfg) {
    return {cfg.sigma_r, cfg.effective_rho(), true};
  }
};

template <typename Scalar>
struct MapLossResult {
  double loss = 0.0;  // summed over the batch
  GradientSet<Scalar> grads;
  std::vector<Image> denoised;       // v_bar = D(v)
  std::vector<Image> prior_targets;  // v_bar_bar, held constant
  std::vector<Image> output_grads;   // d loss / d v_bar
};

namespace detail {

template <typename Scalar, typename PriorFn>
MapLossResult<Scalar> map_loss_impl(std::span<const Image> v, const ConvNet<Scalar>& D,
                                    PriorFn&& prior, const MapLossParams& p, Rng& rng,
                                    bool want_grads) {
  MapLossResult<Scalar> r;
  const auto tape = forward_tape(D, v, want_grads);
  r.denoised = tape.outputs;

  std::vector<Image> prior_in = r.denoised;
  if (p.inject_noise)
    for (auto& img : prior_in)
      for (double& x : img.pixels()) x += p.sigma_r * rng.normal();
  // v_bar_bar only ever comes out of a forward evaluation: no gradient flows
  // back through the prior network.
  r.prior_targets = prior(std::span<const Image>(prior_in));

  const double prior_w = 1.0 / (p.sigma_r * p.sigma_r);
  for (std::size_t n = 0; n < v.size(); ++n) {
    const Image& vb = r.denoised[n];
    const Image& vbb = r.prior_targets[n];
    Image g(vb.height(), vb.width());
    for (std::size_t i = 0; i < vb.size(); ++i) {
      const double a = vb[i] - vbb[i];
      const double b = vb[i] - v[n][i];
      r.loss += prior_w * a * a + 0.5 * p.rho * b * b;
      g[i] = 2.0 * prior_w * a + p.rho * b;
    }
    r.output_grads.push_back(std::move(g));
  }
  if (want_grads) r.grads = backward(D, tape, std::span<const Image>(r.output_grads), false).grads;
  return r;
}

}  // namespace detail

/// MAP-denoiser loss (1/sigma_r^2)||v_bar - v_bar_bar||^2 + (rho/2)||v_bar - v||^2
/// with v_bar = D(v) and v_bar_bar = R(v_bar + eta), where R is a black box.
/// Gradients reach D only through the direct appearances of v_bar.
template <typename Scalar>
MapLossResult<Scalar> map_loss(std::span<const Image> v, const ConvNet<Scalar>& D,
                               const Denoiser& R, const MapLossParams& p, Rng& rng,
                               bool want_grads = true) {
  return detail::map_loss_impl(
      v, D, [&](std::span<const Image> in) { return R.denoise_batch(in); }, p, rng, want_grads);
}

/// Same loss with a trained DAE network; rejects a DAE trained for another
/// noise level.
template <typename Scalar, typename RScalar>
MapLossResult<Scalar> map_loss(std::span<const Image> v, const ConvNet<Scalar>& D,
                               const ConvNet<RScalar>& R, const MapLossParams& p, Rng& rng,
                               bool want_grads = true) {
  if (!(R.sigma_r > 0.0) || std::abs(R.sigma_r - p.sigma_r) > 1e-6 * p.sigma_r)
    throw InvalidArgument("DAE was trained for sigma_r=" + std::to_string(R.sigma_r) +
                          ", loss expects " + std::to_string(p.sigma_r));
  return detail::map_loss_impl(
      v, D, [&](std::span<const Image> in) { return forward_batch(R, in); }, p, rng, want_grads);
}

// ---------------------------------------------------------------- optimizer

/// Plain SGD or Adam over all ConvNet parameters.
template <typename Scalar>
class ParameterUpdater {
 public:
  ParameterUpdater(const ConvNet<Scalar>& net, OptimizerKind kind, double lr)
      : kind_(kind), lr_(lr) {
    if (kind_ == OptimizerKind::adam) {
      m_ = GradientSet<Scalar>::zeros_like(net);
      v_ = GradientSet<Scalar>::zeros_like(net);
    }
  }

  void apply(ConvNet<Scalar>& net, const GradientSet<Scalar>& g) {
    ++t_;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      update(net.layers[l].weights, g.weights[l], l, true);
      update(net.layers[l].bias, g.bias[l], l, false);
    }
  }

 private:
  void update(std::vector<Scalar>& param, const std::vector<Scalar>& grad, std::size_t l,
              bool weights) {
    if (kind_ == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < param.size(); ++i) param[i] -= static_cast<Scalar>(lr_ * grad[i]);
      return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    auto& m = weights ? m_.weights[l] : m_.bias[l];
    auto& v = weights ? v_.weights[l] : v_.bias[l];
    const double c1 = 1.0 - std::pow(b1, t_), c2 = 1.0 - std::pow(b2, t_);
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double gi = grad[i];
      m[i] = static_cast<Scalar>(b1 * m[i] + (1 - b1) * gi);
      v[i] = static_cast<Scalar>(b2 * v[i] + (1 - b2) * gi * gi);
      param[i] -= static_cast<Scalar>(lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps));
    }
  }

  OptimizerKind kind_;
  double lr_;
  long t_ = 0;
  GradientSet<Scalar> m_, v_;
};

/// Rescales g so its global norm is at most `max_norm`. Returns the norm
/// before clipping.
template <typename Scalar>
double clip_gradient(GradientSet<Scalar>& g, double max_norm) {
  const double norm = std::sqrt(g.squared_norm());
  if (max_norm > 0.0 && norm > max_norm) g *= static_cast<Scalar>(max_norm / norm);
  return norm;
}

// ---------------------------------------------------------------- training loops

struct TrainLogRow {
  int step = 0;
  double loss = 0.0;          // mean per pixel over the step's batch
  double heldout_loss = 0.0;  // mean per pixel over the fixed held-out set
};

inline std::string training_log_csv(const std::vector<TrainLogRow>& rows) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out << "step,loss,heldout_loss\n" << std::setprecision(9);
  for (const auto& r : rows) out << r.step << ',' << r.loss << ',' << r.heldout_loss << '\n';
  return out.str();
}

struct TrainHooks {
  std::function<void(const TrainLogRow&)> on_log;
  std::function<void(int step, const ConvNet<float>&)> on_checkpoint;
};

struct TrainResult {
  ConvNet<float> net;
  std::vector<TrainLogRow> log;
  double initial_heldout = 0.0;
  double final_heldout = 0.0;
};

namespace detail {

inline double pixels_in(std::span<const Image> batch) {
  double n = 0.0;
  for (const auto& b : batch) n += static_cast<double>(b.size());
  return n;
}

inline void require_finite(double loss, int step, const char* what) {
  if (!std::isfinite(loss))
    throw DivergenceError(std::string(what) + " diverged at step " + std::to_string(step) +
                          " (loss is not finite); lower the learning rate");
}

inline void add_noise(std::vector<Image>& batch, double sigma, Rng& rng) {
  for (auto& img : batch)
    for (double& x : img.pixels()) x += sigma * rng.normal();
}

template <typename StepFn, typename HeldoutFn>
TrainResult run_training(ConvNet<float> net, const TrainConfig& cfg, const TrainHooks& hooks,
                         const char* what, StepFn&& step_fn, HeldoutFn&& heldout_fn) {
  ParameterUpdater<float> updater(net, cfg.optimizer, cfg.learning_rate);
  TrainResult result;
  result.initial_heldout = heldout_fn(net);
  result.log.push_back({0, result.initial_heldout, result.initial_heldout});
  if (hooks.on_log) hooks.on_log(result.log.back());
  double last_heldout = result.initial_heldout;
  for (int step = 1; step <= cfg.steps; ++step) {
    auto [loss, grads] = step_fn(net);
    require_finite(loss, step, what);
    clip_gradient(grads, cfg.grad_clip);
    if (!grads.all_finite()) require_finite(NAN, step, what);
    updater.apply(net, grads);
    if (step % std::max(cfg.log_every, 1) == 0 || step == cfg.steps) {
      last_heldout = heldout_fn(net);
      require_finite(last_heldout, step, what);
      result.log.push_back({step, loss, last_heldout});
      if (hooks.on_log) hooks.on_log(result.log.back());
    }
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && hooks.on_checkpoint)
      hooks.on_checkpoint(step, net);
  }
  result.final_heldout = last_heldout;
  result.net = std::move(net);
  return result;
}

}  // namespace detail

/// Trains the MMSE denoising autoencoder: minimizes sum ||R(x + eta) - x||^2
/// with fresh eta ~ N(0, sigma_r^2) each step. The net starts as the identity.
inline TrainResult train_dae(const PatchDataset& ds, const TrainConfig& cfg,
                             const std::vector<LayerSpec>& arch, const TrainHooks& hooks = {}) {
  if (ds.empty()) throw InvalidArgument("empty patch dataset");
  Rng rng(cfg.seed);
  ConvNet<float> net = init_weights<float>(arch, rng.split(), true, 1.0 / 255.0);
  cfg.validate(net.receptive_field());
  zero_last_layer(net);
  net.sigma_r = cfg.sigma_r;

  Rng heldout_rng(rng.split());
  const auto heldout_clean = sample_patch_batch(ds, cfg.heldout_count, heldout_rng);
  auto heldout_noisy = heldout_clean;
  detail::add_noise(heldout_noisy, cfg.sigma_r, heldout_rng);

  auto heldout = [&](const ConvNet<float>& n) {
    const auto out = forward_batch(n, std::span<const Image>(heldout_noisy));
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += mse_dae_loss(out[i], heldout_clean[i]).loss;
    return s / detail::pixels_in(heldout_clean);
  };
  auto step = [&](const ConvNet<float>& n) {
    const auto clean = sample_patch_batch(ds, cfg.batch_size, rng);
    auto noisy = clean;
    detail::add_noise(noisy, cfg.sigma_r, rng);
    const auto tape = forward_tape(n, std::span<const Image>(noisy), true);
    std::vector<Image> upstream;
    double loss = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      auto lg = mse_dae_loss(tape.outputs[i], clean[i]);
      loss += lg.loss;
      upstream.push_back(std::move(lg.grad));
    }
    auto grads = backward(n, tape, std::span<const Image>(upstream), false).grads;
    const double pixels = detail::pixels_in(clean);
    grads *= static_cast<float>(1.0 / pixels);
    return std::pair{loss / pixels, std::move(grads)};
  };
  auto result = detail::run_training(std::move(net), cfg, hooks, "DAE training", step, heldout);
  result.net.sigma_r = cfg.sigma_r;
  return result;
}

/// Held-out inputs for MAP training: clean patches plus N(0, 1/rho) noise.
inline std::vector<Image> map_training_inputs(const std::vector<Image>& clean,
                                              const TrainConfig& cfg, Rng& rng) {
  auto v = clean;
  detail::add_noise(v, 1.0 / std::sqrt(cfg.effective_rho()), rng);
  return v;
}

/// Trains the MAP denoiser D against a frozen DAE R. D starts as the
/// identity; inputs are clean patches with N(0, 1/rho) noise, and no clean
/// target ever enters the loss.
inline TrainResult train_map_denoiser(const PatchDataset& ds, const ConvNet<float>& R,
                                      const TrainConfig& cfg, const std::vector<LayerSpec>& arch,
                                      const TrainHooks& hooks = {}) {
  if (ds.empty()) throw InvalidArgument("empty patch dataset");
  Rng rng(cfg.seed);
  ConvNet<float> net = init_weights<float>(arch, rng.split(), true, 1.0 / 255.0);
  cfg.validate(net.receptive_field());
  zero_last_layer(net);
  net.sigma_r = cfg.sigma_r;
  const auto params = MapLossParams::from(cfg);

  Rng heldout_rng(rng.split());
  const auto heldout_v =
      map_training_inputs(sample_patch_batch(ds, cfg.heldout_count, heldout_rng), cfg, heldout_rng);
  const RngSeed heldout_eta = heldout_rng.split();

  auto heldout = [&](const ConvNet<float>& n) {
    Rng eta(heldout_eta);
    const auto r = map_loss(std::span<const Image>(heldout_v), n, R, params, eta, false);
    return r.loss / detail::pixels_in(heldout_v);
  };
  auto step = [&](const ConvNet<float>& n) {
    const auto v = map_training_inputs(sample_patch_batch(ds, cfg.batch_size, rng), cfg, rng);
    auto r = map_loss(std::span<const Image>(v), n, R, params, rng, true);
    const double pixels = detail::pixels_in(v);
    r.grads *= static_cast<float>(1.0 / pixels);
    return std::pair{r.loss / pixels, std::move(r.grads)};
  };
  auto result = detail::run_training(std::move(net), cfg, hooks, "MAP training", step, heldout);
  result.net.sigma_r = cfg.sigma_r;
  return result;
}

}  // namespace pnp
