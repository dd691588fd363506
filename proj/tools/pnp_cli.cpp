// pnp: degrade, train, restore and benchmark from the command line.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pnp/pnp.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kUsage = 2, kIo = 3, kDivergence = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

int fail(ExitCode code, const char* cls, const std::string& msg) {
  std::cerr << "error class=" << cls << " message=\"" << one_line(msg) << "\"\n";
  return code;
}

json finite_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

// Directories expand to their *.ext files, sorted by name.
std::vector<fs::path> expand_paths(const std::vector<std::string>& items, const std::string& ext) {
  std::vector<fs::path> out;
  for (const auto& item : items) {
    const fs::path p(item);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ext) found.push_back(e.path());
      std::sort(found.begin(), found.end());
      if (found.empty()) throw pnp::IoError("no " + ext + " files in " + p.string());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      if (!fs::exists(p)) throw pnp::IoError("no such file " + p.string());
      out.push_back(p);
    }
  }
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : " ") + x;
  return s;
}

// Effective settings of a subcommand in the same flat format the config
// file uses.
std::string effective_config(const CLI::App& sub) {
  std::ostringstream out;
  out << "# " << sub.get_name() << " effective configuration\n";
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    std::string value;
    if (opt->count() > 0) {
      value = opt->get_expected_max() == 0 ? "true" : join(opt->results());
    } else {
      value = opt->get_default_str();
      if (opt->get_expected_max() == 0 && value.empty()) value = "false";
    }
    out << name << " = " << value << '\n';
  }
  return out.str();
}

json config_json(const CLI::App& sub) {
  json j = json::object();
  for (const auto& [k, v] : pnp::parse_config(effective_config(sub))) j[k] = v;
  return j;
}

// ------------------------------------------------------------ denoisers

struct DenoiserChoice {
  std::unique_ptr<pnp::Denoiser> denoiser;
  std::optional<double> sigma_r;  // from the weight file header
};

DenoiserChoice make_denoiser(const std::string& kind, const std::string& weights) {
  DenoiserChoice c;
  if (kind == "identity") {
    c.denoiser = std::make_unique<pnp::IdentityDenoiser>();
  } else if (kind == "median") {
    c.denoiser = std::make_unique<pnp::MedianDenoiser>();
  } else if (kind == "net") {
    if (weights.empty()) throw UsageError("--weights is required for the net denoiser");
    auto net = pnp::load_weights<float>(weights);
    if (net.sigma_r > 0.0) c.sigma_r = net.sigma_r;
    c.denoiser = std::make_unique<pnp::NetDenoiser<float>>(std::move(net), "net:" + weights);
  } else {
    throw UsageError("unknown denoiser " + kind + " (net, median, identity)");
  }
  return c;
}

// --------------------------------------------------------------- degrade

struct DegradeArgs {
  std::string in, out, kernel, mask_out, meta_out;
  bool inpaint = false;
  double missing = 0.8;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

int cmd_degrade(const DegradeArgs& a) {
  if (a.inpaint == !a.kernel.empty())
    throw UsageError("degrade needs exactly one of --kernel or --inpaint");
  pnp::DegradationSpec::require_sigma(a.sigma);
  const pnp::Image x = pnp::read_pgm(a.in);
  const pnp::RngSeed seed{a.seed};
  std::ostringstream meta;
  meta.imbue(std::locale::classic());
  meta << std::setprecision(12);
  meta << "variant = " << (a.inpaint ? "inpaint" : "blur") << "\nsigma = " << a.sigma
       << "\nseed = " << a.seed << "\ninput = " << a.in << "\noutput = " << a.out << '\n';
  if (a.inpaint) {
    const auto obs = pnp::degrade_inpaint(x, a.missing, a.sigma, seed);
    const std::string mask_path = a.mask_out.empty() ? a.out + ".mask.pgm" : a.mask_out;
    pnp::write_pgm(a.out, obs.observed);
    pnp::write_mask_pgm(mask_path, obs.mask);
    meta << "missing = " << a.missing << "\nmask = " << mask_path << '\n';
  } else {
    const pnp::BlurKernel k = pnp::read_kernel(a.kernel);
    pnp::write_pgm(a.out, pnp::degrade_blur(x, k, a.sigma, seed));
    meta << "kernel = " << a.kernel << '\n';
  }
  pnp::write_text_atomic(a.meta_out.empty() ? a.out + ".meta.txt" : a.meta_out, meta.str());
  return kOk;
}

// ----------------------------------------------------------------- train

struct TrainArgs {
  std::vector<std::string> images;
  std::string out, log, manifest, dae;
  double sigma_r = 7.0;
  double rho = 0.0;  // 0 = 1/sigma_r^2
  int patch = 40, patches = 4096, batch = 16, steps = 1000, depth = 17, channels = 64;
  int log_every = 50, heldout = 16, checkpoint_every = 0;
  double lr = 1e-3, clip = 1e3;
  std::string optimizer = "adam";
  std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& a, bool map, const CLI::App& sub) {
  if (map && a.dae.empty()) throw UsageError("train-map requires --dae weights");
  const auto paths = expand_paths(a.images, ".pgm");
  std::vector<pnp::Image> images;
  std::vector<std::string> names;
  for (const auto& p : paths) {
    images.push_back(pnp::read_pgm(p));
    names.push_back(p.string());
  }
  std::optional<pnp::ConvNet<float>> dae;
  if (map) dae = pnp::load_weights<float>(a.dae);

  pnp::Rng root(pnp::RngSeed{a.seed});
  const pnp::RngSeed patch_seed = root.split();
  pnp::TrainConfig cfg;
  cfg.sigma_r = a.sigma_r;
  if (map && sub.get_option("--sigma-r")->count() == 0 && dae->sigma_r > 0.0)
    cfg.sigma_r = dae->sigma_r;
  if (a.rho > 0.0) cfg.rho = a.rho;
  cfg.patch_size = a.patch;
  cfg.batch_size = a.batch;
  cfg.steps = a.steps;
  cfg.learning_rate = a.lr;
  cfg.optimizer = pnp::parse_optimizer(a.optimizer);
  cfg.grad_clip = a.clip;
  cfg.seed = root.split();
  cfg.log_every = a.log_every;
  cfg.heldout_count = a.heldout;
  cfg.checkpoint_every = a.checkpoint_every;

  const auto ds = pnp::extract_patches(images, names, a.patch, a.patches, patch_seed);
  if (!a.manifest.empty()) pnp::write_text_atomic(a.manifest, pnp::manifest_text(ds));
  pnp::TrainHooks hooks;
  hooks.on_log = [](const pnp::TrainLogRow& r) {
    std::cout << "step " << r.step << " loss " << r.loss << " heldout " << r.heldout_loss
              << std::endl;
  };
  hooks.on_checkpoint = [&](int step, const pnp::ConvNet<float>& net) {
    pnp::save_weights(a.out + ".step" + std::to_string(step), net);
  };
  const auto arch = pnp::dncnn_layers(a.depth, a.channels);
  const auto result =
      map ? pnp::train_map_denoiser(ds, *dae, cfg, arch, hooks) : pnp::train_dae(ds, cfg, arch, hooks);
  pnp::save_weights(a.out, result.net);
  if (!a.log.empty()) pnp::write_text_atomic(a.log, pnp::training_log_csv(result.log));
  return kOk;
}

// --------------------------------------------------------------- restore

struct RestoreArgs {
  std::string in, kernel, mask, weights, denoiser = "net", out, trace, summary, truth;
  double sigma = 0.0;
  double sigma_r = 7.0;
  double rho = 0.0;
  int iterations = 0;
  int gd_steps = 200;
  bool exact = false;
  bool no_timing = false;
  std::uint64_t seed = 0;
};

int cmd_restore(const RestoreArgs& a, bool deblur, const CLI::App& sub) {
  if (!(a.sigma >= 0.0)) throw UsageError("--sigma must be >= 0");
  const pnp::Image y = pnp::read_pgm(a.in);
  auto choice = make_denoiser(a.denoiser, a.weights);
  pnp::RestoreConfig cfg;
  cfg.sigma_r = a.sigma_r;
  if (sub.get_option("--sigma-r")->count() == 0 && choice.sigma_r) cfg.sigma_r = *choice.sigma_r;
  if (a.rho > 0.0) cfg.rho = a.rho;
  cfg.iterations = a.iterations > 0 ? a.iterations : (deblur ? 75 : 300);
  cfg.denoiser = choice.denoiser.get();
  cfg.mask_solver = a.exact ? pnp::MaskSolver::exact : pnp::MaskSolver::gradient_descent;
  cfg.gd_steps = a.gd_steps;
  cfg.record_timing = !a.no_timing;
  std::optional<pnp::Image> truth;
  if (!a.truth.empty()) truth = pnp::read_pgm(a.truth);
  cfg.track_truth = truth;

  pnp::RestoreResult res;
  std::optional<pnp::BlurKernel> kernel;
  if (deblur) {
    kernel = pnp::read_kernel(a.kernel);
    res = pnp::restore_deblur(y, *kernel, a.sigma, cfg);
  } else {
    const pnp::Image mask = pnp::read_mask_pgm(a.mask);
    res = pnp::restore_inpaint(y, mask, a.sigma, cfg);
  }
  pnp::write_pgm(a.out, res.image);
  if (!a.trace.empty()) pnp::write_text_atomic(a.trace, pnp::export_trace(res.trace));

  json s;
  s["command"] = deblur ? "deblur" : "inpaint";
  s["config"] = config_json(sub);
  s["effective"] = {{"sigma_r", cfg.sigma_r},
                    {"rho", cfg.effective_rho()},
                    {"iterations", cfg.iterations},
                    {"denoiser", cfg.denoiser->descriptor()}};
  s["iterations_run"] = res.trace.size();
  s["final_primal_residual"] = res.trace.empty() ? json(nullptr) : finite_or_null(res.trace.back().primal_residual);
  s["wall_ms"] = res.trace.empty() ? 0.0 : res.trace.back().wall_ms;
  if (truth) {
    pnp::Image reference = *truth;
    if (deblur && !truth->same_shape(res.image))
      reference = pnp::valid_region(*truth, pnp::Margins::for_kernel(*kernel));
    pnp::Image written = res.image;
    for (double& v : written.pixels()) v = pnp::detail::quantize_u8(v);
    const double p = pnp::psnr(written, reference);
    s["psnr"] = std::isinf(p) ? json("inf") : json(p);
    s["ssim"] = pnp::ssim(written, reference);
  }
  const std::string body = s.dump(2) + "\n";
  if (!a.summary.empty()) pnp::write_text_atomic(a.summary, body);
  std::cout << body;
  return kOk;
}

// ----------------------------------------------------------------- bench

struct BenchArgs {
  std::vector<std::string> images, kernels, denoisers{"net"};
  std::vector<double> sigmas{2.55, 5.10, 7.65, 10.2};
  std::string task = "deblur", weights, dae, csv, table, convergence, dataset = "desk";
  double missing = 0.8;
  double sigma_r = 7.0;
  int iterations = 0, gd_iterations = 0, crop = 128, workers = 1;
  bool no_timing = false;
  std::uint64_t seed = 0;
};

int cmd_bench(const BenchArgs& a) {
  pnp::BenchmarkSpec spec;
  if (a.task != "deblur" && a.task != "inpaint") throw UsageError("--task must be deblur or inpaint");
  spec.task = a.task == "deblur" ? pnp::BenchTask::deblur : pnp::BenchTask::inpaint;
  spec.dataset = a.dataset;
  spec.images = expand_paths(a.images, ".pgm");
  if (spec.task == pnp::BenchTask::deblur) spec.kernels = expand_paths(a.kernels, ".txt");
  spec.sigmas = a.sigmas;
  spec.missing_fraction = a.missing;
  spec.seed = a.seed;
  spec.crop = a.crop;
  spec.workers = a.workers;
  spec.record_timing = !a.no_timing;
  const int iterations = a.iterations > 0 ? a.iterations
                                          : (spec.task == pnp::BenchTask::deblur ? 75 : 300);
  std::vector<DenoiserChoice> owned;
  for (const auto& d : a.denoisers) {
    owned.push_back(make_denoiser(d, a.weights));
    pnp::BenchMethod m;
    m.name = d == "net" ? "pnp-admm" : "admm-" + d;
    m.denoiser = owned.back().denoiser.get();
    m.iterations = iterations;
    m.sigma_r = owned.back().sigma_r.value_or(a.sigma_r);
    spec.methods.push_back(m);
  }
  const auto table = pnp::run_benchmark(spec);
  for (const auto& it : table.items)
    if (!it.ok)
      std::cerr << "item failed method=" << it.method << " image=" << it.image
                << " kernel=" << it.kernel << " sigma=" << pnp::sigma_label(it.sigma)
                << " message=\"" << one_line(it.error) << "\"\n";
  if (!a.csv.empty()) pnp::write_text_atomic(a.csv, table.to_csv());
  const std::string text = "# wall time covers the iteration loop only\n" + table.to_text();
  if (!a.table.empty()) pnp::write_text_atomic(a.table, text);
  std::cout << text;

  if (!a.convergence.empty()) {
    if (spec.task != pnp::BenchTask::deblur)
      throw UsageError("--convergence is only available for deblurring");
    const pnp::Image truth = pnp::detail::center_crop(pnp::read_pgm(spec.images.front()), spec.crop);
    const pnp::BlurKernel k = pnp::read_kernel(spec.kernels.front());
    std::vector<pnp::ConvergenceMethod> methods;
    for (const auto& m : spec.methods)
      methods.push_back({m.name, pnp::ConvergenceMethod::Kind::admm, m.denoiser, m.iterations,
                         m.sigma_r, std::nullopt, 0.1});
    std::optional<DenoiserChoice> dae;
    if (!a.dae.empty()) {
      dae = make_denoiser("net", a.dae);
      methods.push_back({"score-gd", pnp::ConvergenceMethod::Kind::score_gd, dae->denoiser.get(),
                         a.gd_iterations > 0 ? a.gd_iterations : 10 * iterations,
                         dae->sigma_r.value_or(a.sigma_r), std::nullopt, 0.1});
    }
    const pnp::RngSeed seed{pnp::tuple_seed(spec.images.front().string(),
                                            spec.kernels.front().string(), spec.sigmas.front(),
                                            spec.seed)};
    const auto traces =
        pnp::compare_convergence(truth, k, spec.sigmas.front(), methods, seed, spec.record_timing);
    pnp::write_text_atomic(a.convergence, pnp::convergence_csv(traces));
  }
  bool any_failed = false;
  for (const auto& r : table.rows) any_failed = any_failed || !r.valid();
  return any_failed ? kInternal : kOk;
}

// ------------------------------------------------------------ config file

// Entries from --config become flags placed before the command line's own,
// skipping keys the command line sets explicitly.
std::vector<std::string> apply_config(CLI::App& app, std::vector<std::string> args) {
  if (args.size() < 2) return args;
  auto at = std::find(args.begin() + 1, args.end(), "--config");
  std::string path;
  if (at != args.end()) {
    if (at + 1 == args.end()) throw UsageError("--config needs a file");
    path = *(at + 1);
    args.erase(at, at + 2);
  } else {
    for (auto it = args.begin() + 1; it != args.end(); ++it) {
      if (it->rfind("--config=", 0) == 0) {
        path = it->substr(9);
        args.erase(it);
        break;
      }
    }
  }
  if (path.empty()) return args;
  CLI::App* sub = app.get_subcommand_no_throw(args[1]);
  if (sub == nullptr) throw UsageError("--config must follow a command");
  std::vector<std::string> injected;
  for (const auto& [key, value] : pnp::read_config(path)) {
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr || key == "help") throw UsageError("unknown config key " + key);
    const bool on_command_line = std::any_of(args.begin() + 2, args.end(), [&](const std::string& s) {
      return s == "--" + key || s.rfind("--" + key + "=", 0) == 0;
    });
    if (on_command_line) continue;
    if (opt->get_expected_max() == 0) {
      if (value == "true" || value == "1") injected.push_back("--" + key);
      else if (value != "false" && value != "0")
        throw UsageError("config key " + key + " takes true or false");
      continue;
    }
    injected.push_back("--" + key);
    std::istringstream tokens(value);
    for (std::string t; tokens >> t;) injected.push_back(t);
  }
  args.insert(args.begin() + 2, injected.begin(), injected.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plug-and-play MAP image restoration: degrade, train, deblur, inpaint, bench"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_help_all_flag("--help-all", "help for every command");

  auto add_common = [](CLI::App* s, std::uint64_t& seed) {
    s->option_defaults()->always_capture_default();
    s->add_option("--seed", seed, "random seed; equal seeds give byte-identical outputs");
    s->add_option("--config", "flat key = value file; command-line flags win")->type_name("FILE");
  };

  DegradeArgs dg;
  auto* sd = app.add_subcommand("degrade", "blur or mask an image and add Gaussian noise");
  sd->add_option("--in", dg.in, "clean PGM")->required();
  sd->add_option("--out", dg.out, "degraded PGM (rounded to 8 bits)")->required();
  sd->add_option("--kernel", dg.kernel, "blur kernel text file (valid-area blur)");
  sd->add_flag("--inpaint", dg.inpaint, "drop pixels instead of blurring");
  sd->add_option("--missing", dg.missing, "fraction of missing pixels (reference inpainting setting)");
  sd->add_option("--sigma", dg.sigma, "noise std in intensity units")->required();
  sd->add_option("--mask-out", dg.mask_out, "mask PGM, default <out>.mask.pgm");
  sd->add_option("--meta-out", dg.meta_out, "metadata text, default <out>.meta.txt");
  add_common(sd, dg.seed);

  TrainArgs td, tm;
  auto add_train = [&](CLI::App* s, TrainArgs& t) {
    s->add_option("--images", t.images, "training PGMs or directories of them")->required();
    s->add_option("--out", t.out, "output weight file")->required();
    s->add_option("--log", t.log, "training log CSV");
    s->add_option("--manifest", t.manifest, "write the patch manifest here");
    s->add_option("--sigma-r", t.sigma_r, "denoising autoencoder noise std (reference setting)");
    s->add_option("--patch", t.patch, "patch side (reference setting)");
    s->add_option("--patches", t.patches, "number of random patches");
    s->add_option("--batch", t.batch, "batch size");
    s->add_option("--steps", t.steps, "optimizer steps");
    s->add_option("--lr", t.lr, "learning rate");
    s->add_option("--optimizer", t.optimizer, "adam or sgd");
    s->add_option("--clip", t.clip, "gradient norm clip, <= 0 disables");
    s->add_option("--depth", t.depth, "convolution layers (reference setting)");
    s->add_option("--channels", t.channels, "feature channels (reference setting)");
    s->add_option("--log-every", t.log_every, "steps between held-out evaluations");
    s->add_option("--heldout", t.heldout, "held-out patch count");
    s->add_option("--checkpoint-every", t.checkpoint_every, "steps between checkpoints, 0 disables");
    add_common(s, t.seed);
  };
  auto* st = app.add_subcommand("train-dae", "train the MMSE denoising autoencoder R");
  add_train(st, td);
  auto* sm = app.add_subcommand("train-map", "train the MAP denoiser D against a frozen R");
  add_train(sm, tm);
  sm->add_option("--dae", tm.dae, "weights of the trained autoencoder R");
  sm->add_option("--rho", tm.rho, "ADMM penalty, 0 means 1/sigma_r^2 (reference setting 1/49)");

  RestoreArgs rd, ri;
  auto add_restore = [&](CLI::App* s, RestoreArgs& r) {
    s->add_option("--in", r.in, "degraded PGM")->required();
    s->add_option("--sigma", r.sigma, "noise std of the observation")->required();
    s->add_option("--weights", r.weights, "MAP denoiser weights");
    s->add_option("--denoiser", r.denoiser, "net, median or identity");
    s->add_option("--out", r.out, "restored PGM")->required();
    s->add_option("--trace", r.trace, "per-iteration CSV");
    s->add_option("--summary", r.summary, "run summary JSON");
    s->add_option("--truth", r.truth, "ground truth PGM for PSNR/SSIM");
    s->add_option("--sigma-r", r.sigma_r, "prior strength; taken from the weights when present");
    s->add_option("--rho", r.rho, "ADMM penalty, 0 means 1/sigma_r^2 (reference setting 1/49)");
    s->add_flag("--no-timing", r.no_timing, "write zero wall times for reproducible outputs");
    add_common(s, r.seed);
  };
  auto* sb = app.add_subcommand("deblur", "non-blind deblurring with plug-and-play ADMM");
  add_restore(sb, rd);
  sb->add_option("--kernel", rd.kernel, "blur kernel text file")->required();
  sb->add_option("--iterations", rd.iterations, "ADMM iterations, 0 means 75 (reference setting)");
  auto* si = app.add_subcommand("inpaint", "inpainting with plug-and-play ADMM");
  add_restore(si, ri);
  si->add_option("--mask", ri.mask, "mask PGM, nonzero = observed")->required();
  si->add_option("--iterations", ri.iterations, "ADMM iterations, 0 means 300 (reference setting)");
  si->add_option("--gd-steps", ri.gd_steps, "gradient steps per data update (reference setting)");
  si->add_flag("--exact", ri.exact, "solve the masked data update in closed form");

  BenchArgs bn;
  auto* sn = app.add_subcommand("bench", "degrade-restore-score over image and kernel manifests");
  sn->add_option("--images", bn.images, "test PGMs or directories")->required();
  sn->add_option("--kernels", bn.kernels, "kernel files or directories (deblurring)");
  sn->add_option("--sigmas", bn.sigmas, "noise levels (reference table columns)")->delimiter(',');
  sn->add_option("--task", bn.task, "deblur or inpaint");
  sn->add_option("--missing", bn.missing, "missing fraction for inpainting");
  sn->add_option("--weights", bn.weights, "MAP denoiser weights");
  sn->add_option("--denoisers", bn.denoisers, "methods to compare: net, median, identity")->delimiter(',');
  sn->add_option("--dae", bn.dae, "autoencoder weights for the gradient-descent baseline");
  sn->add_option("--sigma-r", bn.sigma_r, "prior strength when no weights carry it");
  sn->add_option("--iterations", bn.iterations, "ADMM iterations, 0 means 75 / 300");
  sn->add_option("--gd-iterations", bn.gd_iterations, "baseline iterations, 0 means 10x ADMM");
  sn->add_option("--crop", bn.crop, "center crop side, 0 keeps whole images");
  sn->add_option("--workers", bn.workers, "parallel benchmark items");
  sn->add_option("--dataset", bn.dataset, "dataset label in the table");
  sn->add_option("--csv", bn.csv, "result table CSV");
  sn->add_option("--table", bn.table, "aligned text table");
  sn->add_option("--convergence", bn.convergence, "PSNR-by-iteration CSV on the first item");
  sn->add_flag("--no-timing", bn.no_timing, "write zero wall times for reproducible outputs");
  add_common(sn, bn.seed);

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = apply_config(app, std::move(args));
    std::vector<const char*> cargs;
    for (const auto& s : args) cargs.push_back(s.c_str());
    try {
      app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      return fail(kUsage, "usage", e.what());
    }
    CLI::App* sub = app.get_subcommands().front();
    std::cout << effective_config(*sub) << std::flush;
    const std::string name = sub->get_name();
    if (name == "degrade") return cmd_degrade(dg);
    if (name == "train-dae") return cmd_train(td, false, *sub);
    if (name == "train-map") return cmd_train(tm, true, *sub);
    if (name == "deblur") return cmd_restore(rd, true, *sub);
    if (name == "inpaint") return cmd_restore(ri, false, *sub);
    if (name == "bench") return cmd_bench(bn);
    return fail(kUsage, "usage", "unknown command " + name);
  } catch (const UsageError& e) {
    return fail(kUsage, "usage", e.what());
  } catch (const pnp::InvalidArgument& e) {
    return fail(kUsage, "usage", e.what());
  } catch (const pnp::DimensionError& e) {
    return fail(kUsage, "usage", e.what());
  } catch (const pnp::IoError& e) {
    return fail(kIo, "io", e.what());
  } catch (const pnp::DivergenceError& e) {
    return fail(kDivergence, "divergence", e.what());
  } catch (const std::exception& e) {
    return fail(kInternal, "internal", e.what());
  }
}
