#include <gtest/gtest.h>

#include "pnp/pnp.hpp"
#include "support/models.hpp"

using namespace pnp;

namespace {

const models::DeskModels& desk() {
  static const models::DeskModels m = models::ensure();
  return m;
}

double total_variation(const Image& x) {
  double tv = 0.0;
  for (int r = 0; r < x.height(); ++r)
    for (int c = 0; c < x.width(); ++c) {
      if (r + 1 < x.height()) tv += std::abs(x(r + 1, c) - x(r, c));
      if (c + 1 < x.width()) tv += std::abs(x(r, c + 1) - x(r, c));
    }
  return tv;
}

std::vector<Image> test_images() {
  std::vector<Image> out;
  for (const auto& p : models::sorted_files(models::data_dir() / "test", ".pgm")) out.push_back(read_pgm(p));
  return out;
}

}  // namespace

TEST(TrainedDae, HeldoutLossDropsByHalf) {
  const auto& log = desk().dae_log;
  ASSERT_GE(log.size(), 2u);
  EXPECT_LE(log.back().heldout_loss, 0.5 * log.front().heldout_loss);
  EXPECT_DOUBLE_EQ(desk().dae.sigma_r, 7.0);
}

// Patches from the test images never enter training.
TEST(TrainedDae, DenoisesHeldoutPatchesByThreeDecibels) {
  const NetDenoiser<float> R(desk().dae);
  Rng rng(RngSeed{91});
  double noisy_psnr = 0.0, denoised_psnr = 0.0;
  int n = 0;
  for (const Image& img : test_images())
    for (int r = 0; r + 40 <= img.height(); r += 97)
      for (int c = 0; c + 40 <= img.width(); c += 97) {
        const Image clean = crop(img, r, c, 40, 40);
        Image noisy = clean;
        noisy += gaussian_noise(40, 40, 7.0, rng);
        noisy_psnr += psnr(noisy, clean);
        denoised_psnr += psnr(R.denoise(noisy), clean);
        ++n;
      }
  ASSERT_GT(n, 20);
  EXPECT_GE((denoised_psnr - noisy_psnr) / n, 3.0) << n << " patches";
}

TEST(TrainedMap, HeldoutLossDropsByThirty) {
  const auto& log = desk().map_log;
  ASSERT_GE(log.size(), 2u);
  EXPECT_LE(log.back().heldout_loss, 0.7 * log.front().heldout_loss);
}

// Replays the first 100 MAP steps with a per-step held-out log; also checks the
// replay agrees with the cached run wherever both logged.
TEST(TrainedMap, EarlyTrainingDecreasesAndIsReproducible) {
  const models::DeskSettings s;
  const auto ds = models::training_patches(s);
  TrainConfig cfg;
  cfg.sigma_r = s.sigma_r;
  cfg.patch_size = s.patch;
  cfg.batch_size = s.batch;
  cfg.steps = 100;
  cfg.learning_rate = s.lr;
  cfg.seed = RngSeed{s.seed ^ 0x2222};
  cfg.log_every = 1;
  const auto r = train_map_denoiser(ds, desk().dae, cfg, dncnn_layers(s.depth, s.channels));
  ASSERT_EQ(r.log.size(), 101u);

  std::vector<double> avg;
  for (std::size_t t = 10; t <= 100; ++t) {
    double m = 0.0;
    for (std::size_t i = t - 9; i <= t; ++i) m += r.log[i].heldout_loss;
    avg.push_back(m / 10);
  }
  int down = 0;
  for (std::size_t i = 1; i < avg.size(); ++i) down += avg[i] <= avg[i - 1];
  EXPECT_GE(down, static_cast<int>(std::ceil(0.9 * (avg.size() - 1))));
  EXPECT_LT(r.log[100].heldout_loss, r.log[0].heldout_loss);

  for (const auto& cached : desk().map_log) {
    if (cached.step > 100) break;
    const double ref = r.log[static_cast<std::size_t>(cached.step)].heldout_loss;
    EXPECT_NEAR(cached.heldout_loss, ref, 1e-6 * std::abs(ref)) << "step " << cached.step;
  }
}

TEST(TrainedMap, SmoothsNaturalImagesProgressively) {
  const NetDenoiser<float> D(desk().map);
  for (const Image& x : test_images()) {
    Image cur = x;
    double tv = total_variation(cur);
    for (int pass = 0; pass < 3; ++pass) {
      cur = D.denoise(cur);
      const double next = total_variation(cur);
      EXPECT_LE(next, tv);
      tv = next;
    }
  }
}

TEST(TrainedMap, ReducesTheVarianceOfPureNoise) {
  const NetDenoiser<float> D(desk().map);
  Rng rng(RngSeed{77});
  Image noise = gaussian_noise(96, 96, 25.0, rng);
  noise += 128.0;
  auto variance = [](const Image& x) {
    double m = 0.0, s = 0.0;
    for (double v : x.vec()) m += v;
    m /= static_cast<double>(x.size());
    for (double v : x.vec()) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size());
  };
  EXPECT_LE(variance(D.denoise(noise)), 0.7 * variance(noise));
}

TEST(TrainedMap, PrimalResidualMostlyShrinksOverFiveIterations) {
  const NetDenoiser<float> D(desk().map);
  const auto kernels = models::sorted_files(models::data_dir() / "kernels", ".txt");
  const auto images = test_images();
  int windows = 0, shrinking = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& img = images[i];
    const Image truth = crop(img, (img.height() - 128) / 2, (img.width() - 128) / 2, 128, 128);
    const BlurKernel k = read_kernel(kernels[i % kernels.size()]);
    const Image y = degrade_blur(truth, k, 2.55, RngSeed{900 + i});
    RestoreConfig cfg = RestoreConfig::deblur_defaults(D);
    cfg.record_timing = false;
    const auto trace = restore_deblur(y, k, 2.55, cfg).trace;
    for (std::size_t t = 0; t + 5 < trace.size(); ++t) {
      ++windows;
      shrinking += trace[t + 5].primal_residual <= trace[t].primal_residual;
    }
  }
  EXPECT_GE(shrinking, 0.9 * windows) << shrinking << " of " << windows;
}
