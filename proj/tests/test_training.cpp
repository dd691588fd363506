#include <random>

#include <gtest/gtest.h>

#include "pnp/training.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace pnp;

TEST(MseDaeLoss, ClosedFormAndFiniteDifference) {
  oracle::Gen g(60);
  const Image clean = g.image(4, 5);
  const auto same = mse_dae_loss(clean, clean);
  EXPECT_EQ(same.loss, 0.0);
  EXPECT_EQ(max_abs(same.grad), 0.0);
  Image plus = clean;
  plus += 1.0;
  const auto one = mse_dae_loss(plus, clean);
  EXPECT_DOUBLE_EQ(one.loss, 20.0);
  for (double v : one.grad.vec()) EXPECT_DOUBLE_EQ(v, 2.0);

  Image out = g.image(4, 5);
  const auto lg = mse_dae_loss(out, clean);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double keep = out[i];
    out[i] = keep + 1e-4;
    const double up = mse_dae_loss(out, clean).loss;
    out[i] = keep - 1e-4;
    const double down = mse_dae_loss(out, clean).loss;
    out[i] = keep;
    EXPECT_NEAR((up - down) / 2e-4, lg.grad[i], 1e-6);
  }
  EXPECT_THROW(mse_dae_loss(Image(2, 2), Image(2, 3)), DimensionError);
}

TEST(Dihedral, EightDistinctSymmetriesThatPreserveValues) {
  oracle::Gen g(61);
  const Image x = g.image(3, 3);
  std::vector<Image> seen;
  for (unsigned t = 0; t < 8; ++t) {
    const Image y = dihedral(x, t);
    EXPECT_NEAR(sum(y), sum(x), 1e-9);
    for (const auto& s : seen) EXPECT_NE(s, y);
    seen.push_back(y);
  }
  EXPECT_EQ(dihedral(x, 0), x);
}

TEST(Patches, ExtractionIsSeededAndManifestRebuildsIt) {
  oracle::Gen g(62);
  std::vector<Image> imgs{g.image(30, 40), g.image(25, 25), g.image(5, 5)};
  std::vector<std::string> names{"a", "b", "tiny"};
  const auto ds = extract_patches(imgs, names, 10, 12, RngSeed{3});
  EXPECT_EQ(ds.size(), 12u);
  for (const auto& o : ds.manifest) EXPECT_NE(o.source, "tiny");
  const auto again = extract_patches(imgs, names, 10, 12, RngSeed{3});
  EXPECT_EQ(again.patches, ds.patches);
  const auto rebuilt = patches_from_manifest(ds.manifest, 10, [&](const std::string& n) -> const Image& {
    return n == "a" ? imgs[0] : imgs[1];
  });
  EXPECT_EQ(rebuilt.patches, ds.patches);
  EXPECT_THROW(extract_patches(std::vector<Image>{g.image(4, 4)}, std::vector<std::string>{"x"}, 10, 1,
                               RngSeed{0}),
               DimensionError);
}

TEST(TrainConfig, RejectsPatchSmallerThanReceptiveField) {
  TrainConfig cfg;
  cfg.patch_size = 10;
  EXPECT_THROW(cfg.validate(15), InvalidArgument);
  EXPECT_NO_THROW(cfg.validate(9));
  EXPECT_DOUBLE_EQ(cfg.effective_rho(), 1.0 / 49.0);
}

namespace {

struct MapCase {
  ConvNet<double> D;
  ConvNet<double> R;
  std::vector<Image> v;
};

MapCase random_map_case(std::uint64_t seed) {
  oracle::Gen g(seed);
  MapCase c{gradcheck::random_net(seed, 3, true, 1.0 / 255.0),
            gradcheck::random_net(seed + 1, 3, true, 1.0 / 255.0),
            {g.image(6, 6), g.image(6, 6)}};
  c.R.sigma_r = 7.0;
  return c;
}

}  // namespace

TEST(MapLoss, OutputGradientIsTheExactDerivativeOfTheLoss) {
  const auto c = random_map_case(63);
  MapLossParams p{7.0, 1.0 / 49.0, true};
  Rng rng(RngSeed{1});
  const auto r = map_loss(std::span<const Image>(c.v), c.D, c.R, p, rng);
  for (std::size_t n = 0; n < c.v.size(); ++n) {
    const Image& vb = r.denoised[n];
    const Image& vbb = r.prior_targets[n];
    for (std::size_t i = 0; i < vb.size(); ++i) {
      const double expect = (2.0 / 49.0) * (vb[i] - vbb[i]) + (1.0 / 49.0) * (vb[i] - c.v[n][i]);
      EXPECT_NEAR(r.output_grads[n][i], expect, 1e-12);
    }
  }
}

TEST(MapLoss, IdentityNetsWithoutNoiseGiveZeroLoss) {
  auto D = init_weights<double>(dncnn_layers(3, 4), RngSeed{1}, true, 1.0 / 255.0);
  zero_last_layer(D);
  auto R = D;
  R.sigma_r = 7.0;
  oracle::Gen g(64);
  std::vector<Image> v{g.image(5, 5)};
  Rng rng(RngSeed{2});
  const auto r = map_loss(std::span<const Image>(v), D, R, MapLossParams{7.0, 1.0 / 49.0, false}, rng);
  EXPECT_NEAR(r.loss, 0.0, 1e-18);
}

TEST(MapLoss, ParameterGradientMatchesFiniteDifferencesWithFrozenTargets) {
  // With v_bar_bar frozen, L(theta) = sum c1 ||D(v) - t||^2 + c2 ||D(v) - v||^2 is an
  // ordinary function of D's parameters.
  auto c = random_map_case(65);
  const MapLossParams p{7.0, 1.0 / 49.0, true};
  Rng rng(RngSeed{9});
  const auto r = map_loss(std::span<const Image>(c.v), c.D, c.R, p, rng);
  auto frozen_loss = [&](const ConvNet<double>& D) {
    double s = 0.0;
    for (std::size_t n = 0; n < c.v.size(); ++n) {
      const Image out = forward(D, c.v[n]);
      s += squared_norm(out - r.prior_targets[n]) / 49.0 + 0.5 / 49.0 * squared_norm(out - c.v[n]);
    }
    return s;
  };
  EXPECT_NEAR(frozen_loss(c.D), r.loss, 1e-9 * std::max(1.0, r.loss));
  double worst = 0.0;
  for (std::size_t l = 0; l < c.D.layers.size(); ++l)
    for (std::size_t i = 0; i < c.D.layers[l].weights.size(); i += 3) {
      auto& w = c.D.layers[l].weights[i];
      const double keep = w;
      w = keep + 1e-6;
      const double up = frozen_loss(c.D);
      w = keep - 1e-6;
      const double down = frozen_loss(c.D);
      w = keep;
      worst = std::max(worst, gradcheck::rel(r.grads.weights[l][i], (up - down) / 2e-6));
    }
  EXPECT_LT(worst, 1e-4);
}

TEST(MapLoss, BlackBoxPriorGivesBitIdenticalGradients) {
  const auto c = random_map_case(66);
  const auto Rf = c.R;
  const NetDenoiser<double> box(Rf);
  const MapLossParams p{7.0, 1.0 / 49.0, true};
  Rng a(RngSeed{4}), b(RngSeed{4});
  const auto ra = map_loss(std::span<const Image>(c.v), c.D, c.R, p, a);
  const auto rb = map_loss(std::span<const Image>(c.v), c.D, static_cast<const Denoiser&>(box), p, b);
  EXPECT_EQ(ra.grads, rb.grads);
  EXPECT_EQ(ra.loss, rb.loss);
}

TEST(MapLoss, RejectsDaeForAnotherNoiseLevel) {
  auto c = random_map_case(67);
  c.R.sigma_r = 15.0;
  Rng rng(RngSeed{0});
  EXPECT_THROW(map_loss(std::span<const Image>(c.v), c.D, c.R, MapLossParams{}, rng), InvalidArgument);
}

TEST(Optimizer, SgdStepIsLearningRateTimesGradient) {
  auto net = init_weights<float>(dncnn_layers(2, 2), RngSeed{1});
  const auto before = net;
  auto g = GradientSet<float>::zeros_like(net);
  g.weights[0][0] = 2.0f;
  ParameterUpdater<float> up(net, OptimizerKind::sgd, 0.5);
  up.apply(net, g);
  EXPECT_FLOAT_EQ(net.layers[0].weights[0], before.layers[0].weights[0] - 1.0f);
  EXPECT_EQ(net.layers[0].weights[1], before.layers[0].weights[1]);
}

TEST(Optimizer, AdamFirstStepHasLearningRateMagnitude) {
  auto net = init_weights<float>(dncnn_layers(2, 2), RngSeed{1});
  const auto before = net;
  auto g = GradientSet<float>::zeros_like(net);
  g.weights[1][3] = -123.0f;
  ParameterUpdater<float> up(net, OptimizerKind::adam, 1e-3);
  up.apply(net, g);
  EXPECT_NEAR(net.layers[1].weights[3] - before.layers[1].weights[3], 1e-3, 1e-6);
}

TEST(Optimizer, ClipScalesToMaxNorm) {
  auto net = init_weights<float>(dncnn_layers(2, 2), RngSeed{1});
  auto g = GradientSet<float>::zeros_like(net);
  g.weights[0][0] = 30.0f;
  g.bias[1][0] = 40.0f;
  EXPECT_NEAR(clip_gradient(g, 5.0), 50.0, 1e-4);
  EXPECT_NEAR(std::sqrt(g.squared_norm()), 5.0, 1e-4);
  EXPECT_EQ(parse_optimizer("sgd"), OptimizerKind::sgd);
  EXPECT_THROW(parse_optimizer("lbfgs"), InvalidArgument);
}

namespace {

PatchDataset smooth_patches(int count, int size, std::uint64_t seed) {
  oracle::Gen g(seed);
  PatchDataset ds;
  ds.patch_size = size;
  for (int i = 0; i < count; ++i) {
    Image p(size, size);
    const double a = g.uni(40, 200), bx = g.uni(-3, 3), by = g.uni(-3, 3);
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c) p(r, c) = a + bx * c + by * r;
    ds.patches.push_back(p);
    ds.manifest.push_back({"synthetic", i, 0});
  }
  return ds;
}

}  // namespace

TEST(TrainDae, LearnsToDenoiseSmoothPatchesAndIsDeterministic) {
  const auto ds = smooth_patches(64, 16, 68);
  TrainConfig cfg;
  cfg.patch_size = 16;
  cfg.batch_size = 8;
  cfg.steps = 150;
  cfg.log_every = 50;
  cfg.seed = RngSeed{5};
  const auto arch = dncnn_layers(3, 8);
  const auto a = train_dae(ds, cfg, arch);
  EXPECT_LT(a.final_heldout, 0.5 * a.initial_heldout);
  EXPECT_NEAR(a.initial_heldout, 49.0, 10.0);
  const auto b = train_dae(ds, cfg, arch);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].loss, b.log[i].loss);
  EXPECT_EQ(a.net, b.net);
  EXPECT_EQ(a.net.sigma_r, 7.0);
}

TEST(TrainDae, DivergenceIsReported) {
  const auto ds = smooth_patches(8, 12, 69);
  TrainConfig cfg;
  cfg.patch_size = 12;
  cfg.batch_size = 4;
  cfg.steps = 60;
  cfg.optimizer = OptimizerKind::sgd;
  cfg.learning_rate = 1e6;
  cfg.grad_clip = 0.0;
  EXPECT_THROW(train_dae(ds, cfg, dncnn_layers(3, 4)), DivergenceError);
}

TEST(TrainMap, ReducesHeldoutLossWithoutCleanTargets) {
  const auto ds = smooth_patches(64, 16, 70);
  TrainConfig cfg;
  cfg.patch_size = 16;
  cfg.batch_size = 8;
  cfg.steps = 120;
  cfg.log_every = 40;
  cfg.seed = RngSeed{6};
  const auto R = train_dae(ds, cfg, dncnn_layers(3, 8)).net;
  const auto D = train_map_denoiser(ds, R, cfg, dncnn_layers(3, 8));
  EXPECT_LT(D.final_heldout, D.initial_heldout);
  EXPECT_EQ(D.net.sigma_r, 7.0);
}

TEST(TrainingLog, CsvHeader) {
  const std::string csv = training_log_csv({{0, 1.5, 2.5}, {10, 1.0, 2.0}});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,loss,heldout_loss");
}
