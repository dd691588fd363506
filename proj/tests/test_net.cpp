#include <sstream>

#include <gtest/gtest.h>

#include "pnp/denoiser.hpp"
#include "pnp/net.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace pnp;

namespace {

// Direct 3x3 convolution with clamped borders, channel by channel.
std::vector<Image> conv_layer_oracle(const ConvLayer<double>& l, const std::vector<Image>& in) {
  const int h = in[0].height(), w = in[0].width();
  std::vector<Image> out;
  for (int o = 0; o < l.out_channels; ++o) {
    Image y(h, w, l.bias[o]);
    for (int i = 0; i < l.in_channels; ++i)
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
              y(r, c) += l.weights[((o * l.in_channels + i) * 3 + a) * 3 + b] *
                         in[i](std::clamp(r + a - 1, 0, h - 1), std::clamp(c + b - 1, 0, w - 1));
    if (l.relu)
      for (double& v : y.pixels()) v = std::max(v, 0.0);
    out.push_back(std::move(y));
  }
  return out;
}

Image net_oracle(const ConvNet<double>& net, const Image& x) {
  Image scaled = x;
  scaled *= net.input_scale;
  std::vector<Image> act{scaled};
  for (const auto& l : net.layers) act = conv_layer_oracle(l, act);
  Image out = act[0];
  out *= 1.0 / net.input_scale;
  return net.residual ? x - out : out;
}

}  // namespace

TEST(ConvNet, ForwardMatchesDirectConvolutionOracle) {
  oracle::Gen g(40);
  for (bool residual : {true, false}) {
    const auto net = gradcheck::random_net(41, 5, residual, 1.0 / 255.0);
    const Image x = g.image(7, 9);
    EXPECT_LT(max_abs_diff(forward(net, x), net_oracle(net, x)), 1e-9);
  }
}

TEST(ConvNet, BatchForwardEqualsPerImageForward) {
  oracle::Gen g(42);
  const auto net = gradcheck::random_net(43, 4, true, 1.0);
  std::vector<Image> batch{g.image(6, 5, -1, 1), g.image(6, 5, -1, 1), g.image(6, 5, -1, 1)};
  const auto out = forward_batch(net, std::span<const Image>(batch));
  for (std::size_t i = 0; i < batch.size(); ++i) EXPECT_LT(max_abs_diff(out[i], forward(net, batch[i])), 1e-12);
}

TEST(ConvNet, ZeroLastLayerGivesIdentity) {
  auto net = init_weights<float>(dncnn_layers(5, 8), RngSeed{1}, true, 1.0 / 255.0);
  zero_last_layer(net);
  oracle::Gen g(44);
  const Image x = g.image(10, 10);
  EXPECT_EQ(forward(net, x), x);
}

TEST(ConvNet, ShapeBookkeeping) {
  const auto net = init_weights<double>(dncnn_layers(7, 32), RngSeed{2});
  EXPECT_EQ(net.depth(), 7);
  EXPECT_EQ(net.receptive_field(), 15);
  EXPECT_EQ(net.parameter_count(), std::size_t(32 * 9 + 32 + 5 * (32 * 32 * 9 + 32) + 32 * 9 + 1));
  auto bad = net;
  bad.layers[2].in_channels = 3;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(ConvNet, HeInitStatistics) {
  const auto net = init_weights<double>(dncnn_layers(3, 64), RngSeed{3});
  const auto& w = net.layers[1].weights;
  double s2 = 0.0;
  for (double v : w) s2 += v * v;
  EXPECT_NEAR(std::sqrt(s2 / w.size()), std::sqrt(2.0 / (9.0 * 64)), 0.003);
  for (double b : net.layers[1].bias) EXPECT_EQ(b, 0.0);
}

TEST(ConvNet, GradientsMatchFiniteDifferencesOnSmallNets) {
  oracle::Gen g(45);
  for (int trial = 0; trial < 4; ++trial) {
    const bool residual = trial % 2 == 0;
    const double scale = trial < 2 ? 1.0 : 1.0 / 255.0;
    const auto net = gradcheck::random_net(100 + trial, 3, residual, scale);
    const double hi = scale == 1.0 ? 1.0 : 255.0;
    std::vector<Image> batch{g.image(5, 6, 0, hi), g.image(5, 6, 0, hi)};
    std::vector<Image> w{g.image(5, 6, -1, 1), g.image(5, 6, -1, 1)};
    const auto rep = gradcheck::check_net(net, batch, w);
    EXPECT_LT(rep.max_rel_param, 1e-4) << "trial " << trial;
    EXPECT_LT(rep.max_rel_input, 1e-4) << "trial " << trial;
  }
}

TEST(ConvNet, SingleImageBackwardMatchesBatchBackward) {
  oracle::Gen g(46);
  const auto net = gradcheck::random_net(47, 4, true, 1.0);
  const Image x = g.image(4, 4, -1, 1), u = g.image(4, 4, -1, 1);
  const auto [grads, dx] = backward(net, x, u);
  const auto tape = forward_tape(net, std::span<const Image>(&x, 1), true);
  const auto r = backward(net, tape, std::span<const Image>(&u, 1), true);
  EXPECT_EQ(grads, r.grads);
  EXPECT_EQ(dx, r.input_grads[0]);
}

TEST(Weights, RoundTripIsExactForFloatNets) {
  auto net = init_weights<float>(dncnn_layers(4, 6), RngSeed{5}, true, 1.0 / 255.0);
  net.sigma_r = 7.0;
  std::stringstream s;
  write_weights(s, net);
  const auto back = read_weights<float>(s);
  EXPECT_EQ(back, net);
}

TEST(Weights, HeaderLayoutIsLittleEndian) {
  auto net = init_weights<float>(dncnn_layers(2, 2), RngSeed{6});
  std::stringstream s;
  write_weights(s, net);
  const std::string bytes = s.str();
  ASSERT_GE(bytes.size(), 16u);
  EXPECT_EQ(bytes.substr(0, 6), "PNPCNN");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1u);   // version
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 2u);  // layer count
}

TEST(Weights, RejectsCorruptFiles) {
  std::stringstream junk("not weights at all");
  EXPECT_THROW(read_weights<float>(junk), IoError);
  auto net = init_weights<float>(dncnn_layers(2, 2), RngSeed{7});
  std::stringstream s;
  write_weights(s, net);
  std::stringstream cut(s.str().substr(0, s.str().size() - 3));
  EXPECT_THROW(read_weights<float>(cut), IoError);
}

TEST(NetDenoiser, BatchOfMixedSizesFallsBackToSingles) {
  auto net = init_weights<float>(dncnn_layers(3, 4), RngSeed{8});
  const NetDenoiser<float> d(net);
  oracle::Gen g(48);
  std::vector<Image> batch{g.image(5, 5), g.image(6, 4)};
  const auto out = d.denoise_batch(batch);
  EXPECT_EQ(out[0], d.denoise(batch[0]));
  EXPECT_EQ(out[1], d.denoise(batch[1]));
}

TEST(MedianDenoiser, MatchesOracle) {
  oracle::Gen g(49);
  const Image x = g.image(6, 7);
  const Image y = MedianDenoiser().denoise(x);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 7; ++c) {
      std::vector<double> v;
      for (int a = -1; a <= 1; ++a)
        for (int b = -1; b <= 1; ++b) v.push_back(x(std::clamp(r + a, 0, 5), std::clamp(c + b, 0, 6)));
      EXPECT_EQ(y(r, c), oracle::median(v));
    }
}
