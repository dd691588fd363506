#pragma once

#include <algorithm>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pnp/image.hpp"
#include "pnp/net.hpp"

namespace pnp {

/// Anything that maps an image to a denoised image of the same size. Both
/// the deblurring and the inpainting drivers take the prior through this
/// interface, so one trained network serves every task.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  [[nodiscard]] virtual Image denoise(const Image& v) const = 0;
  [[nodiscard]] virtual std::vector<Image> denoise_batch(std::span<const Image> batch) const {
    std::vector<Image> out;
    out.reserve(batch.size());
    for (const auto& v : batch) out.push_back(denoise(v));
    return out;
  }
  [[nodiscard]] virtual std::string descriptor() const = 0;
};

class IdentityDenoiser final : public Denoiser {
 public:
  [[nodiscard]] Image denoise(const Image& v) const override { return v; }
  [[nodiscard]] std::string descriptor() const override { return "identity"; }
};

/// 3x3 median with replicated borders.
class MedianDenoiser final : public Denoiser {
 public:
  [[nodiscard]] Image denoise(const Image& v) const override {
    const int h = v.height(), w = v.width();
    Image out(h, w);
    double win[9];
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        int n = 0;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc)
            win[n++] = v(std::clamp(r + dr, 0, h - 1), std::clamp(c + dc, 0, w - 1));
        std::nth_element(win, win + 4, win + 9);
        out(r, c) = win[4];
      }
    }
    return out;
  }
  [[nodiscard]] std::string descriptor() const override { return "median3"; }
};

/// A trained ConvNet used as a black box.
template <typename Scalar = float>
class NetDenoiser final : public Denoiser {
 public:
  explicit NetDenoiser(ConvNet<Scalar> net, std::string name = "net")
      : net_(std::make_shared<const ConvNet<Scalar>>(std::move(net))), name_(std::move(name)) {}

  [[nodiscard]] Image denoise(const Image& v) const override { return forward(*net_, v); }
  [[nodiscard]] std::vector<Image> denoise_batch(std::span<const Image> batch) const override {
    if (batch.empty()) return {};
    const bool uniform = std::all_of(batch.begin(), batch.end(),
                                     [&](const Image& v) { return v.same_shape(batch.front()); });
    if (!uniform) return Denoiser::denoise_batch(batch);
    return forward_batch(*net_, batch);
  }
  [[nodiscard]] std::string descriptor() const override { return name_; }
  [[nodiscard]] const ConvNet<Scalar>& net() const { return *net_; }

 private:
  std::shared_ptr<const ConvNet<Scalar>> net_;
  std::string name_;
};

}  // namespace pnp
