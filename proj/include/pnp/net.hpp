#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "pnp/image.hpp"
#include "pnp/io.hpp"
#include "pnp/rng.hpp"

namespace pnp {

/// One 3x3 convolution with stride 1 and replicate padding of one pixel.
template <typename Scalar>
struct ConvLayer {
  int out_channels = 0;
  int in_channels = 0;
  bool relu = true;
  std::vector<Scalar> weights;  // [out][in][3][3]
  std::vector<Scalar> bias;     // [out]

  [[nodiscard]] std::size_t fan_in() const { return static_cast<std::size_t>(in_channels) * 9; }
  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

/// Feed-forward stack of 3x3 convolutions.
///
/// With `residual` set the network predicts the noise and returns
/// input - raw(input). The raw stack sees `input * input_scale` and its
/// output is divided by `input_scale`, so intensities stay in [0, 255]
/// outside while the weights work on a unit range inside.
template <typename Scalar>
struct ConvNet {
  std::vector<ConvLayer<Scalar>> layers;
  bool residual = true;
  double input_scale = 1.0;
  double sigma_r = 0.0;  // noise level the net was trained for, 0 if unknown

  [[nodiscard]] int depth() const { return static_cast<int>(layers.size()); }
  [[nodiscard]] int receptive_field() const { return 2 * depth() + 1; }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }

  void validate() const {
    if (layers.empty()) throw InvalidArgument("network has no layers");
    if (layers.front().in_channels != 1) throw InvalidArgument("first layer must take 1 channel");
    if (layers.back().out_channels != 1) throw InvalidArgument("last layer must emit 1 channel");
    if (layers.back().relu) throw InvalidArgument("last layer must be linear");
    if (!(input_scale > 0.0)) throw InvalidArgument("input scale must be positive");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (i > 0 && l.in_channels != layers[i - 1].out_channels)
        throw InvalidArgument("layer " + std::to_string(i) + " channel mismatch");
      if (l.weights.size() != static_cast<std::size_t>(l.out_channels) * l.fan_in() ||
          l.bias.size() != static_cast<std::size_t>(l.out_channels))
        throw InvalidArgument("layer " + std::to_string(i) + " parameter size mismatch");
      for (Scalar w : l.weights)
        if (!std::isfinite(static_cast<double>(w))) throw InvalidArgument("non-finite weight");
      for (Scalar b : l.bias)
        if (!std::isfinite(static_cast<double>(b))) throw InvalidArgument("non-finite bias");
    }
  }

  template <typename T>
  [[nodiscard]] ConvNet<T> cast() const {
    ConvNet<T> out;
    out.residual = residual;
    out.input_scale = input_scale;
    out.sigma_r = sigma_r;
    for (const auto& l : layers) {
      ConvLayer<T> m{l.out_channels, l.in_channels, l.relu, {}, {}};
      m.weights.assign(l.weights.begin(), l.weights.end());
      m.bias.assign(l.bias.begin(), l.bias.end());
      out.layers.push_back(std::move(m));
    }
    return out;
  }

  friend bool operator==(const ConvNet&, const ConvNet&) = default;
};

/// Partial derivatives shaped like a ConvNet's parameters.
template <typename Scalar>
struct GradientSet {
  std::vector<std::vector<Scalar>> weights;
  std::vector<std::vector<Scalar>> bias;

  static GradientSet zeros_like(const ConvNet<Scalar>& net) {
    GradientSet g;
    for (const auto& l : net.layers) {
      g.weights.emplace_back(l.weights.size(), Scalar(0));
      g.bias.emplace_back(l.bias.size(), Scalar(0));
    }
    return g;
  }

  GradientSet& operator+=(const GradientSet& o) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      for (std::size_t i = 0; i < weights[l].size(); ++i) weights[l][i] += o.weights[l][i];
      for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += o.bias[l][i];
    }
    return *this;
  }

  GradientSet& operator*=(Scalar s) {
    for (auto& w : weights)
      for (auto& v : w) v *= s;
    for (auto& b : bias)
      for (auto& v : b) v *= s;
    return *this;
  }

  [[nodiscard]] double squared_norm() const {
    double s = 0.0;
    for (const auto& w : weights)
      for (auto v : w) s += static_cast<double>(v) * v;
    for (const auto& b : bias)
      for (auto v : b) s += static_cast<double>(v) * v;
    return s;
  }

  [[nodiscard]] bool all_finite() const {
    for (const auto& w : weights)
      for (auto v : w)
        if (!std::isfinite(static_cast<double>(v))) return false;
    for (const auto& b : bias)
      for (auto v : b)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  friend bool operator==(const GradientSet&, const GradientSet&) = default;
};

struct LayerSpec {
  int out_channels;
  int in_channels;
  bool relu;
};

/// DnCNN-style stack without batch norm: conv+ReLU, (depth-2) x conv+ReLU,
/// final linear conv back to one channel.
inline std::vector<LayerSpec> dncnn_layers(int depth, int channels) {
  if (depth < 1 || channels < 1) throw InvalidArgument("depth and channels must be >= 1");
  if (depth == 1) return {{1, 1, false}};
  std::vector<LayerSpec> spec;
  spec.push_back({channels, 1, true});
  for (int i = 0; i < depth - 2; ++i) spec.push_back({channels, channels, true});
  spec.push_back({1, channels, false});
  return spec;
}

/// Zero biases, He-normal weights: std = sqrt(2 / (9 * in_channels)).
template <typename Scalar = float>
ConvNet<Scalar> init_weights(std::span<const LayerSpec> spec, RngSeed seed, bool residual = true,
                             double input_scale = 1.0) {
  Rng rng(seed);
  ConvNet<Scalar> net;
  net.residual = residual;
  net.input_scale = input_scale;
  for (const auto& s : spec) {
    ConvLayer<Scalar> l{s.out_channels, s.in_channels, s.relu, {}, {}};
    const double std = std::sqrt(2.0 / (9.0 * s.in_channels));
    l.weights.resize(static_cast<std::size_t>(s.out_channels) * l.fan_in());
    for (auto& w : l.weights) w = static_cast<Scalar>(std * rng.normal());
    l.bias.assign(s.out_channels, Scalar(0));
    net.layers.push_back(std::move(l));
  }
  net.validate();
  return net;
}

template <typename Scalar = float>
ConvNet<Scalar> init_weights(const std::vector<LayerSpec>& spec, RngSeed seed,
                             bool residual = true, double input_scale = 1.0) {
  return init_weights<Scalar>(std::span<const LayerSpec>(spec), seed, residual, input_scale);
}

/// Zeroes the last layer so a residual net starts as the identity map.
template <typename Scalar>
void zero_last_layer(ConvNet<Scalar>& net) {
  auto& l = net.layers.back();
  std::fill(l.weights.begin(), l.weights.end(), Scalar(0));
  std::fill(l.bias.begin(), l.bias.end(), Scalar(0));
}

namespace detail {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Activations of a batch of `count` images of height x width, one row per
// channel, images concatenated along the columns.
struct BatchShape {
  int count;
  int height;
  int width;
  [[nodiscard]] Eigen::Index plane() const { return static_cast<Eigen::Index>(height) * width; }
  [[nodiscard]] Eigen::Index columns() const { return plane() * count; }
};

// o[x] = row[clamp(x + dx, 0, w - 1)] for dx in {-1, 0, 1}.
template <typename Scalar>
inline void copy_shifted_row(const Scalar* row, Scalar* o, int w, int dx) {
  if (w == 1) {
    o[0] = row[0];
    return;
  }
  if (dx == 0) {
    std::copy(row, row + w, o);
  } else if (dx < 0) {
    o[0] = row[0];
    std::copy(row, row + w - 1, o + 1);
  } else {
    std::copy(row + 1, row + w, o);
    o[w - 1] = row[w - 1];
  }
}

// row[clamp(x + dx, 0, w - 1)] += g[x], the adjoint of copy_shifted_row.
template <typename Scalar>
inline void add_shifted_row(const Scalar* g, Scalar* row, int w, int dx) {
  if (w == 1) {
    row[0] += g[0];
    return;
  }
  if (dx == 0) {
    for (int x = 0; x < w; ++x) row[x] += g[x];
  } else if (dx < 0) {
    row[0] += g[0];
    for (int x = 1; x < w; ++x) row[x - 1] += g[x];
  } else {
    for (int x = 0; x < w - 1; ++x) row[x + 1] += g[x];
    row[w - 1] += g[w - 1];
  }
}

// Replicate-padded 3x3 patches: row (c*9 + ky*3 + kx) holds channel c
// shifted by (ky-1, kx-1) with clamped indices.
template <typename Scalar>
void im2col(const RowMatrix<Scalar>& act, const BatchShape& s, RowMatrix<Scalar>& cols) {
  const int h = s.height, w = s.width;
  cols.resize(act.rows() * 9, s.columns());
  for (Eigen::Index c = 0; c < act.rows(); ++c) {
    const Scalar* src = act.row(c).data();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        Scalar* dst = cols.row(c * 9 + ky * 3 + kx).data();
        for (int n = 0; n < s.count; ++n) {
          const Scalar* img = src + n * s.plane();
          Scalar* out = dst + n * s.plane();
          for (int y = 0; y < h; ++y) {
            const Scalar* row = img + static_cast<Eigen::Index>(std::clamp(y + ky - 1, 0, h - 1)) * w;
            Scalar* o = out + static_cast<Eigen::Index>(y) * w;
            copy_shifted_row(row, o, w, kx - 1);
          }
        }
      }
    }
  }
}

// Adjoint of im2col.
template <typename Scalar>
void col2im(const RowMatrix<Scalar>& cols, const BatchShape& s, Eigen::Index channels,
            RowMatrix<Scalar>& act) {
  const int h = s.height, w = s.width;
  act.setZero(channels, s.columns());
  for (Eigen::Index c = 0; c < channels; ++c) {
    Scalar* dst = act.row(c).data();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const Scalar* src = cols.row(c * 9 + ky * 3 + kx).data();
        for (int n = 0; n < s.count; ++n) {
          Scalar* img = dst + n * s.plane();
          const Scalar* in = src + n * s.plane();
          for (int y = 0; y < h; ++y) {
            Scalar* row = img + static_cast<Eigen::Index>(std::clamp(y + ky - 1, 0, h - 1)) * w;
            const Scalar* g = in + static_cast<Eigen::Index>(y) * w;
            add_shifted_row(g, row, w, kx - 1);
          }
        }
      }
    }
  }
}

template <typename Scalar>
Eigen::Map<const RowMatrix<Scalar>> weight_matrix(const ConvLayer<Scalar>& l) {
  return {l.weights.data(), l.out_channels, static_cast<Eigen::Index>(l.fan_in())};
}

template <typename Scalar>
BatchShape batch_shape(std::span<const Image> batch) {
  if (batch.empty()) throw InvalidArgument("empty batch");
  for (const auto& img : batch)
    if (!img.same_shape(batch.front())) throw DimensionError("batch images differ in size");
  return {static_cast<int>(batch.size()), batch.front().height(), batch.front().width()};
}

}  // namespace detail

/// Activations recorded by a forward pass, needed by backward.
template <typename Scalar>
struct ForwardTape {
  detail::BatchShape shape{};
  std::vector<detail::RowMatrix<Scalar>> activations;  // input of each layer, then the raw output
  std::vector<Image> outputs;
};

template <typename Scalar>
ForwardTape<Scalar> forward_tape(const ConvNet<Scalar>& net, std::span<const Image> batch,
                                 bool keep_activations = true) {
  using Mat = detail::RowMatrix<Scalar>;
  const auto shape = detail::batch_shape<Scalar>(batch);
  ForwardTape<Scalar> tape;
  tape.shape = shape;

  Mat act(1, shape.columns());
  for (int n = 0; n < shape.count; ++n)
    for (Eigen::Index i = 0; i < shape.plane(); ++i)
      act(0, n * shape.plane() + i) = static_cast<Scalar>(batch[n][i] * net.input_scale);

  Mat cols;
  for (const auto& layer : net.layers) {
    detail::im2col(act, shape, cols);
    Mat z = detail::weight_matrix(layer) * cols;
    for (int o = 0; o < layer.out_channels; ++o) {
      auto row = z.row(o);
      row.array() += layer.bias[o];
      if (layer.relu) row = row.cwiseMax(Scalar(0));
    }
    if (keep_activations) tape.activations.push_back(std::move(act));
    act = std::move(z);
  }

  const double inv_scale = 1.0 / net.input_scale;
  for (int n = 0; n < shape.count; ++n) {
    Image out(shape.height, shape.width);
    for (Eigen::Index i = 0; i < shape.plane(); ++i) {
      const double raw = static_cast<double>(act(0, n * shape.plane() + i)) * inv_scale;
      out[i] = net.residual ? batch[n][i] - raw : raw;
    }
    tape.outputs.push_back(std::move(out));
  }
  if (keep_activations) tape.activations.push_back(std::move(act));
  return tape;
}

/// Applies the network to each image of a same-size batch.
template <typename Scalar>
std::vector<Image> forward_batch(const ConvNet<Scalar>& net, std::span<const Image> batch) {
  return forward_tape(net, batch, false).outputs;
}

/// Output has the input's size (each layer pads by replication).
template <typename Scalar>
Image forward(const ConvNet<Scalar>& net, const Image& img) {
  return std::move(forward_tape(net, std::span<const Image>(&img, 1), false).outputs.front());
}

template <typename Scalar>
struct BackwardResult {
  GradientSet<Scalar> grads;
  std::vector<Image> input_grads;  // empty unless requested
};

/// Gradients of sum_n <upstream_n, output_n> with respect to the parameters
/// (summed over the batch) and, optionally, each input image.
template <typename Scalar>
BackwardResult<Scalar> backward(const ConvNet<Scalar>& net, const ForwardTape<Scalar>& tape,
                                std::span<const Image> upstream, bool want_input_grad) {
  using Mat = detail::RowMatrix<Scalar>;
  const auto& shape = tape.shape;
  if (tape.activations.size() != net.layers.size() + 1)
    throw InvalidArgument("forward tape was recorded without activations");
  if (upstream.size() != static_cast<std::size_t>(shape.count))
    throw DimensionError("upstream batch size mismatch");

  const double sign = net.residual ? -1.0 : 1.0;
  Mat grad(1, shape.columns());
  for (int n = 0; n < shape.count; ++n) {
    if (upstream[n].height() != shape.height || upstream[n].width() != shape.width)
      throw DimensionError("upstream image size mismatch");
    for (Eigen::Index i = 0; i < shape.plane(); ++i)
      grad(0, n * shape.plane() + i) = static_cast<Scalar>(sign * upstream[n][i] / net.input_scale);
  }

  BackwardResult<Scalar> result;
  result.grads = GradientSet<Scalar>::zeros_like(net);
  Mat cols, dcols;
  for (int l = net.depth() - 1; l >= 0; --l) {
    const auto& layer = net.layers[l];
    if (layer.relu) {
      const auto& out = tape.activations[l + 1];
      grad = (out.array() > Scalar(0)).select(grad, Scalar(0));
    }
    detail::im2col(tape.activations[l], shape, cols);
    Eigen::Map<Mat> dw(result.grads.weights[l].data(), layer.out_channels,
                       static_cast<Eigen::Index>(layer.fan_in()));
    dw.noalias() = grad * cols.transpose();
    for (int o = 0; o < layer.out_channels; ++o) result.grads.bias[l][o] = grad.row(o).sum();
    if (l > 0 || want_input_grad) {
      dcols.noalias() = detail::weight_matrix(layer).transpose() * grad;
      detail::col2im(dcols, shape, layer.in_channels, grad);
    }
  }

  if (want_input_grad) {
    for (int n = 0; n < shape.count; ++n) {
      Image g(shape.height, shape.width);
      for (Eigen::Index i = 0; i < shape.plane(); ++i) {
        const double through = static_cast<double>(grad(0, n * shape.plane() + i)) * net.input_scale;
        g[i] = (net.residual ? upstream[n][i] : 0.0) + through;
      }
      result.input_grads.push_back(std::move(g));
    }
  }
  return result;
}

/// Single-image convenience: parameter gradients and the input gradient of
/// <upstream, forward(net, img)>.
template <typename Scalar>
std::pair<GradientSet<Scalar>, Image> backward(const ConvNet<Scalar>& net, const Image& img,
                                               const Image& upstream) {
  const auto tape = forward_tape(net, std::span<const Image>(&img, 1), true);
  auto r = backward(net, tape, std::span<const Image>(&upstream, 1), true);
  return {std::move(r.grads), std::move(r.input_grads.front())};
}

// Weight file (all integers and floats little-endian):
//   "PNPCNN\0\0" | u32 version=1 | u32 layer_count | u8 residual | 3 zero bytes
//   | f64 sigma_r | f64 input_scale
//   per layer: u32 out | u32 in | u32 kh=3 | u32 kw=3 | u8 relu | 3 zero bytes
//              | f32 weights[out*in*9] | f32 bias[out]
namespace detail {

inline constexpr char kWeightMagic[8] = {'P', 'N', 'P', 'C', 'N', 'N', 0, 0};
inline constexpr std::uint32_t kWeightVersion = 1;

template <typename U>
void put_le(std::ostream& out, U v) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(std::istream& in) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw IoError("truncated weight file");
    v |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace detail

template <typename Scalar>
void write_weights(std::ostream& out, const ConvNet<Scalar>& net) {
  net.validate();
  out.write(detail::kWeightMagic, 8);
  detail::put_le<std::uint32_t>(out, detail::kWeightVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers.size()));
  detail::put_le<std::uint32_t>(out, net.residual ? 1u : 0u);
  detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(net.sigma_r));
  detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(net.input_scale));
  for (const auto& l : net.layers) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.out_channels));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.in_channels));
    detail::put_le<std::uint32_t>(out, 3u);
    detail::put_le<std::uint32_t>(out, 3u);
    detail::put_le<std::uint32_t>(out, l.relu ? 1u : 0u);
    for (Scalar w : l.weights)
      detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(w)));
    for (Scalar b : l.bias)
      detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(b)));
  }
}

template <typename Scalar = float>
ConvNet<Scalar> read_weights(std::istream& in) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kWeightMagic, 8) != 0)
    throw IoError("not a network weight file");
  if (detail::get_le<std::uint32_t>(in) != detail::kWeightVersion)
    throw IoError("unsupported weight file version");
  const auto count = detail::get_le<std::uint32_t>(in);
  if (count == 0 || count > 4096) throw IoError("implausible layer count");
  ConvNet<Scalar> net;
  net.residual = (detail::get_le<std::uint32_t>(in) & 0xFF) != 0;
  net.sigma_r = std::bit_cast<double>(detail::get_le<std::uint64_t>(in));
  net.input_scale = std::bit_cast<double>(detail::get_le<std::uint64_t>(in));
  for (std::uint32_t i = 0; i < count; ++i) {
    ConvLayer<Scalar> l;
    l.out_channels = static_cast<int>(detail::get_le<std::uint32_t>(in));
    l.in_channels = static_cast<int>(detail::get_le<std::uint32_t>(in));
    const auto kh = detail::get_le<std::uint32_t>(in), kw = detail::get_le<std::uint32_t>(in);
    if (kh != 3 || kw != 3) throw IoError("only 3x3 layers are supported");
    if (l.out_channels <= 0 || l.in_channels <= 0 || l.out_channels > 65536 || l.in_channels > 65536)
      throw IoError("implausible channel count");
    l.relu = (detail::get_le<std::uint32_t>(in) & 0xFF) != 0;
    l.weights.resize(static_cast<std::size_t>(l.out_channels) * l.fan_in());
    for (auto& w : l.weights) w = static_cast<Scalar>(std::bit_cast<float>(detail::get_le<std::uint32_t>(in)));
    l.bias.resize(l.out_channels);
    for (auto& b : l.bias) b = static_cast<Scalar>(std::bit_cast<float>(detail::get_le<std::uint32_t>(in)));
    net.layers.push_back(std::move(l));
  }
  try {
    net.validate();
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("invalid network in weight file: ") + e.what());
  }
  return net;
}

template <typename Scalar>
void save_weights(const std::filesystem::path& path, const ConvNet<Scalar>& net) {
  write_file_atomic(path, [&](std::ostream& out) { write_weights(out, net); });
}

template <typename Scalar = float>
ConvNet<Scalar> load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_weights<Scalar>(in);
}

}  // namespace pnp
