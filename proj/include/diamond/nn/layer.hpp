#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "diamond/error.hpp"
#include "diamond/nn/tensor.hpp"

namespace diamond::nn {

class ShapeError : public Error {
 public:
  using Error::Error;
};

enum class LayerKind { conv, conv_transpose, batchnorm, activation, residual_add, input_skip };
enum class ActivationKind { none, relu, leaky_relu };

inline constexpr float kDefaultLeakySlope = 0.2f;
inline constexpr float kBatchNormEpsilon = 1e-5f;
// Layer index that refers to the graph input in `source`.
inline constexpr int kGraphInput = -1;

inline std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::conv_transpose: return "conv_transpose";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::activation: return "activation";
    case LayerKind::residual_add: return "residual_add";
    case LayerKind::input_skip: return "input_skip";
  }
  return "?";
}

inline std::string to_string(ActivationKind a) {
  switch (a) {
    case ActivationKind::none: return "none";
    case ActivationKind::relu: return "relu";
    case ActivationKind::leaky_relu: return "leaky_relu";
  }
  return "?";
}

/// One node of a sequential graph. Each layer consumes the previous layer's
/// output; residual_add also reads `source`, and input_skip forwards `source`.
///
/// conv / conv_transpose: weight [out_channels, in_channels, kernel_h, kernel_w],
/// bias [out_channels], odd kernels, zero padding floor(k/2), stride 1 or 2.
/// batchnorm: `out_channels` channels of gamma, beta, running mean and variance.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::activation;
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  int stride = 1;
  ActivationKind activation = ActivationKind::none;
  float slope = kDefaultLeakySlope;
  int source = kGraphInput;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct LayerParams {
  std::vector<float> weight{};
  std::vector<float> bias{};
  std::vector<float> gamma{};
  std::vector<float> beta{};
  std::vector<float> mean{};
  std::vector<float> var{};

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// Named parameter tensor of a layer, in serialization order.
struct ParamSlot {
  std::string suffix;
  std::vector<std::size_t> dims;
  std::vector<float> LayerParams::*member;

  std::size_t count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

inline std::vector<ParamSlot> param_slots(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::conv:
    case LayerKind::conv_transpose:
      return {{"weight", {l.out_channels, l.in_channels, l.kernel_h, l.kernel_w}, &LayerParams::weight},
              {"bias", {l.out_channels}, &LayerParams::bias}};
    case LayerKind::batchnorm:
      return {{"gamma", {l.out_channels}, &LayerParams::gamma},
              {"beta", {l.out_channels}, &LayerParams::beta},
              {"mean", {l.out_channels}, &LayerParams::mean},
              {"var", {l.out_channels}, &LayerParams::var}};
    default: return {};
  }
}

namespace detail {

[[noreturn]] inline void shape_fail(const LayerSpec& l, const std::string& msg) {
  throw ShapeError("layer '" + l.name + "' (" + to_string(l.kind) + "): " + msg);
}

inline void check_params(const LayerSpec& l, const LayerParams& p) {
  for (const auto& slot : param_slots(l)) {
    if ((p.*slot.member).size() != slot.count()) shape_fail(l, "parameter '" + slot.suffix + "' has wrong length");
  }
}

inline void check_conv_spec(const LayerSpec& l) {
  if (l.kernel_h % 2 == 0 || l.kernel_w % 2 == 0) shape_fail(l, "kernel sizes must be odd");
  if (l.stride != 1 && l.stride != 2) shape_fail(l, "stride must be 1 or 2");
  if (l.out_channels == 0 || l.in_channels == 0) shape_fail(l, "channel counts must be positive");
}

// Cross-correlation, zero padding floor(k/2); stride 2 halves even dims.
inline Tensor conv_forward(const LayerSpec& l, const LayerParams& p, const Tensor& in) {
  check_conv_spec(l);
  if (in.channels() != l.in_channels) {
    shape_fail(l, "expected " + std::to_string(l.in_channels) + " input channels, got " + std::to_string(in.channels()));
  }
  const std::size_t s = std::size_t(l.stride);
  if (s == 2 && (in.height() % 2 != 0 || in.width() % 2 != 0)) {
    shape_fail(l, "stride-2 convolution needs even input dims, got " + to_string(in.shape()));
  }
  const auto H = std::ptrdiff_t(in.height());
  const auto W = std::ptrdiff_t(in.width());
  const auto pad_h = std::ptrdiff_t(l.kernel_h / 2);
  const auto pad_w = std::ptrdiff_t(l.kernel_w / 2);
  const std::size_t out_h = in.height() / s;
  const std::size_t out_w = in.width() / s;
  Tensor out({l.out_channels, out_h, out_w});

  for (std::size_t oc = 0; oc < l.out_channels; ++oc) {
    auto dst = out.plane(oc);
    std::fill(dst.begin(), dst.end(), p.bias[oc]);
    for (std::size_t ic = 0; ic < l.in_channels; ++ic) {
      auto src = in.plane(ic);
      for (std::size_t ky = 0; ky < l.kernel_h; ++ky) {
        for (std::size_t kx = 0; kx < l.kernel_w; ++kx) {
          const float w = p.weight[((oc * l.in_channels + ic) * l.kernel_h + ky) * l.kernel_w + kx];
          if (w == 0.0f) continue;
          const std::ptrdiff_t dx = std::ptrdiff_t(kx) - pad_w;
          // ox range with 0 <= ox*s + dx < W
          const std::ptrdiff_t ox_lo = dx < 0 ? (-dx + std::ptrdiff_t(s) - 1) / std::ptrdiff_t(s) : 0;
          const std::ptrdiff_t ox_hi =
              W - 1 - dx < 0 ? 0 : std::min<std::ptrdiff_t>(std::ptrdiff_t(out_w), (W - 1 - dx) / std::ptrdiff_t(s) + 1);
          for (std::size_t oy = 0; oy < out_h; ++oy) {
            const std::ptrdiff_t iy = std::ptrdiff_t(oy * s) + std::ptrdiff_t(ky) - pad_h;
            if (iy < 0 || iy >= H) continue;
            float* out_row = dst.data() + oy * out_w;
            const float* in_row = src.data() + iy * W;
            if (s == 1) {
              for (std::ptrdiff_t ox = ox_lo; ox < ox_hi; ++ox) out_row[ox] += w * in_row[ox + dx];
            } else {
              for (std::ptrdiff_t ox = ox_lo; ox < ox_hi; ++ox) out_row[ox] += w * in_row[2 * ox + dx];
            }
          }
        }
      }
    }
  }
  return out;
}

// Transposed convolution: input (iy, ix) scatters into (iy*s - pad + ky, ix*s - pad + kx);
// output dims are exactly s times the input dims.
inline Tensor conv_transpose_forward(const LayerSpec& l, const LayerParams& p, const Tensor& in) {
  check_conv_spec(l);
  if (in.channels() != l.in_channels) {
    shape_fail(l, "expected " + std::to_string(l.in_channels) + " input channels, got " + std::to_string(in.channels()));
  }
  const std::size_t s = std::size_t(l.stride);
  const auto pad_h = std::ptrdiff_t(l.kernel_h / 2);
  const auto pad_w = std::ptrdiff_t(l.kernel_w / 2);
  const std::size_t out_h = in.height() * s;
  const std::size_t out_w = in.width() * s;
  const auto OH = std::ptrdiff_t(out_h);
  const auto OW = std::ptrdiff_t(out_w);
  Tensor out({l.out_channels, out_h, out_w});

  for (std::size_t oc = 0; oc < l.out_channels; ++oc) {
    auto dst = out.plane(oc);
    std::fill(dst.begin(), dst.end(), p.bias[oc]);
    for (std::size_t ic = 0; ic < l.in_channels; ++ic) {
      auto src = in.plane(ic);
      for (std::size_t ky = 0; ky < l.kernel_h; ++ky) {
        for (std::size_t kx = 0; kx < l.kernel_w; ++kx) {
          const float w = p.weight[((oc * l.in_channels + ic) * l.kernel_h + ky) * l.kernel_w + kx];
          if (w == 0.0f) continue;
          const std::ptrdiff_t dx = std::ptrdiff_t(kx) - pad_w;
          for (std::size_t iy = 0; iy < in.height(); ++iy) {
            const std::ptrdiff_t oy = std::ptrdiff_t(iy * s) + std::ptrdiff_t(ky) - pad_h;
            if (oy < 0 || oy >= OH) continue;
            float* out_row = dst.data() + oy * OW;
            const float* in_row = src.data() + iy * in.width();
            for (std::size_t ix = 0; ix < in.width(); ++ix) {
              const std::ptrdiff_t ox = std::ptrdiff_t(ix * s) + dx;
              if (ox >= 0 && ox < OW) out_row[ox] += w * in_row[ix];
            }
          }
        }
      }
    }
  }
  return out;
}

inline Tensor batchnorm_forward(const LayerSpec& l, const LayerParams& p, const Tensor& in) {
  if (in.channels() != l.out_channels) {
    shape_fail(l, "expected " + std::to_string(l.out_channels) + " channels, got " + std::to_string(in.channels()));
  }
  Tensor out = in;
  for (std::size_t c = 0; c < in.channels(); ++c) {
    const float scale = p.gamma[c] / std::sqrt(p.var[c] + kBatchNormEpsilon);
    const float mean = p.mean[c];
    const float beta = p.beta[c];
    for (float& v : out.plane(c)) v = scale * (v - mean) + beta;
  }
  return out;
}

inline Tensor activation_forward(const LayerSpec& l, const Tensor& in) {
  Tensor out = in;
  switch (l.activation) {
    case ActivationKind::none: break;
    case ActivationKind::relu:
      for (float& v : out.values()) v = v > 0.0f ? v : 0.0f;
      break;
    case ActivationKind::leaky_relu:
      for (float& v : out.values()) v = v > 0.0f ? v : l.slope * v;
      break;
  }
  return out;
}

}  // namespace detail

/// Runs one layer. `skip` is the tensor named by `layer.source` (residual_add
/// and input_skip only).
inline Tensor layer_forward(const LayerSpec& layer, const LayerParams& params, const Tensor& input,
                            const Tensor* skip = nullptr) {
  detail::check_params(layer, params);
  switch (layer.kind) {
    case LayerKind::conv: return detail::conv_forward(layer, params, input);
    case LayerKind::conv_transpose: return detail::conv_transpose_forward(layer, params, input);
    case LayerKind::batchnorm: return detail::batchnorm_forward(layer, params, input);
    case LayerKind::activation: return detail::activation_forward(layer, input);
    case LayerKind::residual_add: {
      if (!skip) detail::shape_fail(layer, "missing skip tensor");
      if (!(skip->shape() == input.shape())) {
        detail::shape_fail(layer, "cannot add " + to_string(skip->shape()) + " to " + to_string(input.shape()));
      }
      Tensor out = input;
      auto dst = out.values();
      auto src = skip->values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      return out;
    }
    case LayerKind::input_skip:
      if (!skip) detail::shape_fail(layer, "missing skip tensor");
      return *skip;
  }
  detail::shape_fail(layer, "unknown layer kind");
}

}  // namespace diamond::nn
