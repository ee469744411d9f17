#pragma once

// Degradation operators H and the AWGN noise model.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "diamond/error.hpp"
#include "diamond/image.hpp"
#include "diamond/random.hpp"

namespace diamond {

enum class Boundary { replicate, periodic };

/// Odd-sized square correlation kernel.
class Kernel {
 public:
  Kernel(std::size_t size, std::vector<double> taps) : size_(size), taps_(std::move(taps)) {
    if (size_ % 2 == 0) throw InvalidArgument("kernel size must be odd, got " + std::to_string(size_));
    if (taps_.size() != size_ * size_) throw DimensionError("kernel tap count does not match size");
  }

  std::size_t size() const noexcept { return size_; }
  std::size_t radius() const noexcept { return size_ / 2; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return taps_[i * size_ + j]; }
  const std::vector<double>& taps() const noexcept { return taps_; }

 private:
  std::size_t size_;
  std::vector<double> taps_;
};

/// taps[i,j] proportional to exp(-((i-c)^2 + (j-c)^2) / (2 sigma^2)), unit sum.
inline Kernel gaussian_kernel(std::size_t size, double sigma) {
  if (size == 0 || size % 2 == 0) throw InvalidArgument("gaussian kernel size must be odd and >= 1");
  if (!(sigma > 0.0)) throw InvalidArgument("gaussian kernel sigma must be positive");
  const double c = double(size / 2);
  std::vector<double> taps(size * size);
  double sum = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      const double di = double(i) - c;
      const double dj = double(j) - c;
      const double w = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
      taps[i * size + j] = w;
      sum += w;
    }
  }
  for (double& t : taps) t /= sum;
  return Kernel(size, std::move(taps));
}

namespace detail {

inline std::size_t boundary_index(std::ptrdiff_t i, std::size_t n, Boundary b) {
  const auto len = std::ptrdiff_t(n);
  if (b == Boundary::periodic) return std::size_t(((i % len) + len) % len);
  return std::size_t(std::clamp<std::ptrdiff_t>(i, 0, len - 1));
}

}  // namespace detail

/// 2-D correlation of `img` with `k`; out-of-range samples follow `boundary`.
inline Image correlate(const Image& img, const Kernel& k, Boundary boundary) {
  const std::size_t rows = img.rows();
  const std::size_t cols = img.cols();
  const auto rad = std::ptrdiff_t(k.radius());
  Image out(rows, cols);

  // Column indices are resolved once per kernel column.
  std::vector<std::size_t> col_index(cols * k.size());
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t j = 0; j < k.size(); ++j) {
      col_index[c * k.size() + j] = detail::boundary_index(std::ptrdiff_t(c) + std::ptrdiff_t(j) - rad, cols, boundary);
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k.size(); ++i) {
        const std::size_t rr = detail::boundary_index(std::ptrdiff_t(r) + std::ptrdiff_t(i) - rad, rows, boundary);
        for (std::size_t j = 0; j < k.size(); ++j) acc += k(i, j) * img(rr, col_index[c * k.size() + j]);
      }
      out(r, c) = float(acc);
    }
  }
  return out;
}

// -- bicubic resampling -------------------------------------------------------

inline constexpr double kBicubicA = -0.5;

/// Cubic convolution kernel with parameter a.
inline double cubic_weight(double t, double a = kBicubicA) {
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

enum class ResizeFactor { half, twice };

inline double factor_value(ResizeFactor f) { return f == ResizeFactor::half ? 0.5 : 2.0; }

namespace detail {

// Output sample x reads input coordinate (x + 0.5) / factor - 0.5 through four
// cubic taps; indices are clamped (replicate boundary).
struct ResampleTaps {
  std::vector<std::array<std::size_t, 4>> index;
  std::vector<std::array<double, 4>> weight;
};

inline ResampleTaps resample_taps(std::size_t n_in, std::size_t n_out, double factor) {
  ResampleTaps taps;
  taps.index.resize(n_out);
  taps.weight.resize(n_out);
  for (std::size_t x = 0; x < n_out; ++x) {
    const double src = (double(x) + 0.5) / factor - 0.5;
    const double base = std::floor(src);
    const double t = src - base;
    for (int m = 0; m < 4; ++m) {
      taps.index[x][m] = boundary_index(std::ptrdiff_t(base) - 1 + m, n_in, Boundary::replicate);
      taps.weight[x][m] = cubic_weight(t - double(m - 1));
    }
  }
  return taps;
}

}  // namespace detail

/// Separable bicubic resize (a = -0.5, center-aligned, replicate boundary).
/// Output dims are round(factor * input dims); halving requires even dims.
inline Image bicubic_resize(const Image& img, ResizeFactor factor) {
  if (factor == ResizeFactor::half && (img.rows() % 2 != 0 || img.cols() % 2 != 0)) {
    throw DimensionError("bicubic downsample needs even dimensions, got " + std::to_string(img.rows()) +
                         "x" + std::to_string(img.cols()));
  }
  const double f = factor_value(factor);
  const auto out_rows = std::size_t(std::lround(f * double(img.rows())));
  const auto out_cols = std::size_t(std::lround(f * double(img.cols())));
  const auto col_taps = detail::resample_taps(img.cols(), out_cols, f);
  const auto row_taps = detail::resample_taps(img.rows(), out_rows, f);

  std::vector<double> tmp(img.rows() * out_cols);
  for (std::size_t r = 0; r < img.rows(); ++r) {
    for (std::size_t x = 0; x < out_cols; ++x) {
      double acc = 0.0;
      for (int m = 0; m < 4; ++m) acc += col_taps.weight[x][m] * img(r, col_taps.index[x][m]);
      tmp[r * out_cols + x] = acc;
    }
  }
  Image out(out_rows, out_cols);
  for (std::size_t y = 0; y < out_rows; ++y) {
    for (std::size_t c = 0; c < out_cols; ++c) {
      double acc = 0.0;
      for (int m = 0; m < 4; ++m) acc += row_taps.weight[y][m] * tmp[row_taps.index[y][m] * out_cols + c];
      out(y, c) = float(acc);
    }
  }
  return out;
}

// -- degradation operators ---------------------------------------------------

enum class DegradationKind { identity, blur, sr2x_resample };

/// Same-size linear measurement operator H.
class DegradationOp {
 public:
  static DegradationOp identity() { return DegradationOp(DegradationKind::identity, std::nullopt, Boundary::replicate); }
  static DegradationOp blur(Kernel k, Boundary b = Boundary::replicate) {
    return DegradationOp(DegradationKind::blur, std::move(k), b);
  }
  // Bicubic x2 downsample followed by bicubic x2 upsample.
  static DegradationOp sr2x_resample() {
    return DegradationOp(DegradationKind::sr2x_resample, std::nullopt, Boundary::replicate);
  }

  DegradationKind kind() const noexcept { return kind_; }
  Boundary boundary() const noexcept { return boundary_; }
  const std::optional<Kernel>& kernel() const noexcept { return kernel_; }

  Image operator()(const Image& img) const {
    switch (kind_) {
      case DegradationKind::identity: return img;
      case DegradationKind::blur: return correlate(img, *kernel_, boundary_);
      case DegradationKind::sr2x_resample:
        return bicubic_resize(bicubic_resize(img, ResizeFactor::half), ResizeFactor::twice);
    }
    return img;
  }

  std::string describe() const {
    switch (kind_) {
      case DegradationKind::identity: return "identity";
      case DegradationKind::blur:
        return "blur(size=" + std::to_string(kernel_->size()) +
               (boundary_ == Boundary::periodic ? ",periodic)" : ",replicate)");
      case DegradationKind::sr2x_resample: return "sr2x_resample";
    }
    return "?";
  }

 private:
  DegradationOp(DegradationKind kind, std::optional<Kernel> k, Boundary b)
      : kind_(kind), kernel_(std::move(k)), boundary_(b) {}

  DegradationKind kind_;
  std::optional<Kernel> kernel_;
  Boundary boundary_;
};

inline Image apply_operator(const DegradationOp& op, const Image& img) { return op(img); }

// -- noise -------------------------------------------------------------------

/// Per-pixel noise standard deviation in [0, 1] intensity units.
struct NoiseLevelMap {
  Image sigma;
};

struct NoisyImage {
  Image image;
  NoiseLevelMap noise_level;
};

/// Adds i.i.d. N(0, (sigma255/255)^2) noise drawn from GaussianStream(seed) in
/// row-major pixel order. The result is not clamped.
inline NoisyImage add_awgn(const Image& img, double sigma255, std::uint64_t seed) {
  if (!(sigma255 >= 0.0)) throw InvalidArgument("noise sigma must be non-negative");
  const double sigma = sigma255 / 255.0;
  NoisyImage result{img, NoiseLevelMap{Image(img.rows(), img.cols(), float(sigma))}};
  if (sigma == 0.0) return result;
  GaussianStream noise(seed);
  for (float& v : result.image.pixels()) v = float(double(v) + sigma * noise.next());
  return result;
}

}  // namespace diamond
