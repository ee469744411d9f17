#pragma once

// Picture-quality indices on the 0-255 intensity scale.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "diamond/error.hpp"
#include "diamond/image.hpp"

namespace diamond {

inline constexpr double kPeak = 255.0;

/// 255 * sqrt(mean((a - b)^2)) for [0, 1]-normalized inputs.
inline double rmse(const Image& a, const Image& b) {
  require_same_shape(a, b, "rmse");
  double acc = 0.0;
  auto pa = a.pixels();
  auto pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = double(pa[i]) - double(pb[i]);
    acc += d * d;
  }
  return kPeak * std::sqrt(acc / double(pa.size()));
}

/// PSNR in dB, or "infinite" when the two images are identical.
class Psnr {
 public:
  static Psnr infinite() { return Psnr(0.0, true); }
  static Psnr from_rmse(double rmse255) {
    if (rmse255 < 0.0 || std::isnan(rmse255)) throw InvalidArgument("rmse must be non-negative");
    if (rmse255 == 0.0) return infinite();
    return Psnr(20.0 * std::log10(kPeak / rmse255), false);
  }

  bool is_infinite() const noexcept { return infinite_; }
  double db() const {
    if (infinite_) throw InvalidArgument("PSNR of identical images is infinite");
    return db_;
  }
  std::string to_string() const;

 private:
  Psnr(double db, bool inf) : db_(db), infinite_(inf) {}
  double db_;
  bool infinite_;
};

inline std::string Psnr::to_string() const {
  if (infinite_) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", db_);
  return buf;
}

inline Psnr psnr(const Image& a, const Image& b) { return Psnr::from_rmse(rmse(a, b)); }

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = kPeak;
};

namespace detail {

struct SsimTerms {
  double luminance;
  double contrast_structure;
};

// Per-window luminance and contrast-structure factors at every fully-contained
// window position; inputs are scaled to [0, dynamic_range].
inline std::vector<SsimTerms> ssim_map(const Image& a, const Image& b, const SsimOptions& opt) {
  require_same_shape(a, b, "ssim");
  const std::size_t w = opt.window;
  if (a.rows() < w || a.cols() < w) {
    throw DimensionError("ssim needs images of at least " + std::to_string(w) + "x" + std::to_string(w));
  }
  std::vector<double> g(w);
  double gsum = 0.0;
  const double c = double(w / 2);
  for (std::size_t i = 0; i < w; ++i) {
    g[i] = std::exp(-(double(i) - c) * (double(i) - c) / (2.0 * opt.sigma * opt.sigma));
    gsum += g[i];
  }
  for (double& v : g) v /= gsum;

  const double c1 = (opt.k1 * opt.dynamic_range) * (opt.k1 * opt.dynamic_range);
  const double c2 = (opt.k2 * opt.dynamic_range) * (opt.k2 * opt.dynamic_range);
  const double scale = opt.dynamic_range;

  const std::size_t out_r = a.rows() - w + 1;
  const std::size_t out_c = a.cols() - w + 1;
  std::vector<SsimTerms> terms;
  terms.reserve(out_r * out_c);
  for (std::size_t r = 0; r < out_r; ++r) {
    for (std::size_t col = 0; col < out_c; ++col) {
      double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
      for (std::size_t i = 0; i < w; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          const double wt = g[i] * g[j];
          const double x = scale * a(r + i, col + j);
          const double y = scale * b(r + i, col + j);
          mx += wt * x;
          my += wt * y;
          xx += wt * x * x;
          yy += wt * y * y;
          xy += wt * x * y;
        }
      }
      const double vx = xx - mx * mx;
      const double vy = yy - my * my;
      const double cov = xy - mx * my;
      terms.push_back({(2.0 * mx * my + c1) / (mx * mx + my * my + c1), (2.0 * cov + c2) / (vx + vy + c2)});
    }
  }
  return terms;
}

}  // namespace detail

/// Mean SSIM over all fully-contained windows (Gaussian 11x11, sigma 1.5,
/// K1 = 0.01, K2 = 0.03, L = 255).
inline double ssim(const Image& a, const Image& b, const SsimOptions& opt = {}) {
  const auto terms = detail::ssim_map(a, b, opt);
  double acc = 0.0;
  for (const auto& t : terms) acc += t.luminance * t.contrast_structure;
  return acc / double(terms.size());
}

/// Mean contrast-structure factor of SSIM (the luminance factor dropped).
inline double ssim_contrast_structure(const Image& a, const Image& b, const SsimOptions& opt = {}) {
  const auto terms = detail::ssim_map(a, b, opt);
  double acc = 0.0;
  for (const auto& t : terms) acc += t.contrast_structure;
  return acc / double(terms.size());
}

struct MetricReport {
  double rmse;
  Psnr psnr;
  double ssim;
};

inline MetricReport evaluate(const Image& restored, const Image& reference) {
  const double e = rmse(restored, reference);
  return {e, Psnr::from_rmse(e), ssim(restored, reference)};
}

}  // namespace diamond
