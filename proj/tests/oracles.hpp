#pragma once

// Slow reference implementations used to check the library.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "diamond/image.hpp"
#include "diamond/nn/layer.hpp"

namespace diamond::oracle {

// (I + rho D^T D) x = rhs with periodic forward differences, assembled as a
// dense matrix and solved by Gaussian elimination with partial pivoting.
inline std::vector<double> dense_quad_solve(const std::vector<double>& rhs, std::size_t rows, std::size_t cols,
                                            double rho) {
  const std::size_t n = rows * cols;
  std::vector<double> A(n * n, 0.0);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return A[i * n + j]; };
  for (std::size_t i = 0; i < n; ++i) at(i, i) = 1.0;
  // each difference row e: (D x)_e = x_p - x_q; D^T D += e e^T
  auto add_difference = [&](std::size_t p, std::size_t q) {
    at(p, p) += rho;
    at(q, q) += rho;
    at(p, q) -= rho;
    at(q, p) -= rho;
  };
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t p = r * cols + c;
      if (rows > 1) add_difference(p, ((r + rows - 1) % rows) * cols + c);
      if (cols > 1) add_difference(p, r * cols + (c + cols - 1) % cols);
    }
  }
  std::vector<double> b = rhs;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(at(i, k)) > std::abs(at(piv, k))) piv = i;
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(at(k, j), at(piv, j));
      std::swap(b[k], b[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = at(i, k) / at(k, k);
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) at(i, j) -= f * at(k, j);
      b[i] -= f * b[k];
    }
  }
  std::vector<double> x(n);
  for (std::size_t k = n; k-- > 0;) {
    double s = b[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= at(k, j) * x[j];
    x[k] = s / at(k, k);
  }
  return x;
}

inline double tv_objective(const std::vector<double>& x, const std::vector<double>& v, std::size_t rows,
                           std::size_t cols, double xi) {
  double fid = 0.0, tv = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      fid += (x[i] - v[i]) * (x[i] - v[i]);
      if (r > 0) tv += std::abs(x[i] - x[i - cols]);
      if (c > 0) tv += std::abs(x[i] - x[i - 1]);
    }
  }
  return 0.5 * fid + xi * tv;
}

// Projected subgradient descent on 1/2||x - v||^2 + xi TV(x), projected onto
// [min v, max v] (the minimizer lies there), step 1/(k+1). Returns the best
// objective seen.
inline double tv_subgradient_best(const Image& v_img, double xi, int steps) {
  const std::size_t rows = v_img.rows(), cols = v_img.cols(), n = rows * cols;
  std::vector<double> v(v_img.pixels().begin(), v_img.pixels().end());
  double lo = v[0], hi = v[0];
  for (double e : v) {
    lo = std::min(lo, e);
    hi = std::max(hi, e);
  }
  auto sgn = [](double d) { return double((d > 0) - (d < 0)); };
  std::vector<double> x = v, g(n);
  double best = tv_objective(x, v, rows, cols, xi);
  for (int k = 0; k < steps; ++k) {
    for (std::size_t i = 0; i < n; ++i) g[i] = x[i] - v[i];
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        if (r > 0) {
          const double s = sgn(x[i] - x[i - cols]);
          g[i] += xi * s;
          g[i - cols] -= xi * s;
        }
        if (c > 0) {
          const double s = sgn(x[i] - x[i - 1]);
          g[i] += xi * s;
          g[i - 1] -= xi * s;
        }
      }
    }
    const double step = 1.0 / double(k + 1);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::clamp(x[i] - step * g[i], lo, hi);
    best = std::min(best, tv_objective(x, v, rows, cols, xi));
  }
  return best;
}

// Convolution by its defining sum, zero padding floor(k/2).
inline nn::Tensor conv(const nn::LayerSpec& l, const nn::LayerParams& p, const nn::Tensor& in) {
  const auto s = std::ptrdiff_t(l.stride);
  const auto ph = std::ptrdiff_t(l.kernel_h / 2), pw = std::ptrdiff_t(l.kernel_w / 2);
  const std::size_t oh = in.height() / std::size_t(s), ow = in.width() / std::size_t(s);
  nn::Tensor out({l.out_channels, oh, ow});
  for (std::size_t o = 0; o < l.out_channels; ++o)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = p.bias[o];
        for (std::size_t i = 0; i < l.in_channels; ++i)
          for (std::size_t ky = 0; ky < l.kernel_h; ++ky)
            for (std::size_t kx = 0; kx < l.kernel_w; ++kx) {
              const auto iy = std::ptrdiff_t(y) * s + std::ptrdiff_t(ky) - ph;
              const auto ix = std::ptrdiff_t(x) * s + std::ptrdiff_t(kx) - pw;
              if (iy < 0 || ix < 0 || iy >= std::ptrdiff_t(in.height()) || ix >= std::ptrdiff_t(in.width())) continue;
              acc += double(p.weight[((o * l.in_channels + i) * l.kernel_h + ky) * l.kernel_w + kx]) *
                     in(i, std::size_t(iy), std::size_t(ix));
            }
        out(o, y, x) = float(acc);
      }
  return out;
}

// Transposed convolution in gather form: output (y, x) collects every input
// (iy, ix) and tap (ky, kx) with iy*s - pad + ky = y and ix*s - pad + kx = x.
inline nn::Tensor conv_transpose(const nn::LayerSpec& l, const nn::LayerParams& p, const nn::Tensor& in) {
  const auto s = std::ptrdiff_t(l.stride);
  const auto ph = std::ptrdiff_t(l.kernel_h / 2), pw = std::ptrdiff_t(l.kernel_w / 2);
  const std::size_t oh = in.height() * std::size_t(s), ow = in.width() * std::size_t(s);
  nn::Tensor out({l.out_channels, oh, ow});
  for (std::size_t o = 0; o < l.out_channels; ++o)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = p.bias[o];
        for (std::size_t i = 0; i < l.in_channels; ++i)
          for (std::size_t ky = 0; ky < l.kernel_h; ++ky)
            for (std::size_t kx = 0; kx < l.kernel_w; ++kx) {
              const auto ny = std::ptrdiff_t(y) + ph - std::ptrdiff_t(ky);
              const auto nx = std::ptrdiff_t(x) + pw - std::ptrdiff_t(kx);
              if (ny < 0 || nx < 0 || ny % s != 0 || nx % s != 0) continue;
              const auto iy = ny / s, ix = nx / s;
              if (iy >= std::ptrdiff_t(in.height()) || ix >= std::ptrdiff_t(in.width())) continue;
              acc += double(p.weight[((o * l.in_channels + i) * l.kernel_h + ky) * l.kernel_w + kx]) *
                     in(i, std::size_t(iy), std::size_t(ix));
            }
        out(o, y, x) = float(acc);
      }
  return out;
}

}  // namespace diamond::oracle
