#pragma once

// Anisotropic-TV proximal operator
//
//   prox(v) = argmin_I  1/2 ||I - v||_F^2 + xi * TV(I),
//   TV(I)   = sum |I(j1,j2) - I(j1-1,j2)| + |I(j1,j2) - I(j1,j2-1)|,
//
// where differences that reach outside the image are zero. The solver splits
// d = D I with periodic forward differences D, so the I-step
// (1 + rho D^T D) I = rhs is diagonal in the 2-D DFT. The wrap-around entries of
// D I (row 0 of d1, column 0 of d2) carry no penalty, which makes the split
// problem equivalent to the zero-border TV above.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <vector>

#include "diamond/error.hpp"
#include "diamond/image.hpp"

namespace diamond {

struct GradientField {
  Image d1;  // vertical: I(j1,j2) - I(j1-1,j2), zero on the first row
  Image d2;  // horizontal: I(j1,j2) - I(j1,j2-1), zero on the first column
};

inline GradientField forward_diff(const Image& img) {
  GradientField g{Image(img.rows(), img.cols()), Image(img.rows(), img.cols())};
  for (std::size_t r = 0; r < img.rows(); ++r) {
    for (std::size_t c = 0; c < img.cols(); ++c) {
      if (r > 0) g.d1(r, c) = img(r, c) - img(r - 1, c);
      if (c > 0) g.d2(r, c) = img(r, c) - img(r, c - 1);
    }
  }
  return g;
}

inline double total_variation(const Image& img) {
  double tv = 0.0;
  for (std::size_t r = 0; r < img.rows(); ++r) {
    for (std::size_t c = 0; c < img.cols(); ++c) {
      if (r > 0) tv += std::abs(double(img(r, c)) - double(img(r - 1, c)));
      if (c > 0) tv += std::abs(double(img(r, c)) - double(img(r, c - 1)));
    }
  }
  return tv;
}

/// 1/2 ||x - v||^2 + xi * TV(x)
inline double tv_objective(const Image& x, const Image& v, double xi) {
  const double d = distance(x, v);
  return 0.5 * d * d + xi * total_variation(x);
}

/// Soft threshold: sign(x) * max(|x| - t, 0).
inline double shrink(double x, double t) {
  if (t < 0.0) throw InvalidArgument("shrink threshold must be non-negative");
  const double m = std::abs(x) - t;
  return m > 0.0 ? std::copysign(m, x) : 0.0;
}

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};

template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <typename T>
FftwBuffer<T> fftw_alloc(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
  if (!p) throw std::bad_alloc();
  return FftwBuffer<T>(p);
}

}  // namespace detail

/// |D1^(k1)|^2 + |D2^(k2)|^2 for periodic forward differences on a rows x cols grid.
inline double difference_symbol(std::size_t k1, std::size_t k2, std::size_t rows, std::size_t cols) {
  const double s1 = std::sin(std::numbers::pi * double(k1) / double(rows));
  const double s2 = std::sin(std::numbers::pi * double(k2) / double(cols));
  return 4.0 * (s1 * s1 + s2 * s2);
}

/// Solves (1 + rho D^T D) x = rhs under periodic boundary for a fixed grid size.
/// Holds its own FFT plans and buffers; one instance per thread.
class PeriodicQuadSolver {
 public:
  PeriodicQuadSolver(std::size_t rows, std::size_t cols, double rho)
      : rows_(rows), cols_(cols), half_(cols / 2 + 1), rho_(rho),
        real_(detail::fftw_alloc<double>(rows * cols)),
        spectrum_(detail::fftw_alloc<fftw_complex>(rows * half_)),
        denominator_(rows * half_) {
    if (rows == 0 || cols == 0) throw DimensionError("solver grid must be non-empty");
    if (!(rho >= 0.0)) throw InvalidArgument("penalty rho must be non-negative");
    for (std::size_t k1 = 0; k1 < rows_; ++k1) {
      for (std::size_t k2 = 0; k2 < half_; ++k2) {
        denominator_[k1 * half_ + k2] = 1.0 + rho_ * difference_symbol(k1, k2, rows_, cols_);
      }
    }
    std::lock_guard lock(detail::fftw_planner_mutex());
    forward_ = fftw_plan_dft_r2c_2d(int(rows_), int(cols_), real_.get(), spectrum_.get(), FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_2d(int(rows_), int(cols_), spectrum_.get(), real_.get(), FFTW_ESTIMATE);
    if (!forward_ || !inverse_) {
      if (forward_) fftw_destroy_plan(forward_);
      if (inverse_) fftw_destroy_plan(inverse_);
      throw NumericalError("FFTW planning failed");
    }
  }

  ~PeriodicQuadSolver() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    if (forward_) fftw_destroy_plan(forward_);
    if (inverse_) fftw_destroy_plan(inverse_);
  }

  PeriodicQuadSolver(const PeriodicQuadSolver&) = delete;
  PeriodicQuadSolver& operator=(const PeriodicQuadSolver&) = delete;

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double rho() const noexcept { return rho_; }

  /// In place: `x` holds rhs on entry and the solution on exit.
  void solve(std::span<double> x) {
    if (x.size() != rows_ * cols_) throw DimensionError("solver input size mismatch");
    if (rho_ == 0.0) return;
    std::copy(x.begin(), x.end(), real_.get());
    fftw_execute(forward_);
    const double norm = 1.0 / double(rows_ * cols_);
    for (std::size_t i = 0; i < rows_ * half_; ++i) {
      const double s = norm / denominator_[i];
      spectrum_[i][0] *= s;
      spectrum_[i][1] *= s;
    }
    fftw_execute(inverse_);
    std::copy(real_.get(), real_.get() + rows_ * cols_, x.begin());
  }

 private:
  std::size_t rows_, cols_, half_;
  double rho_;
  detail::FftwBuffer<double> real_;
  detail::FftwBuffer<fftw_complex> spectrum_;
  std::vector<double> denominator_;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

/// Î(w) = RHS^(w) / (1 + rho (|D1^(w)|^2 + |D2^(w)|^2)); rho = 0 returns rhs.
inline Image fft_quad_solve(const Image& rhs, double rho) {
  if (!(rho >= 0.0)) throw InvalidArgument("penalty rho must be non-negative");
  if (rho == 0.0) return rhs;
  std::vector<double> x(rhs.pixels().begin(), rhs.pixels().end());
  PeriodicQuadSolver solver(rhs.rows(), rhs.cols(), rho);
  solver.solve(x);
  Image out(rhs.rows(), rhs.cols());
  std::ranges::transform(x, out.pixels().begin(), [](double v) { return float(v); });
  return out;
}

struct TvParams {
  double tv_weight = 0.0;  // xi
  double penalty = 0.0;    // rho
  int inner_iters = 300;
  double tol = 1e-6;

  // Single-knob form: rho = xi = delta.
  static TvParams from_delta(double delta) { return TvParams{delta, delta}; }

  void validate() const {
    if (!(tv_weight >= 0.0)) throw InvalidArgument("tv_weight must be non-negative");
    if (tv_weight > 0.0 && !(penalty > 0.0)) throw InvalidArgument("penalty must be positive when tv_weight > 0");
    if (inner_iters < 1) throw InvalidArgument("inner_iters must be >= 1");
    if (!(tol >= 0.0)) throw InvalidArgument("tol must be non-negative");
  }
};

struct TvResult {
  Image image;
  int iterations = 0;
  bool converged = true;
  // Objective of the returned image and of every alternation's iterate.
  double objective = 0.0;
  std::vector<double> objective_history;
};

/// Approximate TV prox by shrinkage / FFT-solve alternation with a scaled dual.
///
/// Each alternation: d = shrink(D x + b, xi/rho) (threshold 0 on wrap-around
/// entries), x = (1 + rho D^T D)^-1 (v + rho D^T (d - b)), b += D x - d.
/// Stops after inner_iters or when ||x_new - x|| / ||x|| < tol. The returned image
/// is the lowest-objective iterate seen, v included, so its objective never
/// exceeds that of v. `converged` is false when the iteration budget ran out.
inline TvResult tv_prox(const Image& v, const TvParams& params) {
  params.validate();
  const double xi = params.tv_weight;
  if (xi == 0.0) return TvResult{v, 0, true, 0.0, {}};

  const std::size_t rows = v.rows();
  const std::size_t cols = v.cols();
  const std::size_t n = rows * cols;
  const double rho = params.penalty;
  const double t = xi / rho;

  PeriodicQuadSolver solver(rows, cols, rho);
  std::vector<double> vv(v.pixels().begin(), v.pixels().end());
  std::vector<double> x = vv;
  std::vector<double> x_prev(n);
  std::vector<double> b1(n, 0.0), b2(n, 0.0), d1(n), d2(n), rhs(n);

  auto idx = [cols](std::size_t r, std::size_t c) { return r * cols + c; };
  auto up = [rows](std::size_t r) { return r == 0 ? rows - 1 : r - 1; };
  auto down = [rows](std::size_t r) { return r + 1 == rows ? 0 : r + 1; };
  auto left = [cols](std::size_t c) { return c == 0 ? cols - 1 : c - 1; };
  auto right = [cols](std::size_t c) { return c + 1 == cols ? 0 : c + 1; };

  auto objective_of = [&](const std::vector<double>& img) {
    double fid = 0.0, tv = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double e = img[idx(r, c)] - vv[idx(r, c)];
        fid += e * e;
        if (r > 0) tv += std::abs(img[idx(r, c)] - img[idx(r - 1, c)]);
        if (c > 0) tv += std::abs(img[idx(r, c)] - img[idx(r, c - 1)]);
      }
    }
    return 0.5 * fid + xi * tv;
  };

  TvResult result{v, 0, false, objective_of(vv), {}};
  std::vector<double> best = vv;

  for (int it = 1; it <= params.inner_iters; ++it) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = idx(r, c);
        const double g1 = x[i] - x[idx(up(r), c)] + b1[i];
        const double g2 = x[i] - x[idx(r, left(c))] + b2[i];
        d1[i] = r == 0 ? g1 : shrink(g1, t);
        d2[i] = c == 0 ? g2 : shrink(g2, t);
      }
    }
    // rhs = v + rho D^T (d - b), with (D^T q)(j) = q(j) - q(j+1).
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = idx(r, c);
        const std::size_t i_dn = idx(down(r), c);
        const std::size_t i_rt = idx(r, right(c));
        const double q1 = (d1[i] - b1[i]) - (d1[i_dn] - b1[i_dn]);
        const double q2 = (d2[i] - b2[i]) - (d2[i_rt] - b2[i_rt]);
        rhs[i] = vv[i] + rho * (q1 + q2);
      }
    }
    x_prev.swap(x);
    x = rhs;
    solver.solve(x);

    double change = 0.0, prev_norm = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = idx(r, c);
        b1[i] += x[i] - x[idx(up(r), c)] - d1[i];
        b2[i] += x[i] - x[idx(r, left(c))] - d2[i];
        change += (x[i] - x_prev[i]) * (x[i] - x_prev[i]);
        prev_norm += x_prev[i] * x_prev[i];
      }
    }

    const double obj = objective_of(x);
    result.objective_history.push_back(obj);
    result.iterations = it;
    if (obj <= result.objective) {
      result.objective = obj;
      best = x;
    }
    const double rel = prev_norm > 0.0 ? std::sqrt(change / prev_norm) : std::sqrt(change);
    if (rel < params.tol) {
      result.converged = true;
      break;
    }
  }

  Image out(rows, cols);
  std::ranges::transform(best, out.pixels().begin(), [](double val) { return float(val); });
  result.image = std::move(out);
  return result;
}

}  // namespace diamond
