#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <thread>

#include "diamond/tvprox.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace diamond;
using diamond::testing::random_image;

namespace {

std::vector<double> as_doubles(const Image& img) { return {img.pixels().begin(), img.pixels().end()}; }

// Solution via a naive complex 2-D DFT; returns the largest imaginary part
// left after the inverse transform.
double complex_dft_solve(const std::vector<double>& rhs, std::size_t R, std::size_t C, double rho,
                         std::vector<double>& out) {
  using cd = std::complex<double>;
  const double tau = 2.0 * M_PI;
  std::vector<cd> F(R * C);
  for (std::size_t k1 = 0; k1 < R; ++k1)
    for (std::size_t k2 = 0; k2 < C; ++k2) {
      cd acc = 0;
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c)
          acc += rhs[r * C + c] * std::polar(1.0, -tau * (double(k1 * r) / R + double(k2 * c) / C));
      // transfer functions of x(j) - x(j-1)
      const cd d1 = 1.0 - std::polar(1.0, -tau * double(k1) / R);
      const cd d2 = 1.0 - std::polar(1.0, -tau * double(k2) / C);
      F[k1 * C + k2] = acc / (1.0 + rho * (std::norm(d1) + std::norm(d2)));
    }
  double max_imag = 0.0;
  out.assign(R * C, 0.0);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) {
      cd acc = 0;
      for (std::size_t k1 = 0; k1 < R; ++k1)
        for (std::size_t k2 = 0; k2 < C; ++k2)
          acc += F[k1 * C + k2] * std::polar(1.0, tau * (double(k1 * r) / R + double(k2 * c) / C));
      acc /= double(R * C);
      out[r * C + c] = acc.real();
      max_imag = std::max(max_imag, std::abs(acc.imag()));
    }
  return max_imag;
}

}  // namespace

TEST(ForwardDiff, ConstantGivesZeroField) {
  const GradientField g = forward_diff(Image(5, 6, 0.4f));
  for (float v : g.d1.pixels()) EXPECT_EQ(v, 0.0f);
  for (float v : g.d2.pixels()) EXPECT_EQ(v, 0.0f);
}

TEST(ForwardDiff, VerticalStep) {
  Image img(6, 4, 0.0f);
  for (std::size_t r = 3; r < 6; ++r)
    for (std::size_t c = 0; c < 4; ++c) img(r, c) = 1.0f;
  const GradientField g = forward_diff(img);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_EQ(g.d1(r, c), r == 3 ? 1.0f : 0.0f);
      EXPECT_EQ(g.d2(r, c), 0.0f);
    }
}

TEST(ForwardDiff, MatchesIndexOracle) {
  const Image img = random_image(4, 4, 1);
  const GradientField g = forward_diff(img);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_EQ(g.d1(r, c), r >= 1 ? img(r, c) - img(r - 1, c) : 0.0f);
      EXPECT_EQ(g.d2(r, c), c >= 1 ? img(r, c) - img(r, c - 1) : 0.0f);
    }
}

TEST(Shrink, Examples) {
  EXPECT_EQ(shrink(3.0, 1.0), 2.0);
  EXPECT_EQ(shrink(-0.5, 1.0), 0.0);
  EXPECT_EQ(shrink(-4.0, 1.5), -2.5);
  EXPECT_EQ(shrink(0.7, 0.0), 0.7);
  EXPECT_THROW(shrink(1.0, -0.1), InvalidArgument);
}

TEST(Shrink, MatchesGridMinimizer) {
  std::mt19937_64 rng(2);
  const double h = 1e-4;
  for (int t = 0; t < 20; ++t) {
    const double x = diamond::testing::uniform01(rng) * 4 - 2;
    const double xi = diamond::testing::uniform01(rng), rho = 0.2 + diamond::testing::uniform01(rng) * 2;
    double best_d = 0.0, best_f = INFINITY;
    for (double d = -3.0; d <= 3.0; d += h) {
      const double f = xi * std::abs(d) + 0.5 * rho * (d - x) * (d - x);
      if (f < best_f) {
        best_f = f;
        best_d = d;
      }
    }
    EXPECT_NEAR(shrink(x, xi / rho), best_d, h);
  }
}

TEST(QuadSolve, ZeroPenaltyAndConstant) {
  const Image rhs = random_image(5, 7, 3);
  EXPECT_EQ(fft_quad_solve(rhs, 0.0), rhs);
  const Image out = fft_quad_solve(Image(6, 9, 0.3f), 5.0);
  for (float v : out.pixels()) EXPECT_NEAR(v, 0.3f, 1e-6);
  EXPECT_THROW(fft_quad_solve(rhs, -1.0), InvalidArgument);
}

TEST(QuadSolve, MatchesDenseDirectSolve) {
  for (auto [R, C] : {std::pair<std::size_t, std::size_t>{8, 8}, {6, 10}, {1, 9}, {7, 3}}) {
    for (double rho : {0.01, 1.0, 100.0}) {
      const Image rhs = random_image(R, C, R * 100 + C);
      const auto expected = oracle::dense_quad_solve(as_doubles(rhs), R, C, rho);
      std::vector<double> x = as_doubles(rhs);
      PeriodicQuadSolver(R, C, rho).solve(x);
      double err = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) err = std::max(err, std::abs(x[i] - expected[i]));
      EXPECT_LE(err, 1e-9) << R << "x" << C << " rho " << rho;
      const Image f = fft_quad_solve(rhs, rho);
      for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(f.pixels()[i], expected[i], 1e-6);
    }
  }
}

TEST(QuadSolve, ResultIsReal) {
  for (double rho : {0.01, 1.0, 100.0}) {
    const Image rhs = random_image(8, 8, 77);
    std::vector<double> via_complex;
    const double imag = complex_dft_solve(as_doubles(rhs), 8, 8, rho, via_complex);
    EXPECT_LE(imag, 1e-9);
    std::vector<double> x = as_doubles(rhs);
    PeriodicQuadSolver(8, 8, rho).solve(x);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x[i], via_complex[i], 1e-9);
  }
}

TEST(TvProx, ZeroWeightAndConstantInput) {
  const Image v = random_image(6, 6, 4);
  EXPECT_EQ(tv_prox(v, TvParams{0.0, 0.0}).image, v);
  const Image c(7, 5, 0.6f);
  for (double xi : {0.01, 0.5, 10.0}) EXPECT_LE(max_abs_diff(tv_prox(c, TvParams::from_delta(xi)).image, c), 1e-6);
}

TEST(TvProx, ReachesSubgradientOracle) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 10; ++t) {
    const Image v = random_image(6, 6, rng());
    const TvResult res = tv_prox(v, TvParams::from_delta(0.1));
    const double best = oracle::tv_subgradient_best(v, 0.1, 50000);
    EXPECT_LE(tv_objective(res.image, v, 0.1), best + 1e-4) << "case " << t;
    EXPECT_NEAR(res.objective, tv_objective(res.image, v, 0.1), 1e-5);
  }
}

TEST(TvProx, ObjectiveNeverAboveInput) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 10; ++t) {
    const Image v = random_image(9, 11, rng());
    const double xi = 0.02 + 0.2 * diamond::testing::uniform01(rng);
    const TvResult res = tv_prox(v, TvParams{xi, xi * (0.5 + diamond::testing::uniform01(rng))});
    const double start = tv_objective(v, v, xi);
    EXPECT_LE(res.objective, start);
    ASSERT_FALSE(res.objective_history.empty());
    double best = start;
    for (std::size_t k = 0; k < res.objective_history.size(); ++k) {
      const double h = res.objective_history[k];
      const double prev = k == 0 ? start : res.objective_history[k - 1];
      EXPECT_LE(h, prev + 1e-3) << "iteration " << k + 1;
      best = std::min(best, h);
    }
    EXPECT_DOUBLE_EQ(res.objective, best);
  }
}

TEST(TvProx, SupNormBound) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 10; ++t) {
    const Image v = random_image(8, 8, rng(), -1.0f, 2.0f);
    const double xi = diamond::testing::uniform01(rng) * 0.5;
    const Image out = tv_prox(v, TvParams::from_delta(xi)).image;
    double vmax = 0, omax = 0;
    for (float e : v.pixels()) vmax = std::max(vmax, double(std::abs(e)));
    for (float e : out.pixels()) omax = std::max(omax, double(std::abs(e)));
    EXPECT_LE(omax, vmax + xi + 1e-6);
  }
}

TEST(TvProx, LargerWeightGivesSmallerTv) {
  const Image v = random_image(16, 16, 10);
  double last = total_variation(v);
  for (double xi : {0.01, 0.05, 0.1, 0.3}) {
    const double tv = total_variation(tv_prox(v, TvParams::from_delta(xi)).image);
    EXPECT_LE(tv, last + 1e-4) << "xi " << xi;
    last = tv;
  }
}

TEST(TvProx, ReportsExhaustedBudget) {
  const Image v = random_image(10, 10, 11);
  const TvResult res = tv_prox(v, TvParams{0.1, 0.1, 2, 1e-12});
  EXPECT_FALSE(res.converged);
  EXPECT_EQ(res.iterations, 2);
  EXPECT_TRUE(tv_prox(v, TvParams{0.1, 0.1, 2000, 1e-6}).converged);
}

TEST(TvProx, InvalidParams) {
  const Image v(4, 4);
  EXPECT_THROW(tv_prox(v, TvParams{-0.1, 1.0}), InvalidArgument);
  EXPECT_THROW(tv_prox(v, TvParams{0.1, 0.0}), InvalidArgument);
  EXPECT_THROW(tv_prox(v, TvParams{0.1, 0.1, 0}), InvalidArgument);
}

TEST(TvProx, ConcurrentCallsMatchSequential) {
  std::vector<Image> inputs;
  for (std::uint64_t s = 0; s < 4; ++s) inputs.push_back(random_image(24, 20 + s, 100 + s));
  std::vector<Image> sequential;
  for (const auto& v : inputs) sequential.push_back(tv_prox(v, TvParams::from_delta(0.05)).image);
  std::vector<std::optional<Image>> parallel(inputs.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < inputs.size(); ++i)
      pool.emplace_back([&, i] { parallel[i] = tv_prox(inputs[i], TvParams::from_delta(0.05)).image; });
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) EXPECT_EQ(*parallel[i], sequential[i]);
}
