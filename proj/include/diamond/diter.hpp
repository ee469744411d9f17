#pragma once

// Deep iteration: plug-and-play alternation around a prior psi and a
// degradation H.
//
//   y^(k+1) = (I^L - H I^(k) + upsilon H g^(k)) / (1 + upsilon)
//   g^(k+1) = upsilon psi(y^(k+1)) / (upsilon + mu)
//   I_tv    = argmin_I 1/2 ||I - I^(k) - g^(k+1)||^2 + epsilon TV(I)
//   I^(k+1) = I^(k) + s (I_tv - I^(k))
//
// starting from I^(0) = psi(I^L) and g^(0) = I^L.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "diamond/degrade.hpp"
#include "diamond/error.hpp"
#include "diamond/image.hpp"
#include "diamond/metrics.hpp"
#include "diamond/nn/graph.hpp"
#include "diamond/tvprox.hpp"

namespace diamond {

enum class PriorKind { identity, gaussian_smooth, network };

/// Image-to-image restorer psi. Copyable; evaluation is const and safe to call
/// from several threads at once.
class PriorOperator {
 public:
  static PriorOperator identity() {
    return PriorOperator(PriorKind::identity, "identity", [](const Image& x) { return x; });
  }

  /// Gaussian blur with a (2 ceil(3 sigma) + 1)-tap kernel and replicate boundary.
  static PriorOperator gaussian_smooth(double sigma) {
    if (!(sigma > 0.0)) throw InvalidArgument("gaussian prior sigma must be positive");
    const auto size = std::size_t(2 * std::ceil(3.0 * sigma) + 1);
    auto kernel = std::make_shared<const Kernel>(gaussian_kernel(size, sigma));
    char name[48];
    std::snprintf(name, sizeof name, "gaussian_smooth(%g)", sigma);
    return PriorOperator(PriorKind::gaussian_smooth, name,
                         [kernel](const Image& x) { return correlate(x, *kernel, Boundary::replicate); });
  }

  static PriorOperator network(std::shared_ptr<const nn::Model> model) {
    if (!model) throw InvalidArgument("network prior needs a model");
    return PriorOperator(PriorKind::network, "network",
                         [model](const Image& x) { return nn::generator_forward(*model, x); });
  }

  PriorKind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }

  Image operator()(const Image& x) const {
    Image out = fn_(x);
    if (!out.same_shape(x)) throw DimensionError("prior '" + name_ + "' changed the image dimensions");
    return out;
  }

 private:
  PriorOperator(PriorKind kind, std::string name, std::function<Image(const Image&)> fn)
      : kind_(kind), name_(std::move(name)), fn_(std::move(fn)) {}

  PriorKind kind_;
  std::string name_;
  std::function<Image(const Image&)> fn_;
};

struct DiterParams {
  double mu = 1.0;
  double upsilon = 1.0;
  double delta = 0.0;       // TV penalty rho; 0 means "same as epsilon"
  double epsilon_tv = 0.0;  // TV weight xi
  double step = 1.0;        // relaxation s in (0, 1]
  int outer_iters = 30;
  double tol = 0.0;         // stop when rel_change < tol; 0 never stops early
  int tv_inner_iters = TvParams{}.inner_iters;
  double tv_tol = TvParams{}.tol;

  void validate() const {
    if (!(mu > 0.0)) throw InvalidArgument("mu must be > 0");
    if (!(upsilon > 0.0)) throw InvalidArgument("upsilon must be > 0");
    if (!(delta >= 0.0)) throw InvalidArgument("delta must be >= 0");
    if (!(epsilon_tv >= 0.0)) throw InvalidArgument("epsilon must be >= 0");
    if (!(step > 0.0 && step <= 1.0)) throw InvalidArgument("step s must be in (0, 1]");
    if (outer_iters < 1) throw InvalidArgument("outer_iters must be >= 1");
    if (!(tol >= 0.0)) throw InvalidArgument("tol must be >= 0");
    tv_params().validate();
  }

  TvParams tv_params() const {
    return TvParams{epsilon_tv, delta > 0.0 ? delta : epsilon_tv, tv_inner_iters, tv_tol};
  }
};

struct TraceRecord {
  int iter = 0;
  double rel_change = 0.0;
  double data_fidelity = 0.0;
  std::optional<double> rmse;
  std::optional<Psnr> psnr;
  std::optional<double> ssim;
  int tv_iterations = 0;
  bool tv_converged = true;
};

struct ConvergenceTrace {
  std::vector<TraceRecord> records;
  // ||H g^(0) - I^L|| / ||I^L||; flagged when above kInitialConditionTolerance.
  double initial_condition_residual = 0.0;
  bool initial_condition_flag = false;

  static constexpr double kInitialConditionTolerance = 1e-3;
};

/// (IL - H(Ik) + upsilon H(gk)) / (1 + upsilon), elementwise.
inline Image y_update(const Image& il, const Image& ik, const Image& gk, const DegradationOp& H, double upsilon) {
  require_same_shape(il, ik, "y_update");
  require_same_shape(il, gk, "y_update");
  const Image h_ik = H(ik);
  const Image h_gk = H(gk);
  Image y(il.rows(), il.cols());
  auto out = y.pixels();
  auto a = il.pixels();
  auto b = h_ik.pixels();
  auto c = h_gk.pixels();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = float((double(a[i]) - double(b[i]) + upsilon * double(c[i])) / (1.0 + upsilon));
  }
  return y;
}

/// upsilon psi(y) / (upsilon + mu), elementwise.
inline Image g_update(const Image& psi_y, double upsilon, double mu) {
  if (!(upsilon + mu > 0.0)) throw InvalidArgument("g_update needs upsilon + mu > 0");
  return transform(psi_y, [=](float p) { return float((upsilon * double(p)) / (upsilon + mu)); });
}

struct IterationState {
  Image image;  // I^(k)
  Image g;      // g^(k)
};

struct StepInfo {
  Image tv_target;  // I_tv before relaxation
  int tv_iterations = 0;
  bool tv_converged = true;
};

/// One outer iteration; updates `state` in place.
inline StepInfo outer_iteration(const Image& il, IterationState& state, const DegradationOp& H,
                                const PriorOperator& prior, const DiterParams& p) {
  const Image y = y_update(il, state.image, state.g, H, p.upsilon);
  state.g = g_update(prior(y), p.upsilon, p.mu);
  StepInfo info{state.image + state.g};
  if (p.epsilon_tv > 0.0) {
    TvResult tv = tv_prox(info.tv_target, p.tv_params());
    info.tv_target = std::move(tv.image);
    info.tv_iterations = tv.iterations;
    info.tv_converged = tv.converged;
  }
  const float s = float(p.step);
  state.image = transform(state.image, info.tv_target, [s](float cur, float tv) { return cur + s * (tv - cur); });
  return info;
}

struct DiamondResult {
  Image image;
  ConvergenceTrace trace;
};

/// Runs up to outer_iters iterations, stopping early when rel_change < tol.
/// Throws NumericalError naming the iteration if any value becomes non-finite.
inline DiamondResult run_diamond(const Image& il, const DegradationOp& H, const PriorOperator& prior,
                                 const DiterParams& params, const std::optional<Image>& reference = std::nullopt) {
  params.validate();
  if (reference) require_same_shape(il, *reference, "run_diamond reference");
  const bool with_ssim = reference && std::min(il.rows(), il.cols()) >= SsimOptions{}.window;

  IterationState state{prior(il), il};
  if (!all_finite(state.image)) throw NumericalError("prior produced non-finite values at initialization");

  ConvergenceTrace trace;
  const double il_norm = frobenius_norm(il);
  const double hg0 = distance(H(state.g), il);
  trace.initial_condition_residual = il_norm > 0.0 ? hg0 / il_norm : hg0;
  trace.initial_condition_flag = trace.initial_condition_residual > ConvergenceTrace::kInitialConditionTolerance;

  for (int k = 1; k <= params.outer_iters; ++k) {
    const Image previous = state.image;
    const StepInfo info = outer_iteration(il, state, H, prior, params);
    if (!all_finite(state.image) || !all_finite(state.g)) {
      throw NumericalError("non-finite values at iteration " + std::to_string(k));
    }
    TraceRecord rec;
    rec.iter = k;
    const double prev_norm = frobenius_norm(previous);
    const double change = distance(state.image, previous);
    rec.rel_change = prev_norm > 0.0 ? change / prev_norm : change;
    rec.data_fidelity = distance(il, H(state.image));
    rec.tv_iterations = info.tv_iterations;
    rec.tv_converged = info.tv_converged;
    if (reference) {
      rec.rmse = rmse(state.image, *reference);
      rec.psnr = Psnr::from_rmse(*rec.rmse);
      if (with_ssim) rec.ssim = ssim(state.image, *reference);
    }
    trace.records.push_back(rec);
    if (rec.rel_change < params.tol) break;
  }
  return {std::move(state.image), std::move(trace)};
}

inline constexpr const char* kTraceCsvHeader = "iter,rel_change,data_fidelity,rmse,psnr,ssim";

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// CSV with kTraceCsvHeader; reference metrics are empty when absent.
inline void write_trace_csv(std::ostream& out, const ConvergenceTrace& trace) {
  out << kTraceCsvHeader << "\n";
  for (const auto& r : trace.records) {
    out << r.iter << "," << format_number(r.rel_change) << "," << format_number(r.data_fidelity) << ",";
    if (r.rmse) out << format_number(*r.rmse);
    out << ",";
    if (r.psnr) out << (r.psnr->is_infinite() ? "inf" : format_number(r.psnr->db()));
    out << ",";
    if (r.ssim) out << format_number(*r.ssim);
    out << "\n";
  }
}

}  // namespace diamond
