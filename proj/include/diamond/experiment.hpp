#pragma once

// Config-driven restoration runs and parameter sweeps.
//
// Artifacts in cfg.output_dir:
//   restored<ext>, trace.csv          single run
//   restored_<tag><ext>, trace_<tag>.csv   per sweep point, tag = s<s>_delta<d>_eps<e>
//   degraded<ext>                     synthesized input (synthesize = true)
//   summary.csv                       task,prior,K_used,rmse,psnr,ssim; one row per point
//   run.log                           every effective parameter
// Everything is written under temporary names and renamed once all points succeed.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "diamond/config.hpp"
#include "diamond/diter.hpp"
#include "diamond/error.hpp"
#include "diamond/image_io.hpp"
#include "diamond/metrics.hpp"
#include "diamond/nn/bundle.hpp"

namespace diamond {

/// Failure inside a named experiment stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "': " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

template <class Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

inline constexpr std::size_t kMaxSweepPoints = 64;
inline constexpr const char* kSummaryCsvHeader = "task,prior,K_used,rmse,psnr,ssim";

struct SweepPoint {
  double step = 0.0;
  double delta = 0.0;
  double epsilon = 0.0;

  std::string tag() const {
    char buf[96];
    std::snprintf(buf, sizeof buf, "s%g_delta%g_eps%g", step, delta, epsilon);
    return buf;
  }
  friend bool operator==(const SweepPoint&, const SweepPoint&) = default;
};

/// Cartesian product of the step, delta and epsilon lists, step outermost.
inline std::vector<SweepPoint> sweep_points(const Config& c) {
  std::vector<SweepPoint> points;
  for (double s : c.step)
    for (double d : c.delta)
      for (double e : c.epsilon) points.push_back({s, d, e});
  if (points.size() > kMaxSweepPoints) {
    throw ConfigError("sweep has " + std::to_string(points.size()) + " combinations; the limit is " +
                      std::to_string(kMaxSweepPoints));
  }
  return points;
}

inline DiterParams diter_params(const Config& c, const SweepPoint& p) {
  return DiterParams{c.mu, c.upsilon, p.delta, p.epsilon, p.step, c.outer_iters, c.tol, c.tv_inner_iters, c.tv_tol};
}

/// Worker count: DIAMOND_THREADS if set, else the hardware concurrency.
inline std::size_t thread_limit() {
  if (const char* env = std::getenv("DIAMOND_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ConfigError(std::string("DIAMOND_THREADS must be a positive integer, got '") + env + "'");
    return std::size_t(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

struct RunSummary {
  SweepPoint point;
  int k_used = 0;
  std::optional<MetricReport> metrics;
  double initial_condition_residual = 0.0;
  bool initial_condition_flag = false;
  int tv_unconverged = 0;  // outer iterations whose TV solve hit its cap
  std::filesystem::path image_path;
  std::filesystem::path trace_path;
};

struct ExperimentReport {
  std::vector<RunSummary> runs;
  std::filesystem::path summary_path;
  std::filesystem::path log_path;
  std::filesystem::path degraded_path;  // empty unless synthesized
};

/// Inputs shared by every sweep point.
struct PreparedInputs {
  Image measured;
  std::optional<Image> reference;
  DegradationOp op;
  PriorOperator prior;
};

inline void check_paths(const Config& c) {
  namespace fs = std::filesystem;
  auto require_file = [](const fs::path& p, const std::string& key) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) throw IoError("'" + key + "' does not name a readable file: " + p.string());
  };
  require_file(c.input, "paths.input");
  if (!c.reference.empty()) require_file(c.reference, "paths.reference");
  if (c.prior == PriorKind::network) require_file(c.bundle, "prior.bundle");
  std::error_code ec;
  fs::create_directories(c.output_dir, ec);
  if (!fs::is_directory(c.output_dir)) throw IoError("cannot create output directory " + c.output_dir.string());
}

inline PriorOperator make_prior(const Config& c) {
  switch (c.prior) {
    case PriorKind::identity: return PriorOperator::identity();
    case PriorKind::gaussian_smooth: return PriorOperator::gaussian_smooth(c.prior_sigma);
    case PriorKind::network:
      return PriorOperator::network(std::make_shared<const nn::Model>(nn::load_bundle(c.bundle)));
  }
  throw ConfigError("unknown prior kind");
}

inline PreparedInputs prepare_inputs(const Config& c) {
  run_stage("validate paths", [&] { check_paths(c); });
  Image input = run_stage("load input", [&] { return load_image(c.input); });
  std::optional<Image> reference;
  if (!c.reference.empty()) reference = run_stage("load reference", [&] { return load_image(c.reference); });
  DegradationOp op = run_stage("degradation", [&] { return degradation_operator(c); });
  Image measured = input;
  if (c.synthesize) {
    if (!reference) reference = input;
    measured = run_stage("degradation", [&] { return add_awgn(op(input), c.noise_sigma255, c.seed).image; });
  }
  if (reference) run_stage("load reference", [&] { require_same_shape(measured, *reference, "reference"); });
  PriorOperator prior = run_stage("load prior", [&] { return make_prior(c); });
  return {std::move(measured), std::move(reference), std::move(op), std::move(prior)};
}

namespace detail {

// Temporary files that become visible only through commit().
class StagedFiles {
 public:
  StagedFiles() = default;
  StagedFiles(const StagedFiles&) = delete;
  StagedFiles& operator=(const StagedFiles&) = delete;
  ~StagedFiles() {
    for (const auto& [tmp, dst] : files_) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
    }
  }

  std::filesystem::path stage(const std::filesystem::path& dst) {
    std::filesystem::path tmp = dst;
    tmp += ".partial";
    files_.emplace_back(tmp, dst);
    return tmp;
  }

  void commit() {
    for (const auto& [tmp, dst] : files_) std::filesystem::rename(tmp, dst);
    files_.clear();
  }

 private:
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> files_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  out.flush();
  if (!out) throw IoError("cannot write " + path.string());
}

inline std::string metric_fields(const std::optional<MetricReport>& m) {
  if (!m) return ",,";
  return format_number(m->rmse) + "," + (m->psnr.is_infinite() ? "inf" : format_number(m->psnr.db())) + "," +
         format_number(m->ssim);
}

}  // namespace detail

/// Runs every sweep point of `cfg`. Names carry the point tag when there is
/// more than one point or `tagged` is set.
inline ExperimentReport run_experiment(const Config& cfg, bool tagged = false) {
  namespace fs = std::filesystem;
  validate(cfg);
  const std::vector<SweepPoint> points = sweep_points(cfg);
  const PreparedInputs in = prepare_inputs(cfg);
  const bool with_ssim = std::min(in.measured.rows(), in.measured.cols()) >= SsimOptions{}.window;
  tagged = tagged || points.size() > 1;
  const std::string ext = file_extension(cfg.output_format);

  detail::StagedFiles staged;
  ExperimentReport report;
  report.runs.resize(points.size());
  std::vector<fs::path> image_tmp(points.size()), trace_tmp(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto& r = report.runs[i];
    r.point = points[i];
    const std::string suffix = tagged ? "_" + points[i].tag() : "";
    r.image_path = cfg.output_dir / ("restored" + suffix + ext);
    r.trace_path = cfg.output_dir / ("trace" + suffix + ".csv");
    image_tmp[i] = staged.stage(r.image_path);
    trace_tmp[i] = staged.stage(r.trace_path);
  }

  std::vector<std::exception_ptr> errors(points.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      try {
        auto& r = report.runs[i];
        const std::string stage = "restore " + points[i].tag();
        DiamondResult res = run_stage(stage, [&] {
          return run_diamond(in.measured, in.op, in.prior, diter_params(cfg, points[i]), in.reference);
        });
        r.k_used = int(res.trace.records.size());
        r.initial_condition_residual = res.trace.initial_condition_residual;
        r.initial_condition_flag = res.trace.initial_condition_flag;
        for (const auto& rec : res.trace.records) r.tv_unconverged += rec.tv_converged ? 0 : 1;
        if (in.reference) {
          MetricReport m{rmse(res.image, *in.reference), psnr(res.image, *in.reference), 0.0};
          if (with_ssim) m.ssim = ssim(res.image, *in.reference);
          r.metrics = m;
        }
        run_stage("write outputs", [&] {
          save_image(image_tmp[i], res.image, cfg.output_format);
          std::ostringstream csv;
          write_trace_csv(csv, res.trace);
          detail::write_text(trace_tmp[i], csv.str());
        });
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(points.size(), thread_limit());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  run_stage("write outputs", [&] {
    if (cfg.synthesize) {
      report.degraded_path = cfg.output_dir / ("degraded" + ext);
      save_image(staged.stage(report.degraded_path), in.measured, cfg.output_format);
    }

    std::ostringstream summary;
    summary << kSummaryCsvHeader << "\n";
    for (const auto& r : report.runs) {
      summary << to_string(cfg.task) << "," << in.prior.name() << "," << r.k_used << ","
              << detail::metric_fields(r.metrics) << "\n";
    }
    report.summary_path = cfg.output_dir / "summary.csv";
    detail::write_text(staged.stage(report.summary_path), summary.str());

    std::ostringstream log;
    log << "# effective configuration\n" << serialize_config(cfg) << "\n# runs\n";
    log << "degradation_operator = " << in.op.describe() << "\n";
    log << "prior = " << in.prior.name() << "\n";
    for (std::size_t i = 0; i < report.runs.size(); ++i) {
      const auto& r = report.runs[i];
      const TvParams tv = diter_params(cfg, r.point).tv_params();
      log << "run " << i << ": s = " << format_number(r.point.step) << ", delta = " << format_number(r.point.delta)
          << ", epsilon = " << format_number(r.point.epsilon) << ", tv_weight = " << format_number(tv.tv_weight)
          << ", tv_penalty = " << format_number(tv.penalty) << ", mu = " << format_number(cfg.mu)
          << ", upsilon = " << format_number(cfg.upsilon) << ", K = " << cfg.outer_iters
          << ", K_used = " << r.k_used << ", tv_unconverged = " << r.tv_unconverged
          << ", initial_condition_residual = " << format_number(r.initial_condition_residual)
          << (r.initial_condition_flag ? " (flagged)" : "") << ", image = " << r.image_path.filename().string()
          << ", trace = " << r.trace_path.filename().string() << "\n";
    }
    report.log_path = cfg.output_dir / "run.log";
    detail::write_text(staged.stage(report.log_path), log.str());
    staged.commit();
  });
  return report;
}

}  // namespace diamond
