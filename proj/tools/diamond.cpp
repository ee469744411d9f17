// diamond: degrade, restore, evaluate and sweep from the command line.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "diamond/config.hpp"
#include "diamond/degrade.hpp"
#include "diamond/experiment.hpp"
#include "diamond/image_io.hpp"
#include "diamond/metrics.hpp"
#include "diamond/nn/bundle.hpp"

namespace {

using namespace diamond;

// Config-file plus flag overrides shared by `restore` and `sweep`.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> values = std::vector<std::string>(config_keys().size());
  std::vector<std::string> assignments;

  void attach(CLI::App& app) {
    app.add_option("-c,--config", config_path, "config file (key = value with [sections])")->check(CLI::ExistingFile);
    for (std::size_t i = 0; i < config_keys().size(); ++i) {
      const auto& k = config_keys()[i];
      app.add_option(k.flag, values[i], k.help + " [" + k.name + "]");
    }
    app.add_option("--set", assignments, "override any key: section.key=value");
  }

  Config resolve(const CLI::App& app) const {
    RawConfig raw;
    if (!config_path.empty()) raw = read_raw_config(config_path);
    for (std::size_t i = 0; i < config_keys().size(); ++i) {
      const auto& k = config_keys()[i];
      if (app.count(k.flag) > 0) raw[k.name] = values[i];
    }
    for (const auto& a : assignments) apply_override(raw, a);
    return resolve_config(raw);
  }
};

void print_report(const ExperimentReport& report) {
  for (const auto& r : report.runs) {
    std::printf("%s  K_used=%d", r.image_path.string().c_str(), r.k_used);
    if (r.metrics) {
      std::printf("  rmse=%.6f psnr=%s ssim=%.6f", r.metrics->rmse, r.metrics->psnr.to_string().c_str(),
                  r.metrics->ssim);
    }
    std::printf("\n");
  }
  std::printf("summary: %s\n", report.summary_path.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diamond: iterative image restoration with a plug-in prior"};
  app.require_subcommand(1);

  ConfigFlags restore_flags;
  auto* restore = app.add_subcommand("restore", "restore one image (config file and/or flags)");
  restore_flags.attach(*restore);

  ConfigFlags sweep_flags;
  auto* sweep = app.add_subcommand("sweep", "run every step/delta/epsilon combination");
  sweep_flags.attach(*sweep);

  std::string deg_in, deg_out, deg_task = "denoise", deg_format;
  std::string deg_op;
  std::size_t blur_size = 5;
  double blur_sigma = 1.0;
  double noise_sigma = -1.0;
  std::uint64_t seed = 0;
  auto* degrade = app.add_subcommand("degrade", "synthesize a low-quality image from a clean one");
  degrade->add_option("-i,--input", deg_in, "clean image")->required()->check(CLI::ExistingFile);
  degrade->add_option("-o,--output", deg_out, "degraded image")->required();
  degrade->add_option("--task", deg_task, "denoise | sr2x (sets operator and noise defaults)")
      ->check(CLI::IsMember({"denoise", "sr2x"}));
  degrade->add_option("--operator", deg_op, "identity | blur | sr2x_resample")
      ->check(CLI::IsMember({"identity", "blur", "sr2x_resample"}));
  degrade->add_option("--blur-size", blur_size, "odd blur kernel size");
  degrade->add_option("--blur-sigma", blur_sigma, "blur kernel sigma");
  degrade->add_option("--noise-sigma", noise_sigma, "AWGN sigma on the 0..255 scale (default 15 for denoise, 0 for sr2x)");
  degrade->add_option("--seed", seed, "noise seed");
  degrade->add_option("--format", deg_format, "png8 | png16 | rawf32 (default from extension)");

  std::vector<std::string> pairs;
  bool header = false;
  auto* metrics = app.add_subcommand("metrics", "print rmse,psnr,ssim for each (image, reference) pair");
  metrics->add_option("images", pairs, "image reference [image reference ...]")->required()->check(CLI::ExistingFile);
  metrics->add_flag("--header", header, "print the CSV header first");

  std::string inf_bundle, inf_in, inf_out, inf_format;
  auto* infer = app.add_subcommand("infer", "run a weight bundle's generator on an image");
  infer->add_option("-b,--bundle", inf_bundle, "weight bundle")->required()->check(CLI::ExistingFile);
  infer->add_option("-i,--input", inf_in, "input image")->required()->check(CLI::ExistingFile);
  infer->add_option("-o,--output", inf_out, "output image")->required();
  infer->add_option("--format", inf_format, "png8 | png16 | rawf32 (default from extension)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*restore) {
      print_report(run_experiment(restore_flags.resolve(*restore)));
    } else if (*sweep) {
      print_report(run_experiment(sweep_flags.resolve(*sweep), true));
    } else if (*degrade) {
      RawConfig raw{{"task", deg_task}, {"paths.input", deg_in}, {"degradation.blur_size", std::to_string(blur_size)}};
      if (!deg_op.empty()) raw["degradation.operator"] = deg_op;
      Config cfg = resolve_config(raw);
      cfg.blur_sigma = blur_sigma;
      if (noise_sigma >= 0.0) cfg.noise_sigma255 = noise_sigma;
      const Image clean = load_image(deg_in);
      const Image low = add_awgn(degradation_operator(cfg)(clean), cfg.noise_sigma255, seed).image;
      save_image(deg_out, low, deg_format.empty() ? format_for_path(deg_out) : parse_image_format(deg_format));
    } else if (*metrics) {
      if (pairs.size() % 2 != 0) throw InvalidArgument("metrics needs an even number of images (image reference pairs)");
      if (header) std::printf("rmse,psnr,ssim\n");
      for (std::size_t i = 0; i < pairs.size(); i += 2) {
        const MetricReport m = evaluate(load_image(pairs[i]), load_image(pairs[i + 1]));
        const std::string db = m.psnr.is_infinite() ? "inf" : format_number(m.psnr.db());
        std::printf("%s,%s,%s\n", format_number(m.rmse).c_str(), db.c_str(), format_number(m.ssim).c_str());
      }
    } else if (*infer) {
      const nn::Model model = nn::load_bundle(inf_bundle);
      const Image out = nn::generator_forward(model, load_image(inf_in));
      save_image(inf_out, out, inf_format.empty() ? format_for_path(inf_out) : parse_image_format(inf_format));
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
