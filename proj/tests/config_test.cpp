#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "diamond/config.hpp"
#include "test_util.hpp"

using namespace diamond;
using diamond::testing::scratch_dir;

namespace {

std::filesystem::path write_config(const std::string& name, const std::string& text) {
  const auto path = scratch_dir("config_" + name) / "run.ini";
  std::ofstream(path) << text;
  return path;
}

std::string config_error(const RawConfig& raw) {
  try {
    resolve_config(raw);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, MinimalDenoiseUsesTaskDefaults) {
  const Config c = parse_config(write_config("minimal", "task = denoise\n[paths]\ninput = x.png\n"));
  EXPECT_EQ(c.task, Task::denoise);
  EXPECT_EQ(c.input, "x.png");
  EXPECT_EQ(c.epsilon, std::vector<double>{9e-4});
  EXPECT_EQ(c.step, std::vector<double>{5e-4});
  EXPECT_EQ(c.delta, std::vector<double>{0.0});
  EXPECT_EQ(c.degradation, DegradationKind::identity);
  EXPECT_EQ(c.noise_sigma255, 15.0);
  EXPECT_EQ(c.outer_iters, 30);
}

TEST(Config, TaskAndDatasetDefaults) {
  struct Case {
    const char* task;
    const char* dataset;
    double step, delta, eps;
  } cases[] = {{"denoise", "abdominal", 5e-4, 0.0, 9e-4},
               {"denoise", "oral", 1e-4, 0.0, 9e-4},
               {"sr2x", "abdominal", 0.05, 0.01, 5e-5},
               {"sr2x", "oral", 0.01, 1.0, 2.5e-4}};
  for (const auto& k : cases) {
    const Config c = resolve_config({{"task", k.task}, {"dataset", k.dataset}, {"paths.input", "a.png"}});
    EXPECT_EQ(c.step, std::vector<double>{k.step}) << k.task << "/" << k.dataset;
    EXPECT_EQ(c.delta, std::vector<double>{k.delta});
    EXPECT_EQ(c.epsilon, std::vector<double>{k.eps});
  }
  const Config sr = resolve_config({{"task", "sr2x"}, {"paths.input", "a.png"}});
  EXPECT_EQ(sr.degradation, DegradationKind::sr2x_resample);
  EXPECT_EQ(sr.noise_sigma255, 0.0);
  EXPECT_EQ(degradation_operator(sr).kind(), DegradationKind::sr2x_resample);
}

TEST(Config, ExplicitKeysBeatTaskDefaults) {
  const Config c = parse_config(write_config("explicit",
                                             "seed = 4\ntask = sr2x\n"
                                             "[iteration]\nepsilon = 0.01, 0.02\nstep = 0.5\n"
                                             "[degradation]\nnoise_sigma255 = 3\n"
                                             "[paths]\ninput = in.png\n"));
  EXPECT_EQ(c.task, Task::sr2x);
  EXPECT_EQ(c.epsilon, (std::vector<double>{0.01, 0.02}));
  EXPECT_EQ(c.step, std::vector<double>{0.5});
  EXPECT_EQ(c.delta, std::vector<double>{0.01});
  EXPECT_EQ(c.noise_sigma255, 3.0);
}

TEST(Config, UnknownKeyIsNamed) {
  const std::string msg = config_error({{"paths.input", "a.png"}, {"iteration.epzilon", "0.1"}});
  EXPECT_NE(msg.find("'iteration.epzilon'"), std::string::npos) << msg;
  try {
    parse_config(write_config("typo", "[paths]\ninput = a.png\n[iteration]\nepzilon = 1\n"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("epzilon"), std::string::npos);
  }
}

TEST(Config, TypeErrorsNameKeyAndValue) {
  const std::string msg = config_error({{"paths.input", "a.png"}, {"iteration.outer_iters", "ten"}});
  EXPECT_NE(msg.find("'iteration.outer_iters'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("'ten'"), std::string::npos) << msg;
  EXPECT_NE(config_error({{"paths.input", "a.png"}, {"iteration.mu", "1.5x"}}), "");
  EXPECT_NE(config_error({{"paths.input", "a.png"}, {"task", "deblur"}}), "");
  EXPECT_NE(config_error({{"paths.input", "a.png"}, {"degradation.synthesize", "maybe"}}), "");
  EXPECT_NE(config_error({{"paths.input", "a.png"}, {"seed", "-3"}}), "");
}

TEST(Config, MissingInput) {
  EXPECT_EQ(config_error({{"task", "denoise"}}), "missing required path 'paths.input'");
  EXPECT_NE(config_error({{"paths.input", "a.png"}, {"prior.kind", "network"}}).find("prior.bundle"),
            std::string::npos);
}

TEST(Config, RangeChecks) {
  EXPECT_NE(config_error({{"paths.input", "a.png"}, {"iteration.step", "1.5"}}), "");
  EXPECT_NE(config_error({{"paths.input", "a.png"}, {"iteration.mu", "0"}}), "");
  EXPECT_NE(config_error({{"paths.input", "a.png"}, {"prior.sigma", "0"}}), "");
  EXPECT_NE(config_error({{"paths.input", "a.png"}, {"degradation.noise_sigma255", "-1"}}), "");
}

TEST(Config, SweepCap) {
  RawConfig raw{{"paths.input", "a.png"},
                {"iteration.step", "0.1,0.2,0.3,0.4"},
                {"iteration.delta", "0,1,2,3"},
                {"iteration.epsilon", "0.1,0.2,0.3,0.4"}};
  EXPECT_EQ(config_error(raw), "");
  raw["iteration.epsilon"] = "0.1,0.2,0.3,0.4,0.5";
  EXPECT_NE(config_error(raw).find("80 combinations"), std::string::npos);
}

TEST(Config, OverridesReplaceFileValues) {
  RawConfig raw = read_raw_config(write_config("override", "[paths]\ninput = a.png\n[iteration]\nmu = 2\n"));
  apply_override(raw, "iteration.mu=3");
  apply_override(raw, "prior.kind=identity");
  const Config c = resolve_config(raw);
  EXPECT_EQ(c.mu, 3.0);
  EXPECT_EQ(c.prior, PriorKind::identity);
  EXPECT_THROW(apply_override(raw, "iteration.muu=3"), ConfigError);
  EXPECT_THROW(apply_override(raw, "novalue"), ConfigError);
}

TEST(Config, SerializeRoundTrips) {
  Config c = resolve_config({{"paths.input", "dir/in put.png"}, {"task", "sr2x"}});
  c.reference = "ref.png";
  c.epsilon = {0.1, 1.0 / 3.0};
  c.step = {0.7};
  c.mu = 0.123456789012345678;
  c.seed = 18446744073709551615ull;
  c.synthesize = true;
  c.prior = PriorKind::identity;
  c.degradation = DegradationKind::blur;
  c.blur_size = 7;
  c.output_format = ImageFormat::png16;
  c.tv_tol = 1e-9;
  const auto path = write_config("roundtrip", serialize_config(c));
  EXPECT_EQ(parse_config(path), c);
}

TEST(Config, SyntaxErrorReportsLine) {
  try {
    read_raw_config(write_config("syntax", "[paths]\ninput = a.png\n[iteration\n"));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
  EXPECT_THROW(read_raw_config(scratch_dir("config_missing") / "none.ini"), IoError);
}

TEST(Config, EveryKeyHasAFlag) {
  std::set<std::string> flags;
  for (const auto& k : config_keys()) {
    EXPECT_EQ(k.flag.rfind("--", 0), 0u) << k.name;
    EXPECT_TRUE(flags.insert(k.flag).second) << k.flag;
  }
}
