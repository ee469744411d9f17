#pragma once

// Experiment configuration: key = value text with [sections].
//
//   task = denoise            ; denoise | sr2x
//   dataset = abdominal       ; abdominal | oral (selects per-task defaults)
//   seed = 0
//   [paths]
//   input = noisy.png         ; required
//   reference = clean.png
//   output_dir = out
//   output_format = rawf32    ; png8 | png16 | rawf32
//   [degradation]
//   operator = identity       ; identity | blur | sr2x_resample
//   blur_size = 5
//   blur_sigma = 1
//   noise_sigma255 = 15
//   synthesize = false        ; true: input is clean, degrade it first
//   [prior]
//   kind = gaussian_smooth    ; identity | gaussian_smooth | network
//   sigma = 1
//   bundle = model.dwb
//   [iteration]
//   mu = 1
//   upsilon = 1
//   step = 5e-4, 1e-3         ; lists sweep as a Cartesian product
//   delta = 0
//   epsilon = 9e-4
//   outer_iters = 30
//   tol = 0
//   tv_inner_iters = 300
//   tv_tol = 1e-6

#include <algorithm>
#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "diamond/degrade.hpp"
#include "diamond/diter.hpp"
#include "diamond/error.hpp"
#include "diamond/image_io.hpp"

namespace diamond {

enum class Task { denoise, sr2x };
enum class Dataset { abdominal, oral };

inline std::string to_string(Task t) { return t == Task::denoise ? "denoise" : "sr2x"; }
inline std::string to_string(Dataset d) { return d == Dataset::abdominal ? "abdominal" : "oral"; }

inline std::string to_string(DegradationKind k) {
  switch (k) {
    case DegradationKind::identity: return "identity";
    case DegradationKind::blur: return "blur";
    case DegradationKind::sr2x_resample: return "sr2x_resample";
  }
  return "?";
}

inline std::string to_string(PriorKind k) {
  switch (k) {
    case PriorKind::identity: return "identity";
    case PriorKind::gaussian_smooth: return "gaussian_smooth";
    case PriorKind::network: return "network";
  }
  return "?";
}

/// Per-task iteration defaults.
struct TaskDefaults {
  double step;
  double delta;
  double epsilon;
};

inline TaskDefaults task_defaults(Task task, Dataset dataset) {
  if (task == Task::denoise) {
    return dataset == Dataset::abdominal ? TaskDefaults{5e-4, 0.0, 9e-4} : TaskDefaults{1e-4, 0.0, 9e-4};
  }
  return dataset == Dataset::abdominal ? TaskDefaults{0.05, 0.01, 5e-5} : TaskDefaults{0.01, 1.0, 2.5e-4};
}

struct Config {
  Task task = Task::denoise;
  Dataset dataset = Dataset::abdominal;
  std::uint64_t seed = 0;

  std::filesystem::path input;
  std::filesystem::path reference;  // empty: none
  std::filesystem::path output_dir = "diamond_out";
  ImageFormat output_format = ImageFormat::rawf32;

  DegradationKind degradation = DegradationKind::identity;
  std::size_t blur_size = 5;
  double blur_sigma = 1.0;
  double noise_sigma255 = 15.0;
  bool synthesize = false;

  PriorKind prior = PriorKind::gaussian_smooth;
  double prior_sigma = 1.0;
  std::filesystem::path bundle;

  double mu = 1.0;
  double upsilon = 1.0;
  std::vector<double> step{5e-4};
  std::vector<double> delta{0.0};
  std::vector<double> epsilon{9e-4};
  int outer_iters = 30;
  double tol = 0.0;
  int tv_inner_iters = TvParams{}.inner_iters;
  double tv_tol = TvParams{}.tol;

  friend bool operator==(const Config&, const Config&) = default;
};

/// "section.key" (or "key" for top-level entries) -> raw text value.
using RawConfig = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] inline void type_fail(const std::string& key, const std::string& expected, const std::string& got) {
  throw ConfigError("key '" + key + "' expects " + expected + ", got '" + got + "'");
}

inline double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(v)) type_fail(key, "a finite number", text);
  return v;
}

inline std::vector<double> parse_double_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
  if (out.empty()) type_fail(key, "a comma-separated list of numbers", text);
  return out;
}

inline long long parse_integer(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(t.c_str(), &end, 10);
  if (t.empty() || *end != '\0' || errno == ERANGE) type_fail(key, "an integer", text);
  return v;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  char* end = nullptr;
  errno = 0;
  if (t.empty() || t[0] == '-') type_fail(key, "an unsigned integer", text);
  const unsigned long long v = std::strtoull(t.c_str(), &end, 10);
  if (*end != '\0' || errno == ERANGE) type_fail(key, "an unsigned integer", text);
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  type_fail(key, "a boolean (true/false)", text);
}

template <class E>
E parse_enum(const std::string& key, const std::string& text, std::initializer_list<E> values) {
  const std::string t = trim(text);
  std::string names;
  for (E v : values) {
    if (to_string(v) == t) return v;
    names += (names.empty() ? "" : " | ") + to_string(v);
  }
  type_fail(key, "one of " + names, text);
}

inline std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string number_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + number(v[i]);
  return s;
}

}  // namespace detail

/// One recognized configuration key.
struct ConfigKey {
  std::string name;  // "section.key" or "key"
  std::string flag;  // command-line flag mirroring the key
  std::string help;
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

inline const std::vector<ConfigKey>& config_keys() {
  using namespace detail;
  static const std::vector<ConfigKey> keys = {
      {"task", "--task", "denoise | sr2x",
       [](Config& c, const std::string& v) { c.task = parse_enum("task", v, {Task::denoise, Task::sr2x}); },
       [](const Config& c) { return to_string(c.task); }},
      {"dataset", "--dataset", "abdominal | oral (selects iteration defaults)",
       [](Config& c, const std::string& v) {
         c.dataset = parse_enum("dataset", v, {Dataset::abdominal, Dataset::oral});
       },
       [](const Config& c) { return to_string(c.dataset); }},
      {"seed", "--seed", "noise seed", [](Config& c, const std::string& v) { c.seed = parse_u64("seed", v); },
       [](const Config& c) { return std::to_string(c.seed); }},

      {"paths.input", "--input", "low-quality input image (clean image with synthesize)",
       [](Config& c, const std::string& v) { c.input = trim(v); },
       [](const Config& c) { return c.input.string(); }},
      {"paths.reference", "--reference", "reference image for metrics",
       [](Config& c, const std::string& v) { c.reference = trim(v); },
       [](const Config& c) { return c.reference.string(); }},
      {"paths.output_dir", "--output-dir", "directory for artifacts",
       [](Config& c, const std::string& v) { c.output_dir = trim(v); },
       [](const Config& c) { return c.output_dir.string(); }},
      {"paths.output_format", "--output-format", "png8 | png16 | rawf32",
       [](Config& c, const std::string& v) {
         try {
           c.output_format = parse_image_format(trim(v));
         } catch (const Error&) {
           type_fail("paths.output_format", "one of png8 | png16 | rawf32", v);
         }
       },
       [](const Config& c) { return to_string(c.output_format); }},

      {"degradation.operator", "--operator", "identity | blur | sr2x_resample",
       [](Config& c, const std::string& v) {
         c.degradation = parse_enum("degradation.operator", v,
                                    {DegradationKind::identity, DegradationKind::blur, DegradationKind::sr2x_resample});
       },
       [](const Config& c) { return to_string(c.degradation); }},
      {"degradation.blur_size", "--blur-size", "odd blur kernel size",
       [](Config& c, const std::string& v) {
         const auto n = parse_integer("degradation.blur_size", v);
         if (n < 1 || n % 2 == 0) type_fail("degradation.blur_size", "an odd positive integer", v);
         c.blur_size = std::size_t(n);
       },
       [](const Config& c) { return std::to_string(c.blur_size); }},
      {"degradation.blur_sigma", "--blur-sigma", "blur kernel sigma (pixels)",
       [](Config& c, const std::string& v) { c.blur_sigma = parse_double("degradation.blur_sigma", v); },
       [](const Config& c) { return number(c.blur_sigma); }},
      {"degradation.noise_sigma255", "--noise-sigma", "AWGN sigma on the 0..255 scale",
       [](Config& c, const std::string& v) { c.noise_sigma255 = parse_double("degradation.noise_sigma255", v); },
       [](const Config& c) { return number(c.noise_sigma255); }},
      {"degradation.synthesize", "--synthesize", "degrade the input before restoring",
       [](Config& c, const std::string& v) { c.synthesize = parse_bool("degradation.synthesize", v); },
       [](const Config& c) { return std::string(c.synthesize ? "true" : "false"); }},

      {"prior.kind", "--prior", "identity | gaussian_smooth | network",
       [](Config& c, const std::string& v) {
         c.prior = parse_enum("prior.kind", v, {PriorKind::identity, PriorKind::gaussian_smooth, PriorKind::network});
       },
       [](const Config& c) { return to_string(c.prior); }},
      {"prior.sigma", "--prior-sigma", "gaussian_smooth sigma",
       [](Config& c, const std::string& v) { c.prior_sigma = parse_double("prior.sigma", v); },
       [](const Config& c) { return number(c.prior_sigma); }},
      {"prior.bundle", "--bundle", "weight bundle for the network prior",
       [](Config& c, const std::string& v) { c.bundle = trim(v); },
       [](const Config& c) { return c.bundle.string(); }},

      {"iteration.mu", "--mu", "weight mu", [](Config& c, const std::string& v) { c.mu = parse_double("iteration.mu", v); },
       [](const Config& c) { return number(c.mu); }},
      {"iteration.upsilon", "--upsilon", "weight upsilon",
       [](Config& c, const std::string& v) { c.upsilon = parse_double("iteration.upsilon", v); },
       [](const Config& c) { return number(c.upsilon); }},
      {"iteration.step", "--step", "relaxation s (comma list sweeps)",
       [](Config& c, const std::string& v) { c.step = parse_double_list("iteration.step", v); },
       [](const Config& c) { return number_list(c.step); }},
      {"iteration.delta", "--delta", "TV penalty delta, 0 = epsilon (comma list sweeps)",
       [](Config& c, const std::string& v) { c.delta = parse_double_list("iteration.delta", v); },
       [](const Config& c) { return number_list(c.delta); }},
      {"iteration.epsilon", "--epsilon", "TV weight epsilon (comma list sweeps)",
       [](Config& c, const std::string& v) { c.epsilon = parse_double_list("iteration.epsilon", v); },
       [](const Config& c) { return number_list(c.epsilon); }},
      {"iteration.outer_iters", "--outer-iters", "outer iterations K",
       [](Config& c, const std::string& v) { c.outer_iters = int(parse_integer("iteration.outer_iters", v)); },
       [](const Config& c) { return std::to_string(c.outer_iters); }},
      {"iteration.tol", "--tol", "stop when rel_change < tol",
       [](Config& c, const std::string& v) { c.tol = parse_double("iteration.tol", v); },
       [](const Config& c) { return number(c.tol); }},
      {"iteration.tv_inner_iters", "--tv-inner-iters", "TV solver iteration cap",
       [](Config& c, const std::string& v) { c.tv_inner_iters = int(parse_integer("iteration.tv_inner_iters", v)); },
       [](const Config& c) { return std::to_string(c.tv_inner_iters); }},
      {"iteration.tv_tol", "--tv-tol", "TV solver tolerance",
       [](Config& c, const std::string& v) { c.tv_tol = parse_double("iteration.tv_tol", v); },
       [](const Config& c) { return number(c.tv_tol); }},
  };
  return keys;
}

inline const ConfigKey* find_config_key(const std::string& name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

/// Reads the file into raw entries. Only syntax is checked here.
inline RawConfig read_raw_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(path.string() + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  RawConfig raw;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      raw[name] = node.data();
      continue;
    }
    for (const auto& [key, leaf] : node) {
      if (!leaf.empty()) throw ConfigError("nested entries are not supported under '" + name + "." + key + "'");
      raw[name + "." + key] = leaf.data();
    }
  }
  return raw;
}

/// Applies "section.key=value".
inline void apply_override(RawConfig& raw, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = detail::trim(assignment.substr(0, eq));
  if (!find_config_key(key)) throw ConfigError("unknown config key '" + key + "'");
  raw[key] = assignment.substr(eq + 1);
}

inline void validate(const Config& c) {
  if (c.input.empty()) throw ConfigError("missing required path 'paths.input'");
  if (c.output_dir.empty()) throw ConfigError("missing required path 'paths.output_dir'");
  if (c.prior == PriorKind::network && c.bundle.empty()) {
    throw ConfigError("missing required path 'prior.bundle' for the network prior");
  }
  if (!(c.blur_sigma > 0.0)) throw ConfigError("key 'degradation.blur_sigma' expects a positive number");
  if (!(c.noise_sigma255 >= 0.0)) throw ConfigError("key 'degradation.noise_sigma255' expects a number >= 0");
  if (!(c.prior_sigma > 0.0)) throw ConfigError("key 'prior.sigma' expects a positive number");
  std::size_t combos = c.step.size() * c.delta.size() * c.epsilon.size();
  if (combos > 64) throw ConfigError("sweep has " + std::to_string(combos) + " combinations; the limit is 64");
  for (double s : c.step) {
    for (double d : c.delta) {
      for (double e : c.epsilon) {
        DiterParams p{c.mu, c.upsilon, d, e, s, c.outer_iters, c.tol, c.tv_inner_iters, c.tv_tol};
        try {
          p.validate();
        } catch (const InvalidArgument& err) {
          throw ConfigError(std::string("invalid iteration parameters: ") + err.what());
        }
      }
    }
  }
}

/// Builds a validated Config: task and dataset first, then their defaults,
/// then every explicit entry. Unknown keys are rejected by name.
inline Config resolve_config(const RawConfig& raw) {
  for (const auto& [key, value] : raw) {
    if (!find_config_key(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  Config c;
  auto apply = [&](const std::string& key) {
    if (auto it = raw.find(key); it != raw.end()) find_config_key(key)->set(c, it->second);
  };
  apply("task");
  apply("dataset");
  const TaskDefaults d = task_defaults(c.task, c.dataset);
  c.step = {d.step};
  c.delta = {d.delta};
  c.epsilon = {d.epsilon};
  if (c.task == Task::sr2x) {
    c.degradation = DegradationKind::sr2x_resample;
    c.noise_sigma255 = 0.0;
  }
  for (const auto& k : config_keys()) {
    if (k.name != "task" && k.name != "dataset") apply(k.name);
  }
  validate(c);
  return c;
}

inline Config parse_config(const std::filesystem::path& path) { return resolve_config(read_raw_config(path)); }

/// Every effective key, in a form parse_config reads back to an equal Config.
inline std::string serialize_config(const Config& c) {
  std::ostringstream out;
  std::string section;
  for (const auto& k : config_keys()) {
    const auto dot = k.name.find('.');
    const std::string sec = dot == std::string::npos ? "" : k.name.substr(0, dot);
    const std::string key = dot == std::string::npos ? k.name : k.name.substr(dot + 1);
    if (sec != section) {
      out << "\n[" << sec << "]\n";
      section = sec;
    }
    const std::string value = k.get(c);
    if (value.empty()) continue;
    out << key << " = " << value << "\n";
  }
  return out.str();
}

/// Degradation operator implied by the config.
inline DegradationOp degradation_operator(const Config& c) {
  switch (c.degradation) {
    case DegradationKind::identity: return DegradationOp::identity();
    case DegradationKind::blur:
      return DegradationOp::blur(gaussian_kernel(c.blur_size, c.blur_sigma), Boundary::replicate);
    case DegradationKind::sr2x_resample: return DegradationOp::sr2x_resample();
  }
  throw ConfigError("unknown degradation operator");
}

}  // namespace diamond
