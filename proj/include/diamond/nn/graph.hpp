#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "diamond/error.hpp"
#include "diamond/image.hpp"
#include "diamond/nn/layer.hpp"
#include "diamond/nn/tensor.hpp"

namespace diamond::nn {

enum class GeneratorVariant { sr, denoise };

inline std::string to_string(GeneratorVariant v) { return v == GeneratorVariant::sr ? "sr" : "denoise"; }

inline GeneratorVariant parse_variant(const std::string& s) {
  if (s == "sr") return GeneratorVariant::sr;
  if (s == "denoise") return GeneratorVariant::denoise;
  throw FormatError("unknown generator variant '" + s + "'");
}

/// Sequential layer graph plus the encoder/decoder description it was built from.
///
/// `depth` stride-2 convolutions contract, `depth` stride-2 transposed
/// convolutions expand. `res_counts[d]` blocks follow the d-th down-step: residual
/// blocks (conv-bn-relu-conv-bn + add) for the sr variant, two conv-bn-relu sets
/// for the denoise variant. Encoder/decoder features fuse by summation.
struct ModelGraph {
  GeneratorVariant variant = GeneratorVariant::sr;
  std::size_t in_channels = 1;
  int depth = 4;
  std::vector<int> res_counts{4, 4, 6, 2};
  std::vector<std::size_t> widths{64, 128, 256, 512};
  bool residual_output = true;
  std::vector<LayerSpec> layers;

  friend bool operator==(const ModelGraph&, const ModelGraph&) = default;
};

struct GraphSummary {
  int down_steps = 0;
  int up_steps = 0;
  std::vector<int> blocks_per_stage;
  std::size_t out_channels = 0;
};

/// Checks the graph is acyclic and channel/scale consistent, and that its
/// structure matches the declared depth and block counts.
inline GraphSummary validate(const ModelGraph& g) {
  if (g.depth < 1) throw FormatError("graph depth must be >= 1");
  if (g.res_counts.size() != std::size_t(g.depth)) throw FormatError("res_counts length must equal depth");
  if (g.layers.empty()) throw FormatError("graph has no layers");

  struct Flow {
    std::size_t channels;
    int scale;
  };
  std::vector<Flow> flow;
  flow.reserve(g.layers.size());
  Flow cur{g.in_channels, 0};
  const Flow input_flow = cur;

  GraphSummary summary;
  summary.blocks_per_stage.assign(std::size_t(g.depth), 0);
  int stage = -1;  // index of the last down-step seen in the encoder
  int stage_convs = 0;
  bool decoding = false;

  auto fail = [](std::size_t i, const LayerSpec& l, const std::string& msg) {
    throw FormatError("layer " + std::to_string(i) + " ('" + l.name + "'): " + msg);
  };
  auto source_flow = [&](std::size_t i, const LayerSpec& l) {
    if (l.source == kGraphInput) return input_flow;
    if (l.source < 0 || std::size_t(l.source) >= i) fail(i, l, "skip source must reference an earlier layer");
    return flow[std::size_t(l.source)];
  };
  auto close_stage = [&]() {
    if (stage >= 0 && g.variant == GeneratorVariant::denoise) {
      summary.blocks_per_stage[std::size_t(stage)] = stage_convs / 2;
    }
    stage_convs = 0;
  };

  std::set<std::string> names;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    if (l.name.empty() || std::ranges::any_of(l.name, [](unsigned char ch) { return std::isspace(ch) != 0; })) {
      fail(i, l, "layer names must be non-empty and contain no whitespace");
    }
    if (!names.insert(l.name).second) fail(i, l, "duplicate layer name");
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::conv_transpose:
        if (l.kernel_h % 2 == 0 || l.kernel_w % 2 == 0) fail(i, l, "kernel sizes must be odd");
        if (l.stride != 1 && l.stride != 2) fail(i, l, "stride must be 1 or 2");
        if (l.in_channels != cur.channels) fail(i, l, "input channel mismatch");
        if (l.out_channels == 0) fail(i, l, "output channels must be positive");
        if (l.kind == LayerKind::conv && l.stride == 2) {
          if (decoding) fail(i, l, "down-step after the expanding path started");
          close_stage();
          ++stage;
          ++summary.down_steps;
          cur.scale += 1;
        } else if (l.kind == LayerKind::conv_transpose && l.stride == 2) {
          if (!decoding) close_stage();
          decoding = true;
          ++summary.up_steps;
          cur.scale -= 1;
        } else if (l.kind == LayerKind::conv && !decoding && stage >= 0) {
          ++stage_convs;
        }
        cur.channels = l.out_channels;
        break;
      case LayerKind::batchnorm:
        if (l.out_channels != cur.channels) fail(i, l, "channel mismatch");
        break;
      case LayerKind::activation: break;
      case LayerKind::residual_add: {
        const Flow src = source_flow(i, l);
        if (src.channels != cur.channels || src.scale != cur.scale) fail(i, l, "summed tensors differ in shape");
        if (!decoding && stage >= 0 && g.variant == GeneratorVariant::sr) {
          ++summary.blocks_per_stage[std::size_t(stage)];
        }
        break;
      }
      case LayerKind::input_skip: cur = source_flow(i, l); break;
    }
    flow.push_back(cur);
  }
  if (!decoding) close_stage();
  summary.out_channels = cur.channels;

  if (summary.down_steps != g.depth || summary.up_steps != g.depth) {
    throw FormatError("graph has " + std::to_string(summary.down_steps) + " down-steps and " +
                      std::to_string(summary.up_steps) + " up-steps, declared depth " + std::to_string(g.depth));
  }
  if (cur.scale != 0) throw FormatError("graph output is not at input resolution");
  for (std::size_t d = 0; d < summary.blocks_per_stage.size(); ++d) {
    if (summary.blocks_per_stage[d] != g.res_counts[d]) {
      throw FormatError("stage " + std::to_string(d) + " has " + std::to_string(summary.blocks_per_stage[d]) +
                        " blocks, declared " + std::to_string(g.res_counts[d]));
    }
  }
  if (g.residual_output && summary.out_channels != g.in_channels) {
    throw FormatError("residual output needs output channels equal to input channels");
  }
  return summary;
}

struct GeneratorOptions {
  GeneratorVariant variant = GeneratorVariant::sr;
  int depth = 4;
  std::vector<int> res_counts{4, 4, 6, 2};
  std::vector<std::size_t> widths{64, 128, 256, 512};
  std::size_t kernel = 3;
};

/// Default generator graph. Channels at scale s are widths[min(s, widths.size()-1)].
inline ModelGraph build_generator_graph(const GeneratorOptions& opt = {}) {
  if (opt.depth < 1 || opt.depth > 8) throw InvalidArgument("generator depth must be in [1, 8]");
  if (opt.res_counts.size() != std::size_t(opt.depth)) throw InvalidArgument("res_counts length must equal depth");
  if (opt.widths.empty()) throw InvalidArgument("widths must not be empty");
  if (std::ranges::any_of(opt.res_counts, [](int c) { return c < 0; })) throw InvalidArgument("negative block count");

  ModelGraph g;
  g.variant = opt.variant;
  g.depth = opt.depth;
  g.res_counts = opt.res_counts;
  g.widths = opt.widths;
  g.in_channels = 1;
  g.residual_output = true;

  auto width_at = [&](int scale) { return opt.widths[std::min<std::size_t>(std::size_t(scale), opt.widths.size() - 1)]; };
  const std::size_t k = opt.kernel;
  auto& L = g.layers;
  auto conv = [&](std::string name, LayerKind kind, std::size_t in, std::size_t out, int stride) {
    L.push_back({std::move(name), kind, out, in, k, k, stride});
  };
  auto bn = [&](std::string name, std::size_t ch) {
    LayerSpec s;
    s.name = std::move(name);
    s.kind = LayerKind::batchnorm;
    s.out_channels = ch;
    L.push_back(std::move(s));
  };
  auto relu = [&](std::string name) {
    LayerSpec s;
    s.name = std::move(name);
    s.kind = LayerKind::activation;
    s.activation = ActivationKind::relu;
    L.push_back(std::move(s));
  };
  auto add = [&](std::string name, int source) {
    LayerSpec s;
    s.name = std::move(name);
    s.kind = LayerKind::residual_add;
    s.source = source;
    L.push_back(std::move(s));
  };
  auto last = [&]() { return int(L.size()) - 1; };

  conv("stem.conv", LayerKind::conv, 1, width_at(0), 1);
  bn("stem.bn", width_at(0));
  relu("stem.relu");
  std::vector<int> skips{last()};

  for (int d = 0; d < opt.depth; ++d) {
    const std::string stage = "down" + std::to_string(d);
    const std::size_t ch = width_at(d + 1);
    conv(stage + ".conv", LayerKind::conv, width_at(d), ch, 2);
    bn(stage + ".bn", ch);
    relu(stage + ".relu");
    for (int b = 0; b < opt.res_counts[std::size_t(d)]; ++b) {
      const std::string blk = stage + ".block" + std::to_string(b);
      const int block_input = last();
      conv(blk + ".conv1", LayerKind::conv, ch, ch, 1);
      bn(blk + ".bn1", ch);
      relu(blk + ".relu1");
      conv(blk + ".conv2", LayerKind::conv, ch, ch, 1);
      bn(blk + ".bn2", ch);
      if (opt.variant == GeneratorVariant::sr) {
        add(blk + ".add", block_input);
      } else {
        relu(blk + ".relu2");
      }
    }
    skips.push_back(last());
  }

  for (int d = opt.depth - 1; d >= 0; --d) {
    const std::string stage = "up" + std::to_string(d);
    conv(stage + ".conv", LayerKind::conv_transpose, width_at(d + 1), width_at(d), 2);
    bn(stage + ".bn", width_at(d));
    relu(stage + ".relu");
    add(stage + ".fuse", skips[std::size_t(d)]);
  }
  conv("head.conv", LayerKind::conv, width_at(0), 1, 1);
  return g;
}

/// Output shape of every layer for the given input shape.
inline std::vector<Shape> infer_shapes(const ModelGraph& g, const Shape& input) {
  validate(g);
  std::vector<Shape> shapes;
  shapes.reserve(g.layers.size());
  Shape cur = input;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    const auto s = std::size_t(l.stride);
    switch (l.kind) {
      case LayerKind::conv:
        if (s == 2 && (cur.height % 2 != 0 || cur.width % 2 != 0)) {
          throw ShapeError("layer " + std::to_string(i) + ": stride-2 convolution needs even input dims");
        }
        cur = {l.out_channels, cur.height / s, cur.width / s};
        break;
      case LayerKind::conv_transpose: cur = {l.out_channels, cur.height * s, cur.width * s}; break;
      case LayerKind::input_skip: cur = l.source == kGraphInput ? input : shapes[std::size_t(l.source)]; break;
      default: break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

/// Graph plus parameters; immutable once constructed.
class Model {
 public:
  Model(ModelGraph graph, std::vector<LayerParams> params) : graph_(std::move(graph)), params_(std::move(params)) {
    summary_ = validate(graph_);
    if (params_.size() != graph_.layers.size()) throw FormatError("parameter list does not match layer count");
    for (std::size_t i = 0; i < params_.size(); ++i) detail::check_params(graph_.layers[i], params_[i]);
    compute_last_use();
  }

  const ModelGraph& graph() const noexcept { return graph_; }
  const std::vector<LayerParams>& params() const noexcept { return params_; }
  const GraphSummary& summary() const noexcept { return summary_; }

  /// Runs every layer; intermediate tensors are released after their last use.
  /// Reentrant: all scratch state is local to the call.
  Tensor forward(const Tensor& input) const {
    if (input.channels() != graph_.in_channels) {
      throw ShapeError("model expects " + std::to_string(graph_.in_channels) + " input channels");
    }
    const std::size_t factor = std::size_t(1) << graph_.depth;
    if (input.height() % factor != 0 || input.width() % factor != 0) {
      throw ShapeError("input " + std::to_string(input.height()) + "x" + std::to_string(input.width()) +
                       " is not divisible by 2^depth = " + std::to_string(factor));
    }
    std::vector<std::optional<Tensor>> outputs(graph_.layers.size());
    const Tensor* prev = &input;
    for (std::size_t i = 0; i < graph_.layers.size(); ++i) {
      const LayerSpec& l = graph_.layers[i];
      const Tensor* skip = nullptr;
      if (l.kind == LayerKind::residual_add || l.kind == LayerKind::input_skip) {
        skip = l.source == kGraphInput ? &input : &*outputs[std::size_t(l.source)];
      }
      try {
        outputs[i] = layer_forward(l, params_[i], *prev, skip);
      } catch (const ShapeError& e) {
        throw ShapeError("layer " + std::to_string(i) + ": " + e.what());
      }
      prev = &*outputs[i];
      for (std::size_t j : released_after_[i]) outputs[j].reset();
    }
    Tensor out = std::move(*outputs.back());
    if (graph_.residual_output) {
      auto dst = out.values();
      auto src = input.values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    return out;
  }

 private:
  void compute_last_use() {
    const std::size_t n = graph_.layers.size();
    std::vector<std::size_t> last_use(n);
    for (std::size_t i = 0; i < n; ++i) last_use[i] = std::min(i + 1, n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      const int src = graph_.layers[i].source;
      const auto kind = graph_.layers[i].kind;
      if ((kind == LayerKind::residual_add || kind == LayerKind::input_skip) && src >= 0) {
        last_use[std::size_t(src)] = std::max(last_use[std::size_t(src)], i);
      }
    }
    released_after_.assign(n, {});
    for (std::size_t j = 0; j + 1 < n; ++j) released_after_[last_use[j]].push_back(j);
  }

  ModelGraph graph_;
  std::vector<LayerParams> params_;
  GraphSummary summary_;
  std::vector<std::vector<std::size_t>> released_after_;
};

/// Parameters with every tensor zero.
inline std::vector<LayerParams> zero_params(const ModelGraph& g) {
  std::vector<LayerParams> params(g.layers.size());
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    for (const auto& slot : param_slots(g.layers[i])) (params[i].*slot.member).assign(slot.count(), 0.0f);
  }
  return params;
}

/// He-style random conv weights scaled by `gain`, small random batchnorm
/// statistics with positive variance. For tests and parity fixtures.
inline std::vector<LayerParams> random_params(const ModelGraph& g, std::uint64_t seed, float gain = 1.0f) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) { return lo + (hi - lo) * (double(rng() >> 11) * 0x1.0p-53); };
  std::vector<LayerParams> params(g.layers.size());
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerSpec& l = g.layers[i];
    LayerParams& p = params[i];
    if (l.kind == LayerKind::conv || l.kind == LayerKind::conv_transpose) {
      const double fan_in = double(l.in_channels * l.kernel_h * l.kernel_w);
      const double bound = gain * std::sqrt(3.0 / fan_in);
      p.weight.resize(l.out_channels * l.in_channels * l.kernel_h * l.kernel_w);
      for (float& w : p.weight) w = float(uniform(-bound, bound));
      p.bias.resize(l.out_channels);
      for (float& b : p.bias) b = float(uniform(-0.05, 0.05));
    } else if (l.kind == LayerKind::batchnorm) {
      for (std::size_t c = 0; c < l.out_channels; ++c) {
        p.gamma.push_back(float(uniform(0.8, 1.2)));
        p.beta.push_back(float(uniform(-0.1, 0.1)));
        p.mean.push_back(float(uniform(-0.1, 0.1)));
        p.var.push_back(float(uniform(0.5, 1.5)));
      }
    }
  }
  return params;
}

/// Restores one image: output = img + network(img) for residual-output graphs.
inline Image generator_forward(const Model& model, const Image& img) {
  return model.forward(Tensor::from_image(img)).to_image();
}

}  // namespace diamond::nn
