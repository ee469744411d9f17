#pragma once

// WeightBundle file format.
//
// A UTF-8 manifest of newline-terminated lines, then the binary payload:
//
//   diamond-bundle 1
//   variant <sr|denoise>
//   in_channels <n>
//   depth <n>
//   res_counts <n> ...            (depth values)
//   widths <n> ...
//   residual_output <0|1>
//   layers <count>
//   layer <index> <name> <kind> [key=value ...]
//   ...
//   tensors <count>
//   tensor <layer name>.<suffix> <crc32 hex> <dim> ...
//   ...
//   payload_bytes <n>
//   crc32 <8 hex digits>
//   end
//   <payload>
//
// Layer keys: conv/conv_transpose take out=, in=, k=<h>x<w>, stride=;
// batchnorm takes ch=; activation takes fn=<none|relu|leaky_relu> and slope=;
// residual_add/input_skip take src=<layer index, -1 for the graph input>.
//
// Tensors appear in layer order; within a layer conv weights are "weight"
// [out, in, kh, kw] then "bias" [out], batchnorm is "gamma", "beta", "mean",
// "var" [ch]. The payload is their little-endian float32 values concatenated in
// manifest order, exactly payload_bytes long. crc32 is zlib's CRC-32 of the
// whole payload; each tensor line carries the CRC-32 of its own bytes.

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "diamond/error.hpp"
#include "diamond/nn/graph.hpp"

namespace diamond::nn {

static_assert(std::endian::native == std::endian::little, "bundle I/O assumes a little-endian host");

inline constexpr const char* kBundleMagic = "diamond-bundle 1";

namespace detail {

inline std::uint32_t crc32_of(const void* data, std::size_t bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  while (bytes > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes, 1u << 30));
    crc = ::crc32(crc, p, chunk);
    p += chunk;
    bytes -= chunk;
  }
  return std::uint32_t(crc);
}

inline std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

inline std::string format_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", double(v));
  return buf;
}

inline LayerKind parse_kind(const std::string& s, const std::string& layer_name) {
  if (s == "conv") return LayerKind::conv;
  if (s == "conv_transpose") return LayerKind::conv_transpose;
  if (s == "batchnorm") return LayerKind::batchnorm;
  if (s == "activation") return LayerKind::activation;
  if (s == "residual_add") return LayerKind::residual_add;
  if (s == "input_skip") return LayerKind::input_skip;
  throw FormatError("layer '" + layer_name + "': unknown layer kind '" + s + "'");
}

inline ActivationKind parse_activation(const std::string& s, const std::string& layer_name) {
  if (s == "none") return ActivationKind::none;
  if (s == "relu") return ActivationKind::relu;
  if (s == "leaky_relu") return ActivationKind::leaky_relu;
  throw FormatError("layer '" + layer_name + "': unknown activation '" + s + "'");
}

inline std::string layer_line(std::size_t index, const LayerSpec& l) {
  std::string s = "layer " + std::to_string(index) + " " + l.name + " " + to_string(l.kind);
  switch (l.kind) {
    case LayerKind::conv:
    case LayerKind::conv_transpose:
      s += " out=" + std::to_string(l.out_channels) + " in=" + std::to_string(l.in_channels) +
           " k=" + std::to_string(l.kernel_h) + "x" + std::to_string(l.kernel_w) + " stride=" + std::to_string(l.stride);
      break;
    case LayerKind::batchnorm: s += " ch=" + std::to_string(l.out_channels); break;
    case LayerKind::activation: s += " fn=" + to_string(l.activation) + " slope=" + format_float(l.slope); break;
    case LayerKind::residual_add:
    case LayerKind::input_skip: s += " src=" + std::to_string(l.source); break;
  }
  return s;
}

inline std::size_t parse_size(const std::string& v, const std::string& what) {
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size() || v[0] == '-') throw FormatError("bad integer for " + what + ": '" + v + "'");
  return std::size_t(n);
}

inline int parse_int(const std::string& v, const std::string& what) {
  std::size_t pos = 0;
  int n = 0;
  try {
    n = std::stoi(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw FormatError("bad integer for " + what + ": '" + v + "'");
  return n;
}

inline std::uint32_t parse_hex32(const std::string& v) {
  if (v.size() != 8 || v.find_first_not_of("0123456789abcdef") != std::string::npos) {
    throw FormatError("bad CRC-32 field '" + v + "'");
  }
  return std::uint32_t(std::stoul(v, nullptr, 16));
}

inline LayerSpec parse_layer(std::istringstream& in, std::size_t expected_index) {
  std::string idx, name, kind;
  if (!(in >> idx >> name >> kind)) throw FormatError("truncated layer line");
  if (parse_size(idx, "layer index") != expected_index) {
    throw FormatError("layer '" + name + "' has index " + idx + ", expected " + std::to_string(expected_index));
  }
  LayerSpec l;
  l.name = name;
  l.kind = parse_kind(kind, name);
  std::map<std::string, std::string> kv;
  for (std::string tok; in >> tok;) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw FormatError("layer '" + name + "': malformed attribute '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  auto take = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("layer '" + name + "': missing attribute '" + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  switch (l.kind) {
    case LayerKind::conv:
    case LayerKind::conv_transpose: {
      l.out_channels = parse_size(take("out"), name + ".out");
      l.in_channels = parse_size(take("in"), name + ".in");
      const std::string k = take("k");
      const auto x = k.find('x');
      if (x == std::string::npos) throw FormatError("layer '" + name + "': kernel must be <h>x<w>");
      l.kernel_h = parse_size(k.substr(0, x), name + ".k");
      l.kernel_w = parse_size(k.substr(x + 1), name + ".k");
      l.stride = parse_int(take("stride"), name + ".stride");
      break;
    }
    case LayerKind::batchnorm: l.out_channels = parse_size(take("ch"), name + ".ch"); break;
    case LayerKind::activation: {
      l.activation = parse_activation(take("fn"), name);
      const std::string slope = take("slope");
      char* end = nullptr;
      l.slope = std::strtof(slope.c_str(), &end);
      if (end == slope.c_str() || *end != '\0') throw FormatError("layer '" + name + "': bad slope");
      break;
    }
    case LayerKind::residual_add:
    case LayerKind::input_skip: l.source = parse_int(take("src"), name + ".src"); break;
  }
  if (!kv.empty()) throw FormatError("layer '" + name + "': unknown attribute '" + kv.begin()->first + "'");
  return l;
}

}  // namespace detail

/// Manifest text up to and including the "end" line.
inline std::string manifest_text(const Model& model) {
  const ModelGraph& g = model.graph();
  std::ostringstream m;
  m << kBundleMagic << "\n";
  m << "variant " << to_string(g.variant) << "\n";
  m << "in_channels " << g.in_channels << "\n";
  m << "depth " << g.depth << "\n";
  m << "res_counts";
  for (int c : g.res_counts) m << " " << c;
  m << "\nwidths";
  for (auto w : g.widths) m << " " << w;
  m << "\nresidual_output " << (g.residual_output ? 1 : 0) << "\n";
  m << "layers " << g.layers.size() << "\n";
  for (std::size_t i = 0; i < g.layers.size(); ++i) m << detail::layer_line(i, g.layers[i]) << "\n";

  std::size_t n_tensors = 0;
  std::size_t payload_bytes = 0;
  std::vector<float> payload;
  std::ostringstream tensors;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    for (const auto& slot : param_slots(g.layers[i])) {
      const auto& values = model.params()[i].*slot.member;
      tensors << "tensor " << g.layers[i].name << "." << slot.suffix << " "
              << detail::hex32(detail::crc32_of(values.data(), values.size() * sizeof(float)));
      for (auto d : slot.dims) tensors << " " << d;
      tensors << "\n";
      payload.insert(payload.end(), values.begin(), values.end());
      ++n_tensors;
    }
  }
  payload_bytes = payload.size() * sizeof(float);
  m << "tensors " << n_tensors << "\n" << tensors.str();
  m << "payload_bytes " << payload_bytes << "\n";
  m << "crc32 " << detail::hex32(detail::crc32_of(payload.data(), payload_bytes)) << "\n";
  m << "end\n";
  return m.str();
}

inline void save_bundle(const std::filesystem::path& path, const Model& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::string manifest = manifest_text(model);
  out.write(manifest.data(), std::streamsize(manifest.size()));
  const ModelGraph& g = model.graph();
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    for (const auto& slot : param_slots(g.layers[i])) {
      const auto& values = model.params()[i].*slot.member;
      out.write(reinterpret_cast<const char*>(values.data()), std::streamsize(values.size() * sizeof(float)));
    }
  }
  if (!out.flush()) throw IoError("failed to write '" + path.string() + "'");
}

/// Reads and fully validates a bundle: manifest syntax, graph structure, tensor
/// names and shapes, payload length, whole-payload and per-tensor CRC-32.
inline Model load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");

  std::string line;
  auto next_line = [&](const char* what) {
    if (!std::getline(in, line)) throw FormatError("bundle truncated while reading " + std::string(what));
    return std::istringstream(line);
  };
  auto expect_key = [&](std::istringstream& ls, const std::string& key) {
    std::string k;
    ls >> k;
    if (k != key) throw FormatError("bundle manifest: expected '" + key + "', found '" + line + "'");
  };

  next_line("magic");
  if (line != kBundleMagic) throw FormatError("'" + path.string() + "' is not a weight bundle");

  ModelGraph g;
  {
    auto ls = next_line("variant");
    expect_key(ls, "variant");
    std::string v;
    ls >> v;
    g.variant = parse_variant(v);
  }
  {
    auto ls = next_line("in_channels");
    expect_key(ls, "in_channels");
    std::string v;
    ls >> v;
    g.in_channels = detail::parse_size(v, "in_channels");
  }
  {
    auto ls = next_line("depth");
    expect_key(ls, "depth");
    std::string v;
    ls >> v;
    g.depth = detail::parse_int(v, "depth");
  }
  {
    auto ls = next_line("res_counts");
    expect_key(ls, "res_counts");
    g.res_counts.clear();
    for (std::string v; ls >> v;) g.res_counts.push_back(detail::parse_int(v, "res_counts"));
  }
  {
    auto ls = next_line("widths");
    expect_key(ls, "widths");
    g.widths.clear();
    for (std::string v; ls >> v;) g.widths.push_back(detail::parse_size(v, "widths"));
  }
  {
    auto ls = next_line("residual_output");
    expect_key(ls, "residual_output");
    std::string v;
    ls >> v;
    if (v != "0" && v != "1") throw FormatError("residual_output must be 0 or 1");
    g.residual_output = v == "1";
  }
  std::size_t n_layers = 0;
  {
    auto ls = next_line("layers");
    expect_key(ls, "layers");
    std::string v;
    ls >> v;
    n_layers = detail::parse_size(v, "layers");
  }
  for (std::size_t i = 0; i < n_layers; ++i) {
    auto ls = next_line("layer");
    expect_key(ls, "layer");
    g.layers.push_back(detail::parse_layer(ls, i));
  }
  validate(g);

  struct TensorEntry {
    std::string name;
    std::uint32_t crc;
    std::vector<std::size_t> dims;
  };
  std::size_t n_tensors = 0;
  {
    auto ls = next_line("tensors");
    expect_key(ls, "tensors");
    std::string v;
    ls >> v;
    n_tensors = detail::parse_size(v, "tensors");
  }
  std::vector<TensorEntry> entries;
  for (std::size_t i = 0; i < n_tensors; ++i) {
    auto ls = next_line("tensor");
    expect_key(ls, "tensor");
    TensorEntry e;
    std::string crc;
    if (!(ls >> e.name >> crc)) throw FormatError("truncated tensor line: '" + line + "'");
    e.crc = detail::parse_hex32(crc);
    for (std::string v; ls >> v;) e.dims.push_back(detail::parse_size(v, e.name));
    entries.push_back(std::move(e));
  }
  std::size_t payload_bytes = 0;
  {
    auto ls = next_line("payload_bytes");
    expect_key(ls, "payload_bytes");
    std::string v;
    ls >> v;
    payload_bytes = detail::parse_size(v, "payload_bytes");
  }
  std::uint32_t payload_crc = 0;
  {
    auto ls = next_line("crc32");
    expect_key(ls, "crc32");
    std::string v;
    ls >> v;
    payload_crc = detail::parse_hex32(v);
  }
  next_line("end");
  if (line != "end") throw FormatError("bundle manifest: expected 'end', found '" + line + "'");

  // Tensor list must be exactly the graph's parameter slots.
  std::size_t expected_bytes = 0;
  std::size_t e_idx = 0;
  for (const auto& layer : g.layers) {
    for (const auto& slot : param_slots(layer)) {
      const std::string name = layer.name + "." + slot.suffix;
      if (e_idx >= entries.size()) throw FormatError("bundle is missing tensor '" + name + "'");
      const auto& e = entries[e_idx++];
      if (e.name != name) throw FormatError("expected tensor '" + name + "', found '" + e.name + "'");
      if (e.dims != slot.dims) throw FormatError("tensor '" + name + "' shape inconsistent with layer spec");
      expected_bytes += slot.count() * sizeof(float);
    }
  }
  if (e_idx != entries.size()) throw FormatError("bundle has unexpected tensor '" + entries[e_idx].name + "'");
  if (expected_bytes != payload_bytes) {
    throw FormatError("payload_bytes " + std::to_string(payload_bytes) + " does not match tensor shapes (" +
                      std::to_string(expected_bytes) + ")");
  }

  const std::streamoff payload_offset = in.tellg();
  std::vector<float> payload(payload_bytes / sizeof(float));
  in.read(reinterpret_cast<char*>(payload.data()), std::streamsize(payload_bytes));
  if (std::size_t(in.gcount()) != payload_bytes) throw FormatError("bundle payload is truncated");
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("bundle has trailing bytes after payload");

  const bool whole_ok = detail::crc32_of(payload.data(), payload_bytes) == payload_crc;

  std::vector<LayerParams> params(g.layers.size());
  std::size_t cursor = 0;
  e_idx = 0;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    for (const auto& slot : param_slots(g.layers[i])) {
      const auto& e = entries[e_idx++];
      const std::size_t n = slot.count();
      if (detail::crc32_of(payload.data() + cursor, n * sizeof(float)) != e.crc) {
        throw IntegrityError("CRC mismatch in tensor '" + e.name + "' at payload bytes [" +
                             std::to_string(cursor * sizeof(float)) + ", " + std::to_string((cursor + n) * sizeof(float)) +
                             "), file offset " + std::to_string(payload_offset + std::streamoff(cursor * sizeof(float))));
      }
      (params[i].*slot.member).assign(payload.begin() + std::ptrdiff_t(cursor), payload.begin() + std::ptrdiff_t(cursor + n));
      cursor += n;
    }
  }
  if (!whole_ok) throw IntegrityError("payload CRC-32 mismatch (manifest " + detail::hex32(payload_crc) + ")");
  return Model(std::move(g), std::move(params));
}

}  // namespace diamond::nn
