// SPDX-License-Identifier: Apache-2.0
/**
 * @file   model.hpp
 * @brief  The three-layer shallow CNN with logarithmic group convolution
 *         modules, and its exact parameter budget.
 *
 * Topology (stride 1, same padding, no biases, no normalization):
 *
 *   stem      5x5 conv 3 -> 64, ReLU
 *   module 2  1x1 conv 64 -> 128, ReLU            = t
 *             F(t) = ReLU(3x1 grouped(ReLU(1x3 grouped(t))))
 *             out  = t + F(t)   (F(t) without shortcut), 2x2 max pool
 *   module 3  same with 128 -> 256 and the layer-3 groups, 2x2 max pool
 *   head      1x1 conv 256 -> classes, global average pool, softmax
 */
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lgc/autodiff.hpp"
#include "lgc/error.hpp"
#include "lgc/ops.hpp"
#include "lgc/scheme.hpp"

namespace lgc {

struct NetworkSpec {
  int in_channels = 3;
  int height = 32;
  int width = 32;
  int stem_channels = 64;
  int stem_kernel = 5;
  std::vector<int> module_channels{128, 256};
  int kernel_m = 3;
  SchemeTable scheme = canonical_scheme_table("Logarithmic-8");
  bool shortcut = true;
  int num_classes = 10;

  /// Display name, e.g. "Uniform-8 w/o shortcut".
  std::string label() const {
    return shortcut ? scheme.name : scheme.name + " w/o shortcut";
  }
};

inline NetworkSpec cifar_spec(const std::string &scheme, bool shortcut = true) {
  NetworkSpec s;
  s.scheme = canonical_scheme_table(scheme);
  s.shortcut = shortcut;
  return s;
}

/// Face-shaped variant: 6 classes at 64x64.
inline NetworkSpec face_spec(const std::string &scheme, bool shortcut = true) {
  NetworkSpec s = cifar_spec(scheme, shortcut);
  s.height = s.width = 64;
  s.num_classes = 6;
  return s;
}

inline void validate(const NetworkSpec &s) {
  auto fail = [](const std::string &m) { throw InvalidSpecError(m); };
  if (s.in_channels <= 0 || s.stem_channels <= 0 || s.num_classes <= 0)
    fail("channel counts and class count must be positive");
  if (s.height <= 0 || s.width <= 0 || s.height % 4 || s.width % 4)
    fail("input height and width must be positive multiples of 4");
  if (s.module_channels.size() != 2)
    fail("the shallow network has exactly two grouped modules");
  if (s.module_channels[1] != 2 * s.module_channels[0])
    fail("module channel widths must double");
  if (s.kernel_m % 2 == 0 || s.stem_kernel % 2 == 0)
    fail("kernels must be odd-sized");
  for (int m = 0; m < 2; ++m) {
    const int layer = m + 2;
    if (!s.scheme.per_layer.count(layer))
      fail("scheme '" + s.scheme.name + "' has no layer " +
           std::to_string(layer));
    const auto &g = s.scheme.layer(layer);
    validate(g);
    if (g.channels != s.module_channels[m])
      fail("scheme '" + s.scheme.name + "' layer " + std::to_string(layer) +
           " covers " + std::to_string(g.channels) +
           " channels but the module is " +
           std::to_string(s.module_channels[m]) + " wide");
  }
}

struct ParameterBudget {
  std::vector<std::pair<std::string, std::int64_t>> per_layer;
  std::int64_t total = 0;
};

/// Closed-form weight count, independent of any instantiated model.
inline ParameterBudget count_parameters(const NetworkSpec &s) {
  validate(s);
  auto sum_sq = [](const std::vector<int> &g) {
    std::int64_t r = 0;
    for (int v : g)
      r += std::int64_t(v) * v;
    return r;
  };
  ParameterBudget b;
  const std::int64_t k2 = std::int64_t(s.stem_kernel) * s.stem_kernel;
  b.per_layer.emplace_back("stem.conv", k2 * s.in_channels * s.stem_channels);
  int prev = s.stem_channels;
  for (int m = 0; m < 2; ++m) {
    const int c = s.module_channels[m];
    const std::string p = "m" + std::to_string(m + 2);
    b.per_layer.emplace_back(p + ".expand", std::int64_t(prev) * c);
    b.per_layer.emplace_back(p + ".factorized",
                             2 * std::int64_t(s.kernel_m) *
                                 sum_sq(s.scheme.layer(m + 2).sizes));
    prev = c;
  }
  b.per_layer.emplace_back("head.classifier",
                           std::int64_t(prev) * s.num_classes);
  for (const auto &[name, n] : b.per_layer)
    b.total += n;
  return b;
}

template <typename T> class Model {
public:
  explicit Model(NetworkSpec spec, std::uint64_t seed = 0)
      : spec_(std::move(spec)) {
    validate(spec_);
    const int k = spec_.stem_kernel, m = spec_.kernel_m;
    stem_ = GroupedConvLayer::full(k, k, spec_.in_channels, spec_.stem_channels);
    int prev = spec_.stem_channels;
    for (int i = 0; i < 2; ++i) {
      const int c = spec_.module_channels[i];
      const auto &g = spec_.scheme.layer(i + 2).sizes;
      modules_[i] = {GroupedConvLayer::full(1, 1, prev, c),
                     GroupedConvLayer::uniform(1, m, g),
                     GroupedConvLayer::uniform(m, 1, g)};
      prev = c;
    }
    head_ = GroupedConvLayer::full(1, 1, prev, spec_.num_classes);

    std::mt19937_64 rng(seed);
    init_layer(rng, "stem", "stem.conv5x5", stem_);
    for (int i = 0; i < 2; ++i) {
      const int module = i + 2;
      const std::string p = "m" + std::to_string(module);
      init_layer(rng, layer_key(module, "expand"), p + ".expand1x1",
                 modules_[i].expand);
      init_layer(rng, layer_key(module, "row"),
                 p + ".conv1x" + std::to_string(m), modules_[i].row);
      init_layer(rng, layer_key(module, "col"),
                 p + ".conv" + std::to_string(m) + "x1", modules_[i].col);
    }
    init_layer(rng, "head", "head.classifier1x1", head_);
  }

  const NetworkSpec &spec() const { return spec_; }
  ParamStore<T> &params() { return params_; }
  const ParamStore<T> &params() const { return params_; }

  /// Weight tensors of the factorized pair F of module 2 or 3.
  std::vector<std::string> residual_weight_names(int module) const {
    return concat(names_.at(layer_key(module, "row")),
                  names_.at(layer_key(module, "col")));
  }

  /// Stem output: ReLU(5x5 conv).
  Var stem(Tape<T> &tape, Var x) {
    return relu(tape, conv(tape, x, stem_, "stem"));
  }

  /// One grouped module up to (not including) pooling: t + F(t) or F(t).
  Var module(Tape<T> &tape, Var x, int module) {
    const auto &mod = modules_.at(module - 2);
    Var t = expansion(tape, x, module);
    Var f = factorized_grouped_conv(
        tape, t, mod.row, weights(tape, layer_key(module, "row")), mod.col,
        weights(tape, layer_key(module, "col")));
    return spec_.shortcut ? add(tape, t, f) : f;
  }

  /// Branch point of a module: ReLU(1x1 expansion).
  Var expansion(Tape<T> &tape, Var x, int module) {
    const auto &mod = modules_.at(module - 2);
    return relu(tape, conv(tape, x, mod.expand, layer_key(module, "expand")));
  }

  /// Class scores (N, classes, 1, 1) before softmax.
  Var logits(Tape<T> &tape, Var x) {
    const auto &s = tape.value(x).shape();
    if (s.c != static_cast<std::size_t>(spec_.in_channels) ||
        s.h % 4 != 0 || s.w % 4 != 0)
      throw ShapeError("model input must have " +
                       std::to_string(spec_.in_channels) +
                       " channels and spatial dims divisible by 4, got " +
                       to_string(s));
    Var h = stem(tape, x);
    h = max_pool2(tape, module(tape, h, 2));
    h = max_pool2(tape, module(tape, h, 3));
    return global_avg_pool(tape, conv(tape, h, head_, "head"));
  }

  Var loss(Tape<T> &tape, Var x, std::vector<int> labels) {
    return softmax_cross_entropy(tape, logits(tape, x), std::move(labels));
  }

  /// Convenience forward pass without keeping the tape.
  BasicTensor<T> predict_logits(const BasicTensor<T> &x) {
    Tape<T> tape;
    return tape.value(logits(tape, tape.constant(x, "input")));
  }

  /// Number of scalar weights actually instantiated.
  std::size_t weight_census() const { return params_.numel(); }

private:
  struct ModuleLayers {
    GroupedConvLayer expand, row, col;
  };

  static std::string layer_key(int module, const std::string &part) {
    return "m" + std::to_string(module) + "." + part;
  }
  static std::vector<std::string> concat(std::vector<std::string> a,
                                         const std::vector<std::string> &b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }

  // He-normal per block: stddev sqrt(2 / (kh * kw * in_group)).
  void init_layer(std::mt19937_64 &rng, const std::string &key,
                  const std::string &name, const GroupedConvLayer &layer) {
    auto &names = names_[key];
    for (std::size_t g = 0; g < layer.groups(); ++g) {
      const Shape ws = layer.weight_shape(g);
      BasicTensor<T> w(ws);
      const double fan_in = double(ws.c) * ws.h * ws.w;
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = static_cast<T>(dist(rng));
      const std::string pname =
          layer.groups() == 1 ? name : name + ".g" + std::to_string(g);
      params_.add(pname, std::move(w));
      names.push_back(pname);
    }
  }

  std::vector<Var> weights(Tape<T> &tape, const std::string &key) {
    std::vector<Var> out;
    for (const auto &n : names_.at(key))
      out.push_back(tape.param(params_, n));
    return out;
  }

  Var conv(Tape<T> &tape, Var x, const GroupedConvLayer &layer,
           const std::string &key) {
    return grouped_conv2d(tape, x, layer, weights(tape, key));
  }
  NetworkSpec spec_;
  GroupedConvLayer stem_, head_;
  std::array<ModuleLayers, 2> modules_;
  ParamStore<T> params_;
  std::map<std::string, std::vector<std::string>> names_;
};

/// Builds the network with freshly initialized float weights.
inline Model<float> build_network(const NetworkSpec &spec,
                                  std::uint64_t seed = 0) {
  return Model<float>(spec, seed);
}

struct ReportRow {
  std::string name;
  std::int64_t total = 0;
  std::optional<double> accuracy;
  std::optional<double> drop;
};

/// Parameter totals per spec and, when accuracies (keyed by spec label) are
/// given, the drop relative to the "Baseline" entry.
inline std::vector<ReportRow>
scheme_comparison_report(const std::vector<NetworkSpec> &specs,
                         const std::map<std::string, double> &accuracies = {}) {
  std::vector<ReportRow> rows;
  if (specs.empty())
    return rows;
  const int classes = specs.front().num_classes;
  for (const auto &s : specs)
    if (s.num_classes != classes)
      throw ReportError("report mixes class counts " + std::to_string(classes) +
                        " and " + std::to_string(s.num_classes));
  std::optional<double> baseline;
  if (!accuracies.empty()) {
    auto it = accuracies.find("Baseline");
    if (it == accuracies.end())
      throw ReportError("accuracy drops requested but no Baseline accuracy "
                        "supplied");
    baseline = it->second;
  }
  for (const auto &s : specs) {
    ReportRow r{s.label(), count_parameters(s).total, {}, {}};
    if (auto it = accuracies.find(s.label()); it != accuracies.end()) {
      r.accuracy = it->second;
      r.drop = *baseline - it->second;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

} // namespace lgc
