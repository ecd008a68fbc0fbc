// SPDX-License-Identifier: Apache-2.0
/**
 * @file   gradcheck.hpp
 * @brief  Central finite-difference checks of tape gradients (double).
 *
 * For a sampled coordinate p of every parameter, the analytic derivative is
 * compared with (f(p + h) - f(p - h)) / 2h. Coordinates where either probe
 * changes a ReLU mask or pooling choice straddle a kink; they are skipped
 * and counted. Relative error is |a - n| / max(|a|, |n|, floor).
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "lgc/model.hpp"
#include "lgc/ops.hpp"

namespace lgc {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  double floor = 1e-6;
  std::size_t max_coords_per_tensor = 12;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  std::string name;
  double worst_rel_error = 0;
  std::string worst_at;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed = false;
};

/// Builds a scalar loss from the parameters on a fresh tape.
using LossBuilder = std::function<Var(Tape<double> &, ParamStore<double> &)>;

inline GradCheckResult check_gradients(const std::string &name,
                                       ParamStore<double> &params,
                                       const LossBuilder &build,
                                       const GradCheckOptions &opt = {}) {
  auto evaluate = [&](std::uint64_t *pattern) {
    Tape<double> tape;
    tape.track_pattern(pattern != nullptr);
    Var loss = build(tape, params);
    if (pattern)
      *pattern = tape.pattern();
    return tape.value(loss)[0];
  };

  params.zero_grad();
  std::uint64_t base_pattern = 0;
  {
    Tape<double> tape;
    tape.track_pattern(true);
    Var loss = build(tape, params);
    base_pattern = tape.pattern();
    tape.backward(loss);
  }

  GradCheckResult r{name, 0.0, "", 0, 0, false};
  std::mt19937_64 rng(opt.seed);
  for (std::size_t e = 0; e < params.size(); ++e) {
    auto &entry = params.entry(e);
    const std::size_t n = entry.value.size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    if (n > opt.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double saved = entry.value[i];
      std::uint64_t plus_pattern = 0, minus_pattern = 0;
      entry.value[i] = saved + opt.step;
      const double f_plus = evaluate(&plus_pattern);
      entry.value[i] = saved - opt.step;
      const double f_minus = evaluate(&minus_pattern);
      entry.value[i] = saved;
      if (plus_pattern != base_pattern || minus_pattern != base_pattern) {
        ++r.skipped;
        continue;
      }
      const double numeric = (f_plus - f_minus) / (2 * opt.step);
      const double analytic = entry.grad[i];
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), opt.floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++r.checked;
      if (rel > r.worst_rel_error || r.worst_at.empty()) {
        r.worst_rel_error = std::max(rel, r.worst_rel_error);
        r.worst_at = entry.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  r.passed = r.checked > 0 && r.worst_rel_error < opt.tolerance;
  return r;
}

namespace detail {

inline TensorD random_tensor(Shape s, std::mt19937_64 &rng, double lo = -1.0,
                             double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  TensorD t(s);
  for (auto &v : t.vec())
    v = d(rng);
  return t;
}

/// Values with |v| in [0.1, 1]; keeps ReLU inputs away from the kink.
inline TensorD away_from_zero(Shape s, std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  TensorD t(s);
  for (auto &v : t.vec())
    v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

/// loss = sum(y * R) for a fixed random R, so upstream gradients vary.
inline Var weighted_sum(Tape<double> &tape, Var y, std::mt19937_64 &rng) {
  Var r = tape.constant(random_tensor(tape.value(y).shape(), rng), "R");
  return sum(tape, mul(tape, y, r));
}

inline std::vector<Var> group_params(Tape<double> &tape,
                                     ParamStore<double> &p,
                                     const std::string &prefix,
                                     std::size_t groups) {
  std::vector<Var> out;
  for (std::size_t g = 0; g < groups; ++g)
    out.push_back(tape.param(p, prefix + std::to_string(g)));
  return out;
}

inline void add_group_params(ParamStore<double> &p, const std::string &prefix,
                             const GroupedConvLayer &layer,
                             std::mt19937_64 &rng) {
  for (std::size_t g = 0; g < layer.groups(); ++g)
    p.add(prefix + std::to_string(g),
          random_tensor(layer.weight_shape(g), rng, -0.5, 0.5));
}

} // namespace detail

inline GradCheckResult gradcheck_conv(const std::string &name,
                                      const GroupedConvLayer &layer,
                                      std::uint64_t seed,
                                      const GradCheckOptions &opt = {}) {
  std::mt19937_64 rng(seed);
  ParamStore<double> p;
  p.add("x", detail::random_tensor(
                 Shape{2, std::size_t(layer.in_channels()), 6, 6}, rng));
  detail::add_group_params(p, "w", layer, rng);
  const std::uint64_t rseed = rng();
  return check_gradients(
      name, p,
      [&](Tape<double> &t, ParamStore<double> &ps) {
        std::mt19937_64 r(rseed);
        Var y = grouped_conv2d(t, t.param(ps, "x"), layer,
                               detail::group_params(t, ps, "w", layer.groups()));
        return detail::weighted_sum(t, y, r);
      },
      opt);
}

/// Finite-difference checks of every differentiable op plus a complete
/// Logarithmic-8 network on a 2-sample 16x16 input.
inline std::vector<GradCheckResult>
run_gradcheck_suite(std::uint64_t seed, const GradCheckOptions &base = {}) {
  GradCheckOptions opt = base;
  opt.seed = seed;
  std::vector<GradCheckResult> results;
  std::mt19937_64 rng(seed);
  const std::vector<int> groups{2, 1, 1};

  results.push_back(gradcheck_conv("conv1x1", GroupedConvLayer::uniform(1, 1, groups), rng(), opt));
  results.push_back(gradcheck_conv("conv1x3", GroupedConvLayer::uniform(1, 3, groups), rng(), opt));
  results.push_back(gradcheck_conv("conv3x1", GroupedConvLayer::uniform(3, 1, groups), rng(), opt));
  results.push_back(gradcheck_conv("conv5x5", GroupedConvLayer::full(5, 5, 3, 4), rng(), opt));

  auto unary = [&](const std::string &name, TensorD x,
                   std::function<Var(Tape<double> &, Var)> op) {
    ParamStore<double> p;
    p.add("x", std::move(x));
    const std::uint64_t rseed = rng();
    return check_gradients(
        name, p,
        [&](Tape<double> &t, ParamStore<double> &ps) {
          std::mt19937_64 r(rseed);
          return detail::weighted_sum(t, op(t, t.param(ps, "x")), r);
        },
        opt);
  };
  const Shape small{2, 4, 6, 6};
  results.push_back(unary("relu", detail::away_from_zero(small, rng),
                          [](Tape<double> &t, Var x) { return relu(t, x); }));
  results.push_back(unary("max_pool2", detail::random_tensor(small, rng),
                          [](Tape<double> &t, Var x) { return max_pool2(t, x); }));
  results.push_back(unary("global_avg_pool", detail::random_tensor(small, rng),
                          [](Tape<double> &t, Var x) {
                            return global_avg_pool(t, x);
                          }));
  {
    ParamStore<double> p;
    p.add("a", detail::random_tensor(small, rng));
    p.add("b", detail::random_tensor(small, rng));
    const std::uint64_t rseed = rng();
    results.push_back(check_gradients(
        "add", p,
        [&](Tape<double> &t, ParamStore<double> &ps) {
          std::mt19937_64 r(rseed);
          return detail::weighted_sum(
              t, add(t, t.param(ps, "a"), t.param(ps, "b")), r);
        },
        opt));
  }
  {
    ParamStore<double> p;
    p.add("logits", detail::random_tensor(Shape{4, 10, 1, 1}, rng, -3, 3));
    const std::vector<int> labels{3, 0, 9, 3};
    results.push_back(check_gradients(
        "softmax_cross_entropy", p,
        [&](Tape<double> &t, ParamStore<double> &ps) {
          return softmax_cross_entropy(t, t.param(ps, "logits"), labels);
        },
        opt));
  }
  {
    const std::vector<int> g{4, 2, 1, 1};
    const auto row = GroupedConvLayer::uniform(1, 3, g);
    const auto col = GroupedConvLayer::uniform(3, 1, g);
    ParamStore<double> p;
    p.add("x", detail::random_tensor(Shape{2, 8, 6, 6}, rng));
    detail::add_group_params(p, "row", row, rng);
    detail::add_group_params(p, "col", col, rng);
    const std::uint64_t rseed = rng();
    results.push_back(check_gradients(
        "factorized_grouped_conv", p,
        [&](Tape<double> &t, ParamStore<double> &ps) {
          std::mt19937_64 r(rseed);
          Var y = factorized_grouped_conv(
              t, t.param(ps, "x"), row, detail::group_params(t, ps, "row", g.size()),
              col, detail::group_params(t, ps, "col", g.size()));
          return detail::weighted_sum(t, y, r);
        },
        opt));
  }
  {
    NetworkSpec spec = cifar_spec("Logarithmic-8");
    spec.height = spec.width = 16;
    Model<double> model(spec, rng());
    model.params().add("input", detail::random_tensor(Shape{2, 3, 16, 16}, rng));
    const std::vector<int> labels{1, 7};
    results.push_back(check_gradients(
        "network:Logarithmic-8", model.params(),
        [&](Tape<double> &t, ParamStore<double> &ps) {
          return model.loss(t, t.param(ps, "input"), labels);
        },
        opt));
  }
  return results;
}

} // namespace lgc
