// SPDX-License-Identifier: Apache-2.0
/**
 * @file   optim.hpp
 * @brief  Adam and piecewise-constant learning-rate schedules.
 */
#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "lgc/autodiff.hpp"
#include "lgc/error.hpp"

namespace lgc {

template <typename T> struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<std::vector<T>> m; // one per parameter, store order
  std::vector<std::vector<T>> v;
};

/// m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;
/// p <- p - lr * m_hat / (sqrt(v_hat) + eps), with bias-corrected moments.
template <typename T>
void adam_step(ParamStore<T> &params, AdamState<T> &state, double lr) {
  if (state.m.empty()) {
    params.for_each([&](auto &e) {
      state.m.emplace_back(e.value.size(), T(0));
      state.v.emplace_back(e.value.size(), T(0));
    });
  }
  if (state.m.size() != params.size())
    throw Error("adam: optimizer state does not match the parameter store");
  params.for_each([](const auto &e) {
    if (!e.grad.all_finite())
      throw NumericError("adam: non-finite gradient for '" + e.name + "'");
  });

  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
  const T b1 = T(state.beta1), b2 = T(state.beta2);
  const T step_size = T(lr / bc1);
  const T inv_sqrt_bc2 = T(1.0 / std::sqrt(bc2));
  const T eps = T(state.eps);
  std::size_t idx = 0;
  params.for_each([&](auto &e) {
    auto &m = state.m[idx];
    auto &v = state.v[idx];
    ++idx;
    T *p = e.value.data();
    const T *g = e.grad.data();
    for (std::size_t i = 0; i < m.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      p[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
    }
  });
}

/// Piecewise-constant rate as a function of the 1-indexed epoch: the first
/// entry whose threshold is >= epoch applies.
struct LrSchedule {
  std::vector<std::pair<int, double>> steps;

  void validate() const {
    if (steps.empty())
      throw Error("learning-rate schedule is empty");
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (steps[i].second <= 0)
        throw Error("learning rates must be positive");
      if (i && steps[i].first <= steps[i - 1].first)
        throw Error("schedule thresholds must be strictly increasing");
    }
  }

  int total_epochs() const { return steps.empty() ? 0 : steps.back().first; }

  double rate(int epoch) const {
    if (epoch < 1)
      throw Error("epochs are 1-indexed, got " + std::to_string(epoch));
    for (const auto &[until, lr] : steps)
      if (epoch <= until)
        return lr;
    throw ScheduleExhaustedError("epoch " + std::to_string(epoch) +
                                 " is past the end of the schedule (" +
                                 std::to_string(total_epochs()) + " epochs)");
  }
};

/// 1e-3 through epoch 100, 5e-4 to 140, 1e-4 to 160, 5e-5 to 180.
inline LrSchedule cifar_schedule() {
  return {{{100, 1e-3}, {140, 5e-4}, {160, 1e-4}, {180, 5e-5}}};
}

/// Constant 1e-4 for 30 epochs.
inline LrSchedule fer_schedule() { return {{{30, 1e-4}}}; }

inline LrSchedule constant_schedule(double lr, int epochs) {
  LrSchedule s{{{epochs, lr}}};
  s.validate();
  return s;
}

/// Parses "cifar", "fer" or "const:<rate>" (the latter lasting `epochs`).
inline LrSchedule parse_schedule(const std::string &text, int epochs) {
  if (text == "cifar")
    return cifar_schedule();
  if (text == "fer")
    return fer_schedule();
  if (text.rfind("const:", 0) == 0) {
    try {
      return constant_schedule(std::stod(text.substr(6)), epochs);
    } catch (const std::invalid_argument &) {
    }
  }
  throw Error("unknown learning-rate schedule '" + text +
              "' (expected cifar, fer or const:<rate>)");
}

} // namespace lgc
