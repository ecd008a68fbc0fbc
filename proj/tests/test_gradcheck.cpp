// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "lgc/gradcheck.hpp"

using namespace lgc;

namespace {

/// Square op whose backward rule is off by a factor: d(x^2)/dx taken as 3x.
Var broken_square(Tape<double> &tape, Var x) {
  TensorD y = tape.value(x);
  for (auto &v : y.vec())
    v *= v;
  return tape.push("broken_square", std::move(y), {x.id},
                   [](Tape<double> &t, std::size_t self) {
                     const std::size_t xid = t.input(self, 0);
                     auto &dx = t.grad(xid);
                     for (std::size_t i = 0; i < dx.size(); ++i)
                       dx[i] += 3.0 * t.value(xid)[i] * t.grad(self)[i];
                   });
}

} // namespace

TEST(GradCheck, SuiteCoversEveryOpAndPasses) {
  const auto results = run_gradcheck_suite(0);
  std::vector<std::string> names;
  for (const auto &r : results) {
    names.push_back(r.name);
    EXPECT_TRUE(r.passed) << r.name << " worst " << r.worst_rel_error << " at "
                          << r.worst_at;
    EXPECT_LT(r.worst_rel_error, 1e-4) << r.name;
    EXPECT_GT(r.checked, 0u) << r.name;
  }
  for (const char *op : {"conv1x1", "conv1x3", "conv3x1", "conv5x5", "relu",
                         "max_pool2", "global_avg_pool", "add",
                         "softmax_cross_entropy", "factorized_grouped_conv",
                         "network:Logarithmic-8"})
    EXPECT_NE(std::find(names.begin(), names.end(), op), names.end()) << op;
}

TEST(GradCheck, DetectsCorruptedBackwardRule) {
  ParamStore<double> p;
  p.add("x", TensorD(Shape{1, 2, 3, 3}, 0.75));
  const auto r = check_gradients("broken_square", p,
                                 [](Tape<double> &t, ParamStore<double> &ps) {
                                   return sum(t, broken_square(t, t.param(ps, "x")));
                                 });
  EXPECT_FALSE(r.passed);
  EXPECT_NEAR(r.worst_rel_error, 1.0 / 3.0, 1e-6);
  EXPECT_EQ(r.name, "broken_square");
}

TEST(GradCheck, FixedSeedGivesIdenticalReport) {
  GradCheckOptions opt;
  opt.max_coords_per_tensor = 4;
  const auto a = run_gradcheck_suite(42, opt);
  const auto b = run_gradcheck_suite(42, opt);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].worst_rel_error, b[i].worst_rel_error);
    EXPECT_EQ(a[i].worst_at, b[i].worst_at);
    EXPECT_EQ(a[i].checked, b[i].checked);
  }
}

TEST(GradCheck, KinkCrossingCoordinatesAreSkipped) {
  ParamStore<double> p;
  // 1e-6 sits inside the probe step, so relu flips between the probes.
  p.add("x", TensorD(Shape{1, 1, 1, 2}, std::vector<double>{1e-6, 0.5}));
  const auto r = check_gradients("relu_kink", p,
                                 [](Tape<double> &t, ParamStore<double> &ps) {
                                   return sum(t, relu(t, t.param(ps, "x")));
                                 });
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_EQ(r.checked, 1u);
  EXPECT_TRUE(r.passed);
}
