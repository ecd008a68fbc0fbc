// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "lgc/ops.hpp"
#include "oracles.hpp"

using namespace lgc;

namespace {

template <typename T>
std::vector<BasicTensor<T>> random_blocks(const GroupedConvLayer &layer,
                                          std::mt19937_64 &rng) {
  std::vector<BasicTensor<T>> w;
  for (std::size_t g = 0; g < layer.groups(); ++g)
    w.push_back(oracle::random_tensor<T>(layer.weight_shape(g), rng));
  return w;
}

template <typename T>
BasicTensor<T> conv(const BasicTensor<T> &x, const GroupedConvLayer &layer,
                    const std::vector<BasicTensor<T>> &w) {
  return grouped_conv2d_forward<T>(x, layer, std::span<const BasicTensor<T>>(w));
}

} // namespace

TEST(Gemm, MatchesNaiveProductAcrossTileEdges) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(-1, 1);
  for (auto [M, N, K] : {std::array<std::size_t, 3>{1, 1, 1},
                         {7, 33, 5},
                         {13, 64, 17},
                         {6, 47, 1},
                         {25, 100, 40}}) {
    std::vector<double> A(M * K), B(K * N), C(M * N, 0.5), ref(M * N);
    for (auto &v : A) v = d(rng);
    for (auto &v : B) v = d(rng);
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        double s = 0;
        for (std::size_t k = 0; k < K; ++k)
          s += A[i * K + k] * B[k * N + j];
        ref[i * N + j] = s;
      }
    auto C2 = C;
    gemm<double>(M, N, K, A.data(), K, B.data(), N, C.data(), N, false);
    gemm<double>(M, N, K, A.data(), K, B.data(), N, C2.data(), N, true);
    for (std::size_t i = 0; i < M * N; ++i) {
      ASSERT_NEAR(C[i], ref[i], 1e-12) << M << "x" << N << "x" << K;
      ASSERT_NEAR(C2[i], ref[i] + 0.5, 1e-12);
    }
  }
}

TEST(GroupedConv, SingleGroupEqualsDirectFullConv) {
  std::mt19937_64 rng(8);
  for (auto [kh, kw] : {std::pair{1, 1}, {1, 3}, {3, 1}, {5, 5}, {3, 3}}) {
    const auto layer = GroupedConvLayer::full(kh, kw, 5, 6);
    const auto w = random_blocks<double>(layer, rng);
    const auto x = oracle::random_tensor<double>(Shape{2, 5, 7, 6}, rng);
    const auto y = oracle::from_tensor(conv(x, layer, w));
    const auto ref =
        oracle::full_conv(oracle::from_tensor(x), oracle::from_tensor(w[0]));
    EXPECT_LT(oracle::max_abs_diff(y, ref), 1e-12) << kh << "x" << kw;
  }
}

TEST(GroupedConv, IdentityKernelReturnsInput) {
  const auto layer = GroupedConvLayer::uniform(1, 1, {2, 2});
  std::vector<Tensor> w(2, Tensor(Shape{2, 2, 1, 1}));
  for (auto &b : w)
    b.at(0, 0, 0, 0) = b.at(1, 1, 0, 0) = 1.f;
  std::mt19937_64 rng(9);
  const auto x = oracle::random_tensor<float>(Shape{2, 4, 5, 5}, rng);
  EXPECT_EQ(conv(x, layer, w), x);
}

TEST(GroupedConv, BlockDiagonalOracleSmallCase) {
  std::mt19937_64 rng(10);
  const auto layer = GroupedConvLayer::uniform(3, 3, {2, 2});
  const auto w = random_blocks<float>(layer, rng);
  const auto x = oracle::random_tensor<float>(Shape{1, 4, 5, 5}, rng);
  const auto ref = oracle::full_conv(
      oracle::from_tensor(x), oracle::block_diagonal(layer.in_sizes, layer.out_sizes, w));
  EXPECT_LT(oracle::max_abs_diff(oracle::from_tensor(conv(x, layer, w)), ref), 1e-6);
}

TEST(GroupedConv, BlockDiagonalOracleRandomizedProperty) {
  std::mt19937_64 rng(11);
  const std::vector<std::pair<int, int>> kernels{{1, 1}, {1, 3}, {3, 1}, {5, 5}};
  std::uniform_int_distribution<int> gsize(1, 4), gcount(1, 5), spatial(1, 7);
  for (int trial = 0; trial < 40; ++trial) {
    const auto [kh, kw] = kernels[trial % kernels.size()];
    std::vector<int> in, out;
    for (int g = gcount(rng); g > 0; --g) {
      in.push_back(gsize(rng));
      out.push_back(trial % 2 ? in.back() : gsize(rng));
    }
    const GroupedConvLayer layer{kh, kw, in, out};
    const auto w = random_blocks<double>(layer, rng);
    const auto x = oracle::random_tensor<double>(
        Shape{2, std::size_t(layer.in_channels()), std::size_t(spatial(rng)),
              std::size_t(spatial(rng))},
        rng);
    const auto ref = oracle::full_conv(oracle::from_tensor(x),
                                       oracle::block_diagonal(in, out, w));
    ASSERT_LT(oracle::max_abs_diff(oracle::from_tensor(conv(x, layer, w)), ref), 1e-10)
        << "trial " << trial;
  }
}

TEST(GroupedConv, PermutingGroupsPermutesOutput) {
  std::mt19937_64 rng(12);
  const GroupedConvLayer layer{1, 3, {3, 1, 2}, {2, 2, 1}};
  const auto w = random_blocks<double>(layer, rng);
  const auto x = oracle::random_tensor<double>(Shape{1, 6, 4, 4}, rng);
  const std::vector<std::size_t> perm{2, 0, 1};

  GroupedConvLayer pl{1, 3, {}, {}};
  std::vector<TensorD> pw;
  TensorD px(x.shape());
  std::vector<std::size_t> in_off{0, 3, 4}, out_off{0, 2, 4};
  std::size_t ci = 0;
  for (std::size_t g : perm) {
    pl.in_sizes.push_back(layer.in_sizes[g]);
    pl.out_sizes.push_back(layer.out_sizes[g]);
    pw.push_back(w[g]);
    for (int c = 0; c < layer.in_sizes[g]; ++c, ++ci)
      std::copy_n(x.channel(0, in_off[g] + c), 16, px.channel(0, ci));
  }
  const TensorD y = conv(x, layer, w);
  const TensorD py = conv(px, pl, pw);
  std::size_t co = 0;
  for (std::size_t g : perm)
    for (int c = 0; c < layer.out_sizes[g]; ++c, ++co)
      for (std::size_t i = 0; i < 16; ++i)
        ASSERT_EQ(py.channel(0, co)[i], y.channel(0, out_off[g] + c)[i]);
}

TEST(GroupedConv, Errors) {
  std::mt19937_64 rng(13);
  const auto layer = GroupedConvLayer::uniform(1, 3, {2, 2});
  const auto w = random_blocks<float>(layer, rng);
  EXPECT_THROW(conv(Tensor(Shape{1, 5, 4, 4}), layer, w), ShapeError);
  const GroupedConvLayer empty{1, 3, {2, 0}, {2, 0}};
  EXPECT_THROW(empty.validate(), InvalidLayerError);
  EXPECT_THROW(conv(Tensor(Shape{1, 2, 4, 4}), empty, w), InvalidLayerError);
  const GroupedConvLayer even{2, 2, {4}, {4}};
  EXPECT_THROW(even.validate(), InvalidLayerError);
  const GroupedConvLayer ragged{1, 1, {2, 2}, {4}};
  EXPECT_THROW(ragged.validate(), InvalidLayerError);
  auto bad_w = w;
  bad_w[1] = Tensor(Shape{2, 2, 3, 1});
  EXPECT_THROW(conv(Tensor(Shape{1, 4, 4, 4}), layer, bad_w), ShapeError);
}

TEST(GroupedConv, WeightCountLaw) {
  const std::vector<int> g{64, 32, 16, 8, 4, 2, 1, 1};
  const auto layer = GroupedConvLayer::uniform(1, 3, g);
  EXPECT_EQ(layer.weight_count(), 16386u);
  long long s = 0;
  for (int v : g)
    s += v * v;
  EXPECT_EQ(layer.weight_count(), std::size_t(3 * s));
  const GroupedConvLayer mixed{5, 5, {3, 1}, {2, 6}};
  EXPECT_EQ(mixed.weight_count(), std::size_t(25 * (3 * 2 + 1 * 6)));
}

TEST(GroupedConv, OneChannelGroupsSupported) {
  std::mt19937_64 rng(14);
  const auto layer = GroupedConvLayer::uniform(3, 1, {1, 1, 1});
  const auto w = random_blocks<double>(layer, rng);
  const auto x = oracle::random_tensor<double>(Shape{1, 3, 4, 3}, rng);
  const auto ref = oracle::full_conv(oracle::from_tensor(x),
                                     oracle::block_diagonal(layer.in_sizes, layer.out_sizes, w));
  EXPECT_LT(oracle::max_abs_diff(oracle::from_tensor(conv(x, layer, w)), ref), 1e-12);
}

TEST(FactorizedConv, MatchesComposedOracleAndPreservesShape) {
  std::mt19937_64 rng(15);
  const std::vector<int> g{4, 2, 1, 1};
  const auto row = GroupedConvLayer::uniform(1, 3, g);
  const auto col = GroupedConvLayer::uniform(3, 1, g);
  ParamStore<double> p;
  const auto rw = random_blocks<double>(row, rng);
  const auto cw = random_blocks<double>(col, rng);
  for (std::size_t i = 0; i < g.size(); ++i) {
    p.add("r" + std::to_string(i), rw[i]);
    p.add("c" + std::to_string(i), cw[i]);
  }
  const auto x = oracle::random_tensor<double>(Shape{2, 8, 6, 5}, rng);
  Tape<double> tape;
  std::vector<Var> rv, cv;
  for (std::size_t i = 0; i < g.size(); ++i) {
    rv.push_back(tape.param(p, "r" + std::to_string(i)));
    cv.push_back(tape.param(p, "c" + std::to_string(i)));
  }
  Var y = factorized_grouped_conv(tape, tape.constant(x), row, rv, col, cv);
  EXPECT_EQ(tape.value(y).shape(), x.shape());
  const auto ref = oracle::relu(oracle::full_conv(
      oracle::relu(oracle::full_conv(oracle::from_tensor(x),
                                     oracle::block_diagonal(g, g, rw))),
      oracle::block_diagonal(g, g, cw)));
  EXPECT_LT(oracle::max_abs_diff(oracle::from_tensor(tape.value(y)), ref), 1e-12);

  Tape<double> t0;
  std::vector<Var> rv0, cv0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    rv0.push_back(t0.param(p, "r" + std::to_string(i)));
    cv0.push_back(t0.param(p, "c" + std::to_string(i)));
  }
  Var z = factorized_grouped_conv(t0, t0.constant(TensorD(x.shape())), row, rv0, col, cv0);
  for (double v : t0.value(z).vec())
    ASSERT_EQ(v, 0.0);
}

TEST(FactorizedConv, RejectsMismatchedHalves) {
  Tape<float> tape;
  Var x = tape.constant(Tensor(Shape{1, 4, 3, 3}));
  const auto row = GroupedConvLayer::uniform(1, 3, {2, 2});
  const auto col = GroupedConvLayer::uniform(3, 1, {3, 1});
  EXPECT_THROW(factorized_grouped_conv(tape, x, row, {}, col, {}), InvalidLayerError);
  const auto swapped = GroupedConvLayer::uniform(3, 1, {2, 2});
  EXPECT_THROW(factorized_grouped_conv(tape, x, swapped, {}, row, {}), InvalidLayerError);
}

TEST(FactorizedConv, SavesOneThirdOfFullKernel) {
  for (int c : {1, 16, 128}) {
    const auto f = GroupedConvLayer::full(1, 3, c, c).weight_count() +
                   GroupedConvLayer::full(3, 1, c, c).weight_count();
    const auto full = GroupedConvLayer::full(3, 3, c, c).weight_count();
    EXPECT_EQ(f, std::size_t(6 * c * c));
    EXPECT_EQ(full, std::size_t(9 * c * c));
    EXPECT_EQ(3 * (full - f), full);
  }
}

TEST(MaxPool, Examples) {
  const Tensor one(Shape{1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  EXPECT_EQ(max_pool2_forward(one)[0], 4.f);
  const Tensor k(Shape{2, 3, 6, 4}, 2.5f);
  const Tensor y = max_pool2_forward(k);
  EXPECT_EQ(y.shape(), (Shape{2, 3, 3, 2}));
  for (float v : y.vec())
    EXPECT_EQ(v, 2.5f);
  EXPECT_THROW(max_pool2_forward(Tensor(Shape{1, 1, 3, 4})), ShapeError);
  EXPECT_THROW(max_pool2_forward(Tensor(Shape{1, 1, 4, 5})), ShapeError);
}

TEST(MaxPool, MatchesNaiveOracle) {
  std::mt19937_64 rng(16);
  const auto x = oracle::random_tensor<float>(Shape{1, 1, 8, 8}, rng);
  const auto ref = oracle::max_pool2(oracle::from_tensor(x));
  EXPECT_EQ(oracle::max_abs_diff(oracle::from_tensor(max_pool2_forward(x)), ref), 0.0);
}

TEST(MaxPool, GradientGoesToFirstMaximumOnTies) {
  ParamStore<float> p;
  p.add("x", Tensor(Shape{1, 1, 2, 2}, std::vector<float>{1, 5, 5, 5}));
  Tape<float> tape;
  tape.backward(sum(tape, max_pool2(tape, tape.param(p, "x"))));
  EXPECT_EQ(p.grad("x").vec(), (std::vector<float>{0, 1, 0, 0}));
}

TEST(GlobalAvgPool, Examples) {
  EXPECT_EQ(global_avg_pool_forward(Tensor(Shape{2, 3, 5, 7}, 1.5f)),
            Tensor(Shape{2, 3, 1, 1}, 1.5f));
  std::mt19937_64 rng(17);
  const auto x1 = oracle::random_tensor<float>(Shape{2, 3, 1, 1}, rng);
  EXPECT_EQ(global_avg_pool_forward(x1), x1);
  const auto x = oracle::random_tensor<float>(Shape{2, 4, 8, 8}, rng);
  EXPECT_LT(oracle::max_abs_diff(oracle::from_tensor(global_avg_pool_forward(x)),
                                 oracle::mean_pool(oracle::from_tensor(x))),
            1e-6);
}

TEST(GlobalAvgPool, BackwardSpreadsUniformly) {
  ParamStore<double> p;
  p.add("x", TensorD(Shape{1, 2, 2, 3}, 0.0));
  Tape<double> tape;
  tape.backward(sum(tape, global_avg_pool(tape, tape.param(p, "x"))));
  for (double g : p.grad("x").vec())
    EXPECT_DOUBLE_EQ(g, 1.0 / 6.0);
}

TEST(SoftmaxCrossEntropy, UniformLogitsGiveLogK) {
  const Tensor z(Shape{3, 10, 1, 1}, 0.7f);
  const std::vector<int> labels{0, 4, 9};
  EXPECT_NEAR(softmax_cross_entropy_forward(z, std::span<const int>(labels)),
              std::log(10.0), 1e-6);
  EXPECT_NEAR(std::log(10.0), 2.302585, 1e-6);
}

TEST(SoftmaxCrossEntropy, SaturatesAndIsStable) {
  TensorD z(Shape{1, 4, 1, 1}, 0.0);
  z[2] = 1000.0; // overflows exp without max subtraction
  const std::vector<int> right{2}, wrong{0};
  EXPECT_LT(softmax_cross_entropy_forward(z, std::span<const int>(right)), 1e-12);
  EXPECT_NEAR(softmax_cross_entropy_forward(z, std::span<const int>(wrong)), 1000.0, 1e-9);
}

TEST(SoftmaxCrossEntropy, GradientIsSoftmaxMinusOnehotOverN) {
  std::mt19937_64 rng(18);
  ParamStore<double> p;
  p.add("z", oracle::random_tensor<double>(Shape{2, 3, 1, 1}, rng, -2, 2));
  const std::vector<int> labels{2, 0};
  Tape<double> tape;
  tape.backward(softmax_cross_entropy(tape, tape.param(p, "z"), labels));
  const auto &z = p.value("z");
  for (std::size_t n = 0; n < 2; ++n) {
    double s = 0;
    for (std::size_t k = 0; k < 3; ++k)
      s += std::exp(z[n * 3 + k]);
    for (std::size_t k = 0; k < 3; ++k) {
      const double expect =
          (std::exp(z[n * 3 + k]) / s - (int(k) == labels[n] ? 1.0 : 0.0)) / 2.0;
      EXPECT_NEAR(p.grad("z")[n * 3 + k], expect, 1e-14);
    }
  }
}

TEST(SoftmaxCrossEntropy, LabelErrors) {
  const Tensor z(Shape{2, 10, 1, 1});
  const std::vector<int> out_of_range{0, 10}, negative{-1, 0}, short_list{0};
  EXPECT_THROW(softmax_cross_entropy_forward(z, std::span<const int>(out_of_range)), DataError);
  EXPECT_THROW(softmax_cross_entropy_forward(z, std::span<const int>(negative)), DataError);
  EXPECT_THROW(softmax_cross_entropy_forward(z, std::span<const int>(short_list)), DataError);
  EXPECT_THROW(softmax_cross_entropy_forward(Tensor(Shape{2, 10, 2, 1}),
                                             std::span<const int>(std::vector<int>{0, 1})),
               ShapeError);
}
