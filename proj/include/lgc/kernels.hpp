// SPDX-License-Identifier: Apache-2.0
/**
 * @file   kernels.hpp
 * @brief  Forward and backward kernels on raw tensors. No autodiff here.
 *
 * Every reduction runs sequentially over its summed index so results are
 * bitwise reproducible. The GEMM vectorizes across output columns only.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "lgc/error.hpp"
#include "lgc/tensor.hpp"

namespace lgc {

namespace detail {

/// MR x (NV * lanes) register tile of C, k summed in order.
template <typename T, std::size_t MR, std::size_t NV>
inline void gemm_tile(std::size_t K, const T *A, std::size_t lda, const T *B,
                      std::size_t ldb, T *C, std::size_t ldc, bool accumulate) {
  typedef T V __attribute__((vector_size(64)));
  constexpr std::size_t L = 64 / sizeof(T);
  V acc[MR][NV];
  for (std::size_t r = 0; r < MR; ++r)
    for (std::size_t v = 0; v < NV; ++v) {
      if (accumulate)
        std::memcpy(&acc[r][v], C + r * ldc + v * L, sizeof(V));
      else
        acc[r][v] = V{};
    }
  for (std::size_t k = 0; k < K; ++k) {
    V b[NV];
    for (std::size_t v = 0; v < NV; ++v)
      std::memcpy(&b[v], B + k * ldb + v * L, sizeof(V));
    for (std::size_t r = 0; r < MR; ++r) {
      const T w = A[r * lda + k];
      for (std::size_t v = 0; v < NV; ++v)
        acc[r][v] += w * b[v];
    }
  }
  for (std::size_t r = 0; r < MR; ++r)
    for (std::size_t v = 0; v < NV; ++v)
      std::memcpy(C + r * ldc + v * L, &acc[r][v], sizeof(V));
}

template <typename T, std::size_t NV>
inline void gemm_column_block(std::size_t M, std::size_t K, const T *A,
                              std::size_t lda, const T *B, std::size_t ldb,
                              T *C, std::size_t ldc, bool accumulate) {
  constexpr std::size_t MR = 6;
  std::size_t i = 0;
  for (; i + MR <= M; i += MR)
    gemm_tile<T, MR, NV>(K, A + i * lda, lda, B, ldb, C + i * ldc, ldc,
                         accumulate);
  for (; i < M; ++i)
    gemm_tile<T, 1, NV>(K, A + i * lda, lda, B, ldb, C + i * ldc, ldc,
                        accumulate);
}

} // namespace detail

/// C (M x N) = [C +] A (M x K) * B (K x N); all row-major.
/// Each C element is summed over k = 0..K-1 in order.
template <typename T>
void gemm(std::size_t M, std::size_t N, std::size_t K, const T *A,
          std::size_t lda, const T *B, std::size_t ldb, T *C, std::size_t ldc,
          bool accumulate) {
  constexpr std::size_t L = 64 / sizeof(T);
  std::size_t j = 0;
  for (; j + 2 * L <= N; j += 2 * L)
    detail::gemm_column_block<T, 2>(M, K, A, lda, B + j, ldb, C + j, ldc,
                                    accumulate);
  for (; j + L <= N; j += L)
    detail::gemm_column_block<T, 1>(M, K, A, lda, B + j, ldb, C + j, ldc,
                                    accumulate);
  if (j == N)
    return;
  for (std::size_t i = 0; i < M; ++i) {
    T *c = C + i * ldc;
    const T *a = A + i * lda;
    if (!accumulate)
      std::fill(c + j, c + N, T(0));
    for (std::size_t k = 0; k < K; ++k) {
      const T w = a[k];
      const T *b = B + k * ldb;
      for (std::size_t jj = j; jj < N; ++jj)
        c[jj] += w * b[jj];
    }
  }
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T *src, T *dst) {
  constexpr std::size_t B = 16;
  for (std::size_t r0 = 0; r0 < rows; r0 += B)
    for (std::size_t c0 = 0; c0 < cols; c0 += B) {
      const std::size_t r1 = std::min(rows, r0 + B);
      const std::size_t c1 = std::min(cols, c0 + B);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c)
          dst[c * rows + r] = src[r * cols + c];
    }
}

/// Grouped convolution geometry: stride 1, "same" zero padding, no bias.
/// Group i maps in_sizes[i] contiguous input channels to out_sizes[i]
/// contiguous output channels with a (out, in, kh, kw) weight block.
struct GroupedConvLayer {
  int kh = 1, kw = 1;
  std::vector<int> in_sizes;
  std::vector<int> out_sizes;

  std::size_t groups() const { return in_sizes.size(); }
  int in_channels() const {
    return std::accumulate(in_sizes.begin(), in_sizes.end(), 0);
  }
  int out_channels() const {
    return std::accumulate(out_sizes.begin(), out_sizes.end(), 0);
  }
  Shape weight_shape(std::size_t g) const {
    return {static_cast<std::size_t>(out_sizes[g]),
            static_cast<std::size_t>(in_sizes[g]),
            static_cast<std::size_t>(kh), static_cast<std::size_t>(kw)};
  }
  /// kh * kw * sum_i in_sizes[i] * out_sizes[i]
  std::size_t weight_count() const {
    std::size_t total = 0;
    for (std::size_t g = 0; g < groups(); ++g)
      total += weight_shape(g).numel();
    return total;
  }

  void validate() const {
    if (in_sizes.size() != out_sizes.size())
      throw InvalidLayerError("grouped conv: in/out group arrays differ in "
                              "length");
    if (in_sizes.empty())
      throw InvalidLayerError("grouped conv: no groups");
    for (std::size_t g = 0; g < groups(); ++g)
      if (in_sizes[g] <= 0 || out_sizes[g] <= 0)
        throw InvalidLayerError("grouped conv: empty group " +
                                std::to_string(g));
    if (kh <= 0 || kw <= 0 || kh % 2 == 0 || kw % 2 == 0)
      throw InvalidLayerError("grouped conv: kernel must be odd-sized for "
                              "same padding");
  }

  static GroupedConvLayer uniform(int kh, int kw, const std::vector<int> &g) {
    return {kh, kw, g, g};
  }
  static GroupedConvLayer full(int kh, int kw, int cin, int cout) {
    return {kh, kw, {cin}, {cout}};
  }
};

namespace detail {

/// col[(ci*kh + ky)*kw + kx][y*W + x] = x[ci][y + ky - ph][x + kx - pw]
template <typename T>
void im2col(const T *src, std::size_t channels, std::size_t H, std::size_t W,
            int kh, int kw, T *col) {
  const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  const std::size_t P = H * W;
  for (std::size_t ci = 0; ci < channels; ++ci) {
    const T *plane = src + ci * P;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T *row = col + ((ci * kh + ky) * kw + kx) * P;
        const int dy = ky - ph, dx = kx - pw;
        for (std::size_t y = 0; y < H; ++y) {
          T *out = row + y * W;
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(H)) {
            std::fill(out, out + W, T(0));
            continue;
          }
          const T *in = plane + sy * W;
          const long x_lo = std::max<long>(0, -dx);
          const long x_hi = std::min<long>(W, static_cast<long>(W) - dx);
          for (long x = 0; x < x_lo; ++x)
            out[x] = T(0);
          for (long x = x_lo; x < x_hi; ++x)
            out[x] = in[x + dx];
          for (long x = std::max(x_hi, x_lo); x < static_cast<long>(W); ++x)
            out[x] = T(0);
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters col rows back into dst (accumulating).
template <typename T>
void col2im_add(const T *col, std::size_t channels, std::size_t H,
                std::size_t W, int kh, int kw, T *dst) {
  const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  const std::size_t P = H * W;
  for (std::size_t ci = 0; ci < channels; ++ci) {
    T *plane = dst + ci * P;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const T *row = col + ((ci * kh + ky) * kw + kx) * P;
        const int dy = ky - ph, dx = kx - pw;
        for (std::size_t y = 0; y < H; ++y) {
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(H))
            continue;
          const T *in = row + y * W;
          T *out = plane + sy * W;
          const long x_lo = std::max<long>(0, -dx);
          const long x_hi = std::min<long>(W, static_cast<long>(W) - dx);
          for (long x = x_lo; x < x_hi; ++x)
            out[x + dx] += in[x];
        }
      }
    }
  }
}

} // namespace detail

template <typename T>
void check_conv_args(const BasicTensor<T> &x, const GroupedConvLayer &layer,
                     std::span<const BasicTensor<T>> weights) {
  layer.validate();
  if (x.shape().c != static_cast<std::size_t>(layer.in_channels()))
    throw ShapeError("grouped conv: input has " +
                     std::to_string(x.shape().c) +
                     " channels but groups sum to " +
                     std::to_string(layer.in_channels()));
  if (weights.size() != layer.groups())
    throw InvalidLayerError("grouped conv: expected " +
                            std::to_string(layer.groups()) +
                            " weight blocks, got " +
                            std::to_string(weights.size()));
  for (std::size_t g = 0; g < layer.groups(); ++g)
    if (weights[g].shape() != layer.weight_shape(g))
      throw ShapeError("grouped conv: weight block " + std::to_string(g) +
                       " has shape " + to_string(weights[g].shape()) +
                       ", expected " + to_string(layer.weight_shape(g)));
}

template <typename T>
BasicTensor<T> grouped_conv2d_forward(const BasicTensor<T> &x,
                                      const GroupedConvLayer &layer,
                                      std::span<const BasicTensor<T>> weights) {
  check_conv_args(x, layer, weights);
  const auto [N, C, H, W] = x.shape();
  const std::size_t P = H * W;
  BasicTensor<T> y(Shape{N, static_cast<std::size_t>(layer.out_channels()), H,
                         W});
  const bool pointwise = layer.kh == 1 && layer.kw == 1;
  std::vector<T> col;
  for (std::size_t n = 0; n < N; ++n) {
    std::size_t cin = 0, cout = 0;
    for (std::size_t g = 0; g < layer.groups(); ++g) {
      const std::size_t gi = layer.in_sizes[g], go = layer.out_sizes[g];
      const std::size_t K = gi * layer.kh * layer.kw;
      const T *src = x.channel(n, cin);
      if (!pointwise) {
        col.resize(K * P);
        detail::im2col(src, gi, H, W, layer.kh, layer.kw, col.data());
        src = col.data();
      }
      gemm<T>(go, P, K, weights[g].data(), K, src, P, y.channel(n, cout), P,
              false);
      cin += gi;
      cout += go;
    }
  }
  return y;
}

/// Accumulates into dx (when non-null) and into each dweights block.
template <typename T>
void grouped_conv2d_backward(const BasicTensor<T> &x,
                             const GroupedConvLayer &layer,
                             std::span<const BasicTensor<T>> weights,
                             const BasicTensor<T> &dy, BasicTensor<T> *dx,
                             std::span<BasicTensor<T>> dweights) {
  const auto [N, C, H, W] = x.shape();
  const std::size_t P = H * W;
  const bool pointwise = layer.kh == 1 && layer.kw == 1;
  std::vector<T> col, colT, wT, dcol;
  for (std::size_t n = 0; n < N; ++n) {
    std::size_t cin = 0, cout = 0;
    for (std::size_t g = 0; g < layer.groups(); ++g) {
      const std::size_t gi = layer.in_sizes[g], go = layer.out_sizes[g];
      const std::size_t K = gi * layer.kh * layer.kw;
      const T *src = x.channel(n, cin);
      const T *dout = dy.channel(n, cout);
      if (!dweights.empty()) {
        if (!pointwise) {
          col.resize(K * P);
          detail::im2col(src, gi, H, W, layer.kh, layer.kw, col.data());
        }
        colT.resize(P * K);
        transpose(K, P, pointwise ? src : col.data(), colT.data());
        gemm<T>(go, K, P, dout, P, colT.data(), K, dweights[g].data(), K,
                true);
      }
      if (dx) {
        wT.resize(K * go);
        transpose(go, K, weights[g].data(), wT.data());
        if (pointwise) {
          gemm<T>(K, P, go, wT.data(), go, dout, P, dx->channel(n, cin), P,
                  true);
        } else {
          dcol.resize(K * P);
          gemm<T>(K, P, go, wT.data(), go, dout, P, dcol.data(), P, false);
          detail::col2im_add(dcol.data(), gi, H, W, layer.kh, layer.kw,
                             dx->channel(n, cin));
        }
      }
      cin += gi;
      cout += go;
    }
  }
}

template <typename T> BasicTensor<T> relu_forward(const BasicTensor<T> &x) {
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

/// Subgradient at 0 is 0.
template <typename T>
void relu_backward(const BasicTensor<T> &x, const BasicTensor<T> &dy,
                   BasicTensor<T> &dx) {
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] > T(0))
      dx[i] += dy[i];
}

template <typename T>
BasicTensor<T> add_forward(const BasicTensor<T> &a, const BasicTensor<T> &b) {
  require_same_shape(a, b, "add");
  BasicTensor<T> y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i)
    y[i] = a[i] + b[i];
  return y;
}

/// 2x2 window, stride 2. `argmax` receives the flat input index chosen for
/// every output element (first occurrence in row-major window order on ties).
template <typename T>
BasicTensor<T> max_pool2_forward(const BasicTensor<T> &x,
                                 std::vector<std::size_t> *argmax = nullptr) {
  const auto [N, C, H, W] = x.shape();
  if (H % 2 != 0 || W % 2 != 0)
    throw ShapeError("max_pool2: spatial dims must be even, got " +
                     to_string(x.shape()));
  const std::size_t Ho = H / 2, Wo = W / 2;
  BasicTensor<T> y(Shape{N, C, Ho, Wo});
  if (argmax)
    argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const std::size_t base = nc * H * W;
    for (std::size_t yo = 0; yo < Ho; ++yo) {
      for (std::size_t xo = 0; xo < Wo; ++xo, ++o) {
        const std::size_t i00 = base + (2 * yo) * W + 2 * xo;
        const std::size_t cand[4] = {i00, i00 + 1, i00 + W, i00 + W + 1};
        std::size_t best = cand[0];
        for (int k = 1; k < 4; ++k)
          if (x[cand[k]] > x[best])
            best = cand[k];
        y[o] = x[best];
        if (argmax)
          (*argmax)[o] = best;
      }
    }
  }
  return y;
}

template <typename T>
void max_pool2_backward(const std::vector<std::size_t> &argmax,
                        const BasicTensor<T> &dy, BasicTensor<T> &dx) {
  for (std::size_t o = 0; o < dy.size(); ++o)
    dx[argmax[o]] += dy[o];
}

template <typename T>
BasicTensor<T> global_avg_pool_forward(const BasicTensor<T> &x) {
  const auto [N, C, H, W] = x.shape();
  if (H == 0 || W == 0)
    throw ShapeError("global_avg_pool: empty spatial extent");
  BasicTensor<T> y(Shape{N, C, 1, 1});
  const std::size_t P = H * W;
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    T s = T(0);
    const T *p = x.data() + nc * P;
    for (std::size_t i = 0; i < P; ++i)
      s += p[i];
    y[nc] = s / static_cast<T>(P);
  }
  return y;
}

template <typename T>
void global_avg_pool_backward(const BasicTensor<T> &dy, BasicTensor<T> &dx) {
  const std::size_t P = dx.shape().plane();
  const T scale = T(1) / static_cast<T>(P);
  for (std::size_t nc = 0; nc < dy.size(); ++nc) {
    const T g = dy[nc] * scale;
    T *p = dx.data() + nc * P;
    for (std::size_t i = 0; i < P; ++i)
      p[i] += g;
  }
}

template <typename T>
void check_labels(const BasicTensor<T> &logits,
                  std::span<const int> labels) {
  const auto &s = logits.shape();
  if (s.h != 1 || s.w != 1)
    throw ShapeError("softmax_cross_entropy: logits must be Nx K x1x1, got " +
                     to_string(s));
  if (labels.size() != s.n)
    throw DataError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                    " labels for batch of " + std::to_string(s.n));
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= s.c)
      throw DataError("softmax_cross_entropy: label " + std::to_string(l) +
                      " outside [0, " + std::to_string(s.c) + ")");
}

/// Row-wise softmax with max subtraction.
template <typename T> BasicTensor<T> softmax(const BasicTensor<T> &logits) {
  const std::size_t N = logits.shape().n, K = logits.shape().c;
  BasicTensor<T> p(logits.shape());
  for (std::size_t n = 0; n < N; ++n) {
    const T *z = logits.data() + n * K;
    T *q = p.data() + n * K;
    const T m = *std::max_element(z, z + K);
    T s = T(0);
    for (std::size_t k = 0; k < K; ++k) {
      q[k] = std::exp(z[k] - m);
      s += q[k];
    }
    for (std::size_t k = 0; k < K; ++k)
      q[k] /= s;
  }
  return p;
}

/// Mean over the batch of -log softmax(logits)[label].
template <typename T>
T softmax_cross_entropy_forward(const BasicTensor<T> &logits,
                                std::span<const int> labels) {
  check_labels(logits, labels);
  const std::size_t N = logits.shape().n, K = logits.shape().c;
  T total = T(0);
  for (std::size_t n = 0; n < N; ++n) {
    const T *z = logits.data() + n * K;
    const T m = *std::max_element(z, z + K);
    T s = T(0);
    for (std::size_t k = 0; k < K; ++k)
      s += std::exp(z[k] - m);
    total += std::log(s) + m - z[labels[n]];
  }
  return total / static_cast<T>(N);
}

/// d(loss)/d(logits) = upstream * (softmax - onehot) / N, accumulated.
template <typename T>
void softmax_cross_entropy_backward(const BasicTensor<T> &logits,
                                    std::span<const int> labels, T upstream,
                                    BasicTensor<T> &dlogits) {
  const std::size_t N = logits.shape().n, K = logits.shape().c;
  const BasicTensor<T> p = softmax(logits);
  const T scale = upstream / static_cast<T>(N);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t k = 0; k < K; ++k) {
      const T onehot = static_cast<std::size_t>(labels[n]) == k ? T(1) : T(0);
      dlogits[n * K + k] += (p[n * K + k] - onehot) * scale;
    }
}

} // namespace lgc
