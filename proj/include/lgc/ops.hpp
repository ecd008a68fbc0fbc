// SPDX-License-Identifier: Apache-2.0
/**
 * @file   ops.hpp
 * @brief  Differentiable layers recorded on a Tape.
 */
#pragma once

#include <span>
#include <string>
#include <vector>

#include "lgc/autodiff.hpp"
#include "lgc/kernels.hpp"

namespace lgc {

template <typename T>
Var grouped_conv2d(Tape<T> &tape, Var x, const GroupedConvLayer &layer,
                   const std::vector<Var> &weights) {
  std::vector<BasicTensor<T>> w;
  w.reserve(weights.size());
  // Kernels take contiguous weight blocks; parameters are small next to
  // activations so the copy is cheap.
  for (Var v : weights)
    w.push_back(tape.value(v));
  BasicTensor<T> y = grouped_conv2d_forward<T>(
      tape.value(x), layer, std::span<const BasicTensor<T>>(w));
  std::vector<std::size_t> inputs{x.id};
  for (Var v : weights)
    inputs.push_back(v.id);
  const std::string name = "conv" + std::to_string(layer.kh) + "x" +
                           std::to_string(layer.kw) + "/g" +
                           std::to_string(layer.groups());
  return tape.push(
      name, std::move(y), std::move(inputs),
      [layer, w = std::move(w)](Tape<T> &t, std::size_t self) {
        const std::size_t xid = t.input(self, 0);
        std::vector<BasicTensor<T>> dw;
        dw.reserve(layer.groups());
        for (std::size_t g = 0; g < layer.groups(); ++g)
          dw.emplace_back(layer.weight_shape(g));
        grouped_conv2d_backward<T>(t.value(xid), layer,
                                   std::span<const BasicTensor<T>>(w),
                                   t.grad(self), &t.grad(xid),
                                   std::span<BasicTensor<T>>(dw));
        for (std::size_t g = 0; g < layer.groups(); ++g) {
          auto &dst = t.grad(t.input(self, g + 1));
          for (std::size_t k = 0; k < dst.size(); ++k)
            dst[k] += dw[g][k];
        }
      });
}

template <typename T> Var relu(Tape<T> &tape, Var x) {
  const auto &xv = tape.value(x);
  if (tape.tracking_pattern()) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < xv.size(); ++i)
      h = (h ^ static_cast<std::uint64_t>(xv[i] > T(0))) * 1099511628211ULL;
    tape.mix_pattern(h);
  }
  return tape.push("relu", relu_forward(xv), {x.id},
                   [](Tape<T> &t, std::size_t self) {
                     const std::size_t xid = t.input(self, 0);
                     relu_backward(t.value(xid), t.grad(self), t.grad(xid));
                   });
}

/// Shortcut join; the upstream gradient passes unchanged to both inputs.
template <typename T> Var add(Tape<T> &tape, Var a, Var b) {
  return tape.push("add", add_forward(tape.value(a), tape.value(b)),
                   {a.id, b.id}, [](Tape<T> &t, std::size_t self) {
                     for (std::size_t k = 0; k < 2; ++k) {
                       auto &dst = t.grad(t.input(self, k));
                       const auto &up = t.grad(self);
                       for (std::size_t i = 0; i < dst.size(); ++i)
                         dst[i] += up[i];
                     }
                   });
}

template <typename T> Var mul(Tape<T> &tape, Var a, Var b) {
  const auto &av = tape.value(a);
  const auto &bv = tape.value(b);
  require_same_shape(av, bv, "mul");
  BasicTensor<T> y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = av[i] * bv[i];
  return tape.push("mul", std::move(y), {a.id, b.id},
                   [](Tape<T> &t, std::size_t self) {
                     const std::size_t ia = t.input(self, 0);
                     const std::size_t ib = t.input(self, 1);
                     const auto &up = t.grad(self);
                     {
                       auto &da = t.grad(ia);
                       const auto &bv = t.value(ib);
                       for (std::size_t i = 0; i < da.size(); ++i)
                         da[i] += up[i] * bv[i];
                     }
                     auto &db = t.grad(ib);
                     const auto &av = t.value(ia);
                     for (std::size_t i = 0; i < db.size(); ++i)
                       db[i] += up[i] * av[i];
                   });
}

/// Sum of all elements as a 1x1x1x1 tensor.
template <typename T> Var sum(Tape<T> &tape, Var x) {
  const auto &xv = tape.value(x);
  T s = T(0);
  for (std::size_t i = 0; i < xv.size(); ++i)
    s += xv[i];
  return tape.push("sum", BasicTensor<T>(Shape{1, 1, 1, 1}, s), {x.id},
                   [](Tape<T> &t, std::size_t self) {
                     const T up = t.grad(self)[0];
                     auto &dst = t.grad(t.input(self, 0));
                     for (std::size_t i = 0; i < dst.size(); ++i)
                       dst[i] += up;
                   });
}

template <typename T> Var max_pool2(Tape<T> &tape, Var x) {
  std::vector<std::size_t> argmax;
  BasicTensor<T> y = max_pool2_forward(tape.value(x), &argmax);
  if (tape.tracking_pattern()) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t a : argmax)
      h = (h ^ a) * 1099511628211ULL;
    tape.mix_pattern(h);
  }
  return tape.push("max_pool2", std::move(y), {x.id},
                   [argmax = std::move(argmax)](Tape<T> &t, std::size_t self) {
                     max_pool2_backward(argmax, t.grad(self),
                                        t.grad(t.input(self, 0)));
                   });
}

template <typename T> Var global_avg_pool(Tape<T> &tape, Var x) {
  return tape.push("global_avg_pool", global_avg_pool_forward(tape.value(x)),
                   {x.id}, [](Tape<T> &t, std::size_t self) {
                     global_avg_pool_backward(t.grad(self),
                                              t.grad(t.input(self, 0)));
                   });
}

/// Mean cross-entropy of softmax(logits) against `labels`, as a scalar node.
template <typename T>
Var softmax_cross_entropy(Tape<T> &tape, Var logits, std::vector<int> labels) {
  const T loss = softmax_cross_entropy_forward(
      tape.value(logits), std::span<const int>(labels));
  return tape.push("softmax_cross_entropy",
                   BasicTensor<T>(Shape{1, 1, 1, 1}, loss), {logits.id},
                   [labels = std::move(labels)](Tape<T> &t, std::size_t self) {
                     const std::size_t lid = t.input(self, 0);
                     softmax_cross_entropy_backward(
                         t.value(lid), std::span<const int>(labels),
                         t.grad(self)[0], t.grad(lid));
                   });
}

/// relu(conv_mx1(relu(conv_1xm(x)))) with shared group arrays.
template <typename T>
Var factorized_grouped_conv(Tape<T> &tape, Var x,
                            const GroupedConvLayer &row_layer,
                            const std::vector<Var> &row_weights,
                            const GroupedConvLayer &col_layer,
                            const std::vector<Var> &col_weights) {
  if (row_layer.in_sizes != col_layer.in_sizes ||
      row_layer.out_sizes != col_layer.out_sizes)
    throw InvalidLayerError("factorized conv: 1xm and mx1 halves must share "
                            "group arrays");
  if (row_layer.kh != 1 || col_layer.kw != 1 || row_layer.kw != col_layer.kh)
    throw InvalidLayerError("factorized conv: expected 1xm followed by mx1");
  Var h = relu(tape, grouped_conv2d(tape, x, row_layer, row_weights));
  return relu(tape, grouped_conv2d(tape, h, col_layer, col_weights));
}

} // namespace lgc
