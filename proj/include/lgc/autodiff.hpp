// SPDX-License-Identifier: Apache-2.0
/**
 * @file   autodiff.hpp
 * @brief  Named parameter registry and a reverse-mode tape.
 *
 * Nodes are appended in execution order, so a node can only reference
 * earlier nodes and reverse index order is a reverse topological order.
 * backward() visits every node reachable from the loss exactly once and
 * accumulates gradients by summation over all paths.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "lgc/error.hpp"
#include "lgc/tensor.hpp"

namespace lgc {

template <typename T> class ParamStore {
public:
  struct Entry {
    std::string name;
    BasicTensor<T> value;
    BasicTensor<T> grad;
  };

  /// Registers a parameter; names are unique and keep insertion order.
  BasicTensor<T> &add(const std::string &name, BasicTensor<T> value) {
    if (index_.count(name))
      throw Error("duplicate parameter '" + name + "'");
    index_[name] = entries_.size();
    BasicTensor<T> grad(value.shape());
    entries_.push_back(
        std::make_unique<Entry>(Entry{name, std::move(value), std::move(grad)}));
    return entries_.back()->value;
  }

  bool contains(const std::string &name) const { return index_.count(name); }
  std::size_t size() const { return entries_.size(); }

  Entry &entry(std::size_t i) { return *entries_[i]; }
  const Entry &entry(std::size_t i) const { return *entries_[i]; }
  Entry &entry(const std::string &name) { return *entries_[find(name)]; }
  const Entry &entry(const std::string &name) const {
    return *entries_[find(name)];
  }
  BasicTensor<T> &value(const std::string &name) { return entry(name).value; }
  const BasicTensor<T> &value(const std::string &name) const {
    return entry(name).value;
  }
  BasicTensor<T> &grad(const std::string &name) { return entry(name).grad; }

  void zero_grad() {
    for (auto &e : entries_)
      e->grad.fill(T(0));
  }

  /// Total number of scalar parameters.
  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto &e : entries_)
      n += e->value.size();
    return n;
  }

  template <typename U> ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto &e : entries_)
      out.add(e->name, e->value.template cast<U>());
    return out;
  }

  template <typename F> void for_each(F &&f) {
    for (auto &e : entries_)
      f(*e);
  }
  template <typename F> void for_each(F &&f) const {
    for (const auto &e : entries_)
      f(static_cast<const Entry &>(*e));
  }

private:
  std::size_t find(const std::string &name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw Error("unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<std::unique_ptr<Entry>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Handle to a tape node.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

template <typename T> class Tape {
public:
  using Backward = std::function<void(Tape &, std::size_t self)>;

  struct Node {
    std::string op;
    BasicTensor<T> value;
    const BasicTensor<T> *external = nullptr; // parameter leaves
    BasicTensor<T> *param_grad = nullptr;
    std::vector<std::size_t> inputs;
    Backward backward;
    BasicTensor<T> grad;
    bool has_grad = false;
  };

  Var constant(BasicTensor<T> value, std::string name = "constant") {
    Node n;
    n.op = std::move(name);
    n.value = std::move(value);
    return append(std::move(n));
  }

  /// Leaf reading a parameter; backward() adds its gradient into the store.
  Var param(ParamStore<T> &store, const std::string &name) {
    auto &e = store.entry(name);
    Node n;
    n.op = "param:" + name;
    n.external = &e.value;
    n.param_grad = &e.grad;
    return append(std::move(n));
  }

  /// Appends an op node. Non-finite outputs raise NumericError naming it.
  Var push(std::string op, BasicTensor<T> value,
           std::vector<std::size_t> inputs, Backward backward) {
    if (!value.all_finite())
      throw NumericError("non-finite value produced by node " +
                         std::to_string(nodes_.size()) + " (" + op + ")");
    Node n;
    n.op = std::move(op);
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.backward = std::move(backward);
    return append(std::move(n));
  }

  const BasicTensor<T> &value(Var v) const { return value(v.id); }
  const BasicTensor<T> &value(std::size_t id) const {
    const Node &n = nodes_.at(id);
    return n.external ? *n.external : n.value;
  }
  const std::string &op(std::size_t id) const { return nodes_.at(id).op; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient buffer of a node, allocated as zeros on first use.
  BasicTensor<T> &grad(std::size_t id) {
    Node &n = nodes_.at(id);
    if (!n.has_grad) {
      n.grad = BasicTensor<T>(value(id).shape());
      n.has_grad = true;
    }
    return n.grad;
  }
  BasicTensor<T> &grad(Var v) { return grad(v.id); }
  bool has_grad(Var v) const { return nodes_.at(v.id).has_grad; }

  /// Seeds d(loss)/d(loss) = 1 and runs every backward rule once.
  void backward(Var loss) {
    if (value(loss).size() != 1)
      throw ShapeError("backward: loss must be a scalar, got " +
                       to_string(value(loss).shape()));
    if (!value(loss).all_finite())
      throw NumericError("backward: loss is not finite");
    std::vector<char> reachable(nodes_.size(), 0);
    reachable[loss.id] = 1;
    for (std::size_t i = loss.id + 1; i-- > 0;)
      if (reachable[i])
        for (std::size_t in : nodes_[i].inputs)
          reachable[in] = 1;

    grad(loss)[0] = T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      if (!reachable[i])
        continue;
      Node &n = nodes_[i];
      if (!n.has_grad)
        continue; // no path carried gradient here
      if (!n.grad.all_finite())
        throw NumericError("non-finite gradient at node " + std::to_string(i) +
                           " (" + n.op + ")");
      if (n.backward)
        n.backward(*this, i);
      if (n.param_grad) {
        auto &dst = *n.param_grad;
        for (std::size_t k = 0; k < dst.size(); ++k)
          dst[k] += n.grad[k];
      }
    }
  }

  /// Hash of discrete activation decisions (ReLU masks, pooling argmax),
  /// recorded only when tracking is on. Two forward passes with equal
  /// patterns lie on the same smooth piece of the network function.
  void track_pattern(bool on) { track_pattern_ = on; }
  bool tracking_pattern() const { return track_pattern_; }
  std::uint64_t pattern() const { return pattern_; }
  void mix_pattern(std::uint64_t v) {
    pattern_ ^= v + 0x9e3779b97f4a7c15ULL + (pattern_ << 6) + (pattern_ >> 2);
  }

  std::size_t input(std::size_t id, std::size_t k) const {
    return nodes_.at(id).inputs.at(k);
  }

private:
  Var append(Node n) {
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  std::uint64_t pattern_ = 0;
  bool track_pattern_ = false;
};

} // namespace lgc
