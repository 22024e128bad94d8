#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hytip/nn/tensor.hpp"

namespace hytip::nn {

// Reverse-mode automatic differentiation over NCHW tensors. A graph is built
// implicitly while ops run; calling backward() on a scalar walks it in reverse
// topological order. Parameter leaves persist across graphs and accumulate
// their gradients until cleared.

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  bool retain_grad = false;  // keep an interior gradient after backward()

  Tensor<T>& grad_buffer() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    return grad;
  }
  bool has_grad() const { return grad.shape() == value.shape() && !grad.empty(); }
};

/// Thread-local switch that disables graph construction (inference paths).
class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set(bool on) { flag() = on; }

 private:
  static bool& flag() {
    thread_local bool on = true;
    return on;
  }
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  /// Constant leaf (never receives gradient).
  static Var constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }
  /// Leaf that collects a gradient; used for probes and gradient checks.
  static Var leaf(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Tensor<T>& grad() const { return node_->grad_buffer(); }
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }

  /// Keeps this node's gradient after backward() even if it is interior.
  void retain_grad() const {
    if (node_) node_->retain_grad = true;
  }

  /// Same value, cut from the graph.
  Var detach() const { return constant(node_->value); }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Wraps an op result; parents and the backward closure are dropped when no
/// input needs a gradient or grad mode is off.
template <class T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  bool needs = false;
  if (GradMode::enabled())
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (auto& in : inputs) n->parents.push_back(in.ptr());
    n->backward_fn = std::move(backward);
  }
  return Var<T>(std::move(n));
}

/// Runs reverse accumulation from a scalar root, seeding d(root)/d(root) = seed.
template <class T>
void backward(const Var<T>& root, T seed = T(1)) {
  if (!root.requires_grad()) return;
  if (root.value().size() != 1)
    throw std::invalid_argument("backward: root must be a scalar, got " + root.shape().str());

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->grad_buffer()[0] += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && n->has_grad()) n->backward_fn(*n);
  }
  // Interior gradients are no longer needed; release them so long unrolls stay
  // within memory. Leaves (no backward_fn) keep theirs.
  for (Node<T>* n : order)
    if (n->backward_fn && !n->retain_grad) n->grad = Tensor<T>();
}

/// Trainable tensor. Its leaf node persists, so gradients from several
/// backward passes accumulate until zero_grad().
template <class T>
class Param {
 public:
  Param() : node_(std::make_shared<Node<T>>()) { node_->requires_grad = true; }
  explicit Param(Tensor<T> init) : Param() { node_->value = std::move(init); }
  Param(const Param&) = delete;
  Param& operator=(const Param&) = delete;
  Param(Param&&) noexcept = default;
  Param& operator=(Param&&) noexcept = default;

  Tensor<T>& value() { return node_->value; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& grad() { return node_->grad_buffer(); }
  bool has_grad() const { return node_->has_grad(); }
  void zero_grad() { node_->grad = Tensor<T>(); }

  bool trainable() const { return node_->requires_grad; }
  void set_trainable(bool on) { node_->requires_grad = on; }

  Var<T> var() const { return Var<T>(node_); }

 private:
  std::shared_ptr<Node<T>> node_;
};

}  // namespace hytip::nn
