// Copyright 2026 The vidfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vidfuse/error.hpp"

namespace vidfuse {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents that require it.
  std::function<void(Node&)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major tensor with an optional reverse-mode graph attached.
///
/// Copies share storage: a Tensor is a handle. Values produced by operations
/// are never modified afterwards; only leaves (parameters, constants built by
/// hand) expose mutable storage.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() : node_(std::make_shared<detail::Node<T>>()) {}

  Tensor(Shape shape, std::vector<T> data) : node_(std::make_shared<detail::Node<T>>()) {
    if (shape_size(shape) != data.size()) {
      throw ShapeError("tensor: shape " + shape_string(shape) + " holds " + std::to_string(shape_size(shape)) +
                       " values, got " + std::to_string(data.size()));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
  }

  static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }

  static Tensor full(Shape shape, T value) {
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value));
  }

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  const Shape& shape() const noexcept { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const noexcept { return node_->shape.size(); }
  std::size_t size() const noexcept { return node_->data.size(); }

  std::span<const T> data() const noexcept { return node_->data; }
  const T& operator[](std::size_t i) const { return node_->data[i]; }

  /// Writable view of a leaf. Operation results are immutable.
  std::span<T> mutable_data() {
    if (node_->backward_fn) throw Error("tensor: cannot mutate the result of a recorded operation");
    return node_->data;
  }

  T item() const {
    if (size() != 1) throw ShapeError("item: tensor of shape " + shape_string(shape()) + " is not a scalar");
    return node_->data[0];
  }

  bool requires_grad() const noexcept { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on = true) {
    node_->requires_grad = on;
    return *this;
  }

  bool has_grad() const noexcept { return node_->grad.size() == node_->data.size() && !node_->data.empty(); }
  std::span<const T> grad() const noexcept { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.assign(node_->data.size(), T(0)); }

  /// Same values, no graph history.
  Tensor detach() const { return Tensor(node_->shape, node_->data); }

  Tensor clone() const {
    Tensor t(node_->shape, node_->data);
    t.node_->requires_grad = node_->requires_grad;
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(size());
    std::transform(node_->data.begin(), node_->data.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape(), std::move(out));
  }

  bool same_storage(const Tensor& other) const noexcept { return node_ == other.node_; }

  // Internal: used by operations to build graph nodes.
  const NodePtr& node() const noexcept { return node_; }
  static Tensor from_node(NodePtr node) { return Tensor(std::move(node)); }

 private:
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  NodePtr node_;
};

namespace detail {

/// Builds an operation result. The graph edge is recorded only when grad mode
/// is on and at least one input requires a gradient.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (grad_enabled()) {
    const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor<T>& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (auto& in : inputs) node->parents.push_back(in.node());
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor<T>::from_node(std::move(node));
}

}  // namespace detail

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
/// calls until `zero_grad`; the recorded graph is released afterwards, so a
/// second sweep over the same loss is an error.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1) throw ShapeError("backward: loss must be a scalar, got shape " + shape_string(loss.shape()));
  if (!std::isfinite(static_cast<double>(loss.item()))) throw NumericError("backward: loss is not finite");
  auto root = loss.node();
  if (root->consumed) throw Error("backward: graph already consumed by a previous backward call");
  if (!root->requires_grad) return;

  // Shared ownership keeps every node alive while edges are released below.
  std::vector<std::shared_ptr<detail::Node<T>>> order;
  std::unordered_set<detail::Node<T>*> visited;
  std::vector<std::pair<std::shared_ptr<detail::Node<T>>, std::size_t>> stack{{root, 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      std::shared_ptr<detail::Node<T>> parent = node->parents[next++];
      if (parent->consumed) throw Error("backward: graph shares nodes with an already-consumed graph");
      if (parent->requires_grad && !visited.count(parent.get())) {
        visited.insert(parent.get());
        stack.emplace_back(std::move(parent), 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node<T>& node = **it;
    if (!node.backward_fn) continue;
    node.ensure_grad();
    node.backward_fn(node);
    node.backward_fn = nullptr;
    node.parents.clear();
    node.grad.clear();
    node.grad.shrink_to_fit();
    node.consumed = true;
  }
}

}  // namespace vidfuse
