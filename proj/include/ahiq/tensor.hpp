// Copyright 2026 The AHIQ Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense row-major tensor with reverse-mode differentiation.
//
// Every operation that sees a grad-requiring input records a Node holding
// its parents and a backward closure. GradTape linearises the graph reachable
// from a scalar loss and replays the closures in reverse topological order.
// Graphs are owned by the tensors that reference them: dropping the loss
// releases every intermediate buffer.

#pragma once

#include <algorithm>
#include <concepts>
#include <memory>
#include <span>
#include <string_view>
#include <unordered_set>
#include <utility>

#include "ahiq/core.hpp"

namespace ahiq {

template <typename T>
concept Real = std::same_as<T, float> || std::same_as<T, double>;

namespace detail {
inline thread_local bool grad_mode_enabled = true;
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_enabled; }

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_enabled) {
    detail::grad_mode_enabled = false;
  }
  ~NoGradGuard() { detail::grad_mode_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <Real T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <Real T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    for (auto d : shape) {
      if (d == 0) {
        throw DimensionError("tensor extents must be positive, got " +
                             shape_str(shape));
      }
    }
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("shape " + shape_str(shape) + " needs " +
                           std::to_string(shape_numel(shape)) +
                           " values, got " + std::to_string(data.size()));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }
  static Tensor ones(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(1), requires_grad);
  }
  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
  }
  static Tensor scalar(T value, bool requires_grad = false) {
    return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  // In-place access for leaves (optimizer updates, initialisation).
  std::span<T> mutable_data() { return node_->data; }
  std::vector<T> to_vector() const { return node_->data; }

  T item() const {
    if (numel() != 1) {
      throw ContractError("item() on tensor of shape " + shape_str(shape()));
    }
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  // Copy of the values, disconnected from any graph.
  Tensor detach() const { return Tensor(shape(), node_->data, false); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

  static Tensor from_node(std::shared_ptr<Node<T>> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Builds the result of an operation. The backward closure is retained only
// when recording is enabled and some input needs a gradient.
template <Real T>
Tensor<T> make_result(Shape shape, std::vector<T> data,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::string_view op,
                      std::function<void(Node<T>&)> backward) {
  Tensor<T> out(std::move(shape), std::move(data));
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto* in : inputs) any = any || in->requires_grad();
  if (!any) return out;
  auto* node = out.node();
  node->requires_grad = true;
  node->op = op;
  for (const auto* in : inputs) node->parents.push_back(in->node_ptr());
  node->backward = std::move(backward);
  return out;
}

template <Real T>
Tensor<T> make_result(Shape shape, std::vector<T> data,
                      const std::vector<Tensor<T>>& inputs, std::string_view op,
                      std::function<void(Node<T>&)> backward) {
  Tensor<T> out(std::move(shape), std::move(data));
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto* node = out.node();
  node->requires_grad = true;
  node->op = op;
  for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
  node->backward = std::move(backward);
  return out;
}

// Ordered record of the operations reachable from a root, parents first.
template <Real T>
class GradTape {
 public:
  explicit GradTape(const Tensor<T>& root) : root_(root.node_ptr()) {
    if (!root_ || !root_->requires_grad) {
      throw ContractError("loss is not connected to any grad-requiring input");
    }
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{root_.get(), 0}};
    seen.insert(root_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node<T>* parent = node->parents[next++].get();
        if (parent->requires_grad && seen.insert(parent).second) {
          stack.emplace_back(parent, 0);
        }
      } else {
        order_.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::size_t size() const { return order_.size(); }
  std::span<Node<T>* const> nodes() const { return order_; }

  // Seeds d(root)/d(root) = 1 and propagates. Leaf gradients accumulate
  // across calls; intermediate buffers are released afterwards.
  void backward() {
    if (!root_) throw ContractError("backward on a cleared tape");
    if (root_->data.size() != 1) {
      throw ContractError("backward needs a scalar loss, got shape " +
                          shape_str(root_->shape));
    }
    for (auto* node : order_) {
      if (!node->is_leaf()) node->grad.clear();
    }
    root_->grad_buffer()[0] += T(1);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      Node<T>* node = *it;
      if (node->is_leaf() || node->grad.empty()) continue;
      node->backward(*node);
    }
    for (auto* node : order_) {
      if (!node->is_leaf()) std::vector<T>().swap(node->grad);
    }
  }

  void clear() {
    order_.clear();
    root_.reset();
  }

 private:
  std::shared_ptr<Node<T>> root_;
  std::vector<Node<T>*> order_;
};

template <Real T>
void backward(const Tensor<T>& loss) {
  if (loss.defined() && loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        shape_str(loss.shape()));
  }
  GradTape<T>(loss).backward();
}

namespace detail {
// Gradient buffer of parent i, or nullptr when that parent needs none.
template <Real T>
T* parent_grad(Node<T>& node, std::size_t i) {
  auto& p = *node.parents[i];
  return p.requires_grad ? p.grad_buffer().data() : nullptr;
}
}  // namespace detail

}  // namespace ahiq
