// Copyright (c) 2026 The marblevad Authors
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

// Reverse-mode autodiff core.
//
// A Tensor is a shared handle to a graph node. Ops build new nodes that keep
// their parents alive and carry a closure propagating the node's gradient
// into the parents. Tensor::backward() runs those closures in reverse
// topological order. Graph recording is skipped when no input requires
// gradients or inside a NoGradGuard scope.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace marblevad::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

class NoGradGuard {
 public:
  NoGradGuard() : prev_(std::exchange(detail::grad_mode(), false)) {}
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    if (data.size() != numel_of(shape)) {
      throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_string(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<T> d(numel_of(shape), T(0));
    return Tensor(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    std::vector<T> d(numel_of(shape), value);
    return Tensor(std::move(shape), std::move(d), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  std::vector<T>& vec() { return node_->data; }
  const std::vector<T>& vec() const { return node_->data; }
  T item() const {
    if (numel() != 1) throw std::logic_error("item() on non-scalar tensor");
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const T> grad() const { return node_->grad; }
  std::vector<T>& mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.assign(node_->data.size(), T(0)); }

  // Backpropagates from this tensor. With no seed the tensor must be a
  // scalar and is seeded with 1.
  void backward(std::span<const T> seed = {}) {
    auto& g = node_->ensure_grad();
    if (seed.empty()) {
      if (numel() != 1) {
        throw std::logic_error("backward() without seed needs a scalar, got " +
                               shape_string(shape()));
      }
      g[0] += T(1);
    } else {
      if (seed.size() != numel()) throw std::invalid_argument("backward seed size mismatch");
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
    }

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node<T>* p = n->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      if (n->backward_fn && n->grad.size() == n->data.size()) n->backward_fn(*n);
    }
  }

  // Drops graph links so intermediate buffers can be freed.
  Tensor detach() const {
    return Tensor(node_->shape, node_->data, false);
  }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

  // Creates an op output. Records parents and the backward closure only
  // when recording is enabled and some parent requires gradients.
  static Tensor from_op(Shape shape, std::vector<T> data,
                        std::vector<std::shared_ptr<Node<T>>> parents,
                        std::function<void(Node<T>&)> backward_fn) {
    Tensor out(std::move(shape), std::move(data), false);
    if (!grad_enabled()) return out;
    bool any = false;
    for (const auto& p : parents) any = any || p->requires_grad;
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->parents = std::move(parents);
    out.node_->backward_fn = std::move(backward_fn);
    return out;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

}  // namespace marblevad::nn
