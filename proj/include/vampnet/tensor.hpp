#pragma once

// Dense double-precision tensors with reverse-mode differentiation.
//
// A Tensor is a cheap shared handle onto a node of the computation graph.
// Operations that receive at least one input with requires_grad() record
// their inputs and an adjoint closure; backward() orders the reachable nodes
// topologically (the ComputationTrace), replays the adjoints once each and
// then releases the graph.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vampnet/error.hpp"

namespace vampnet {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

/// Gradient buffer of an op input, or nullptr when it does not take part
/// in differentiation.
inline double* grad_ptr(const std::shared_ptr<Node>& n) {
  return n->requires_grad && n->grad.size() == n->data.size() ? n->grad.data() : nullptr;
}

}  // namespace detail

/// Disables graph recording for its lifetime (inference, metric passes).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled()) { detail::grad_enabled() = false; }
  ~NoGradGuard() { detail::grad_enabled() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    for (auto d : shape)
      if (d == 0) throw DimensionError("zero-sized dimension in shape " + shape_str(shape));
    if (shape.empty()) shape = {1};
    if (numel(shape) != data.size())
      throw DimensionError("shape " + shape_str(shape) + " does not match " +
                           std::to_string(data.size()) + " values");
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }
  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) { return Tensor({1}, {v}, requires_grad); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  const std::vector<double>& values() const { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool r) { node_->requires_grad = r; }
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  double item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }
  double operator[](std::size_t flat) const { return node_->data[flat]; }

  /// Copy of the values without any graph attachment.
  Tensor detach() const { return Tensor(shape(), node_->data, false); }

  /// Shared-handle identity, used for parameter bookkeeping.
  const detail::Node* id() const { return node_.get(); }

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  friend Tensor make_op(Shape, std::vector<double>, std::vector<Tensor>, std::function<void(detail::Node&)>,
                        const char*);
  std::shared_ptr<detail::Node> node_;
};

/// Builds the result node of a primitive. The adjoint closure receives the
/// result node; its inputs sit in node.inputs in the order given here.
inline Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                      std::function<void(detail::Node&)> backward, const char* name) {
  Tensor out(std::move(shape), std::move(data), false);
  bool needs = false;
  if (detail::grad_enabled())
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    auto& n = *out.node_;
    n.requires_grad = true;
    n.is_leaf = false;
    n.op = name;
    n.inputs.reserve(inputs.size());
    for (auto& in : inputs) n.inputs.push_back(in.node());
    n.backward = std::move(backward);
  }
  return out;
}

/// Topologically ordered view of the graph reachable from one output.
class ComputationTrace {
 public:
  explicit ComputationTrace(const Tensor& root) {
    if (!root.requires_grad()) return;
    std::unordered_set<const detail::Node*> seen;
    // Iterative post-order DFS; each node is appended after all its inputs.
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        detail::Node* child = node->inputs[next++].get();
        if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      } else {
        order_.push_back(node);
        stack.pop_back();
      }
    }
  }

  /// Nodes in topological order: inputs before the nodes consuming them.
  const std::vector<detail::Node*>& order() const { return order_; }

 private:
  std::vector<detail::Node*> order_;
};

/// Accumulates d(loss)/d(leaf) into every reachable leaf with requires_grad.
/// The intermediate graph is released afterwards; leaves keep their grads.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;
  ComputationTrace trace(loss);
  const auto& order = trace.order();
  for (auto* n : order)
    if (!n->is_leaf) n->grad.assign(n->data.size(), 0.0);
  auto root = loss.node();
  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->is_leaf) continue;
    for (auto& in : n->inputs)
      if (in->requires_grad) in->ensure_grad();
    n->backward(*n);
  }
  for (auto* n : order) {
    if (n->is_leaf) continue;
    n->inputs.clear();
    n->backward = nullptr;
    n->requires_grad = false;
    n->is_leaf = true;
    n->grad.clear();
  }
}

}  // namespace vampnet
