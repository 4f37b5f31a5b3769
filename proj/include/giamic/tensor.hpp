#pragma once

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a shared node. Leaves are either constants
// or parameters (requires_grad). Every op result is stamped with a global,
// monotonically increasing sequence number; backward() collects the reachable
// op nodes into a Tape ordered by that number and replays it in reverse.
//
// After backward() the intermediate nodes release their closures, so a graph
// can be differentiated once. Parameter gradients accumulate until zero_grad().

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "giamic/errors.hpp"

namespace giamic {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

inline std::atomic<std::uint64_t> g_op_sequence{0};
inline thread_local bool g_grad_enabled = true;

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  bool released = false;
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

}  // namespace detail

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::g_grad_enabled) { detail::g_grad_enabled = false; }
  ~NoGradGuard() { detail::g_grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  using Node = detail::Node<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<T> data) {
    return leaf(std::move(shape), std::move(data), false);
  }

  static Tensor parameter(Shape shape, std::vector<T> data) {
    return leaf(std::move(shape), std::move(data), true);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = giamic::numel(shape);
    return leaf(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor scalar(T v) { return constant({1, 1}, {v}); }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t rows() const { return node_->shape.at(0); }
  std::size_t cols() const { return rank() > 1 ? node_->shape[1] : 1; }
  bool is_scalar() const { return numel() == 1; }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }

  std::span<const T> data() const { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  T item() const {
    if (!is_scalar()) throw GraphError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
  }

  /// In-place access for leaves only (optimizer steps, finite differences).
  std::span<T> mutable_data() {
    if (!node_->is_leaf) throw GraphError("mutable_data() on a non-leaf tensor");
    return node_->value;
  }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }

  void zero_grad() {
    if (node_->requires_grad) node_->grad.assign(node_->value.size(), T(0));
  }

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& shared() const noexcept { return node_; }

 private:
  static Tensor leaf(Shape shape, std::vector<T> data, bool requires_grad) {
    if (giamic::numel(shape) != data.size()) {
      throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                           std::to_string(data.size()) + " values");
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    if (requires_grad) node->grad.assign(node->value.size(), T(0));
    return Tensor(std::move(node));
  }

  std::shared_ptr<Node> node_;
};

/// Builds the result node of an op. The backward closure receives the result
/// node and must accumulate into every parent that requires_grad.
template <typename T>
Tensor<T> make_op(const char* op, Shape shape, std::vector<T> value,
                  const std::vector<Tensor<T>>& inputs,
                  std::function<void(detail::Node<T>&)> backward_fn) {
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!std::isfinite(value[i])) {
      throw NumericalError(std::string("non-finite value produced by ") + op);
    }
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  node->is_leaf = false;
  node->seq = detail::g_op_sequence.fetch_add(1, std::memory_order_relaxed);
  bool needs = false;
  if (detail::g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.shared());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

/// Ordered record of the executed ops reachable from a loss.
template <typename T>
class Tape {
 public:
  using Node = detail::Node<T>;

  static Tape record(const Tensor<T>& loss) {
    Tape tape;
    if (!loss.requires_grad()) return tape;
    std::vector<Node*> stack{loss.node()};
    std::unordered_set<Node*> seen{loss.node()};
    while (!stack.empty()) {
      Node* n = stack.back();
      stack.pop_back();
      if (n->is_leaf) {
        tape.leaves_.push_back(n);
        continue;
      }
      if (n->released) throw GraphError("graph already differentiated; rebuild it first");
      tape.ops_.push_back(n);
      for (const auto& p : n->parents) {
        if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
      }
    }
    std::sort(tape.ops_.begin(), tape.ops_.end(),
              [](const Node* a, const Node* b) { return a->seq < b->seq; });
    return tape;
  }

  std::span<Node* const> ops() const { return ops_; }
  std::size_t size() const { return ops_.size(); }
  bool empty() const { return ops_.empty(); }

  /// Visits ops in exact reverse execution order.
  void run_backward() {
    for (Node* n : ops_) n->ensure_grad();
    for (Node* n : leaves_) n->ensure_grad();
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      Node* n = *it;
      if (n->backward_fn) n->backward_fn(*n);
    }
    for (Node* n : ops_) {
      n->released = true;
      n->backward_fn = nullptr;
      n->parents.clear();
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }

 private:
  std::vector<Node*> ops_;
  std::vector<Node*> leaves_;
};

/// Back-propagates d(loss)/d(leaf) into every reachable requires_grad leaf.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined()) throw GraphError("backward() on an undefined tensor");
  if (!loss.is_scalar()) {
    throw GraphError("backward() requires a scalar loss, got " + shape_str(loss.shape()));
  }
  if (loss.node()->released) throw GraphError("backward() called twice on the same graph");
  if (!loss.requires_grad()) return;
  if (loss.is_leaf()) {
    loss.node()->ensure_grad();
    loss.node()->grad[0] += T(1);
    return;
  }
  auto tape = Tape<T>::record(loss);
  loss.node()->ensure_grad();
  loss.node()->grad[0] = T(1);
  tape.run_backward();
}

}  // namespace giamic
