#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace ssdg {

std::string shape_str(const std::vector<int>& shape);
size_t shape_numel(const std::vector<int>& shape);

namespace autograd {
bool grad_enabled();
void set_grad_enabled(bool on);

// RAII scope that disables graph recording (inference mode).
struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};
}  // namespace autograd

namespace detail {

template <typename T>
struct TensorNode {
  std::vector<int> shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  size_t numel() const { return data.size(); }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }

  void accumulate_grad(const T* g, size_t n) {
    ensure_grad();
    for (size_t i = 0; i < n; ++i) grad[i] += g[i];
  }
};

}  // namespace detail

// N-dimensional array with a recorded computation graph. Value type over a
// shared node: copies alias the same storage, as the training loops hand
// tensors around freely.
template <typename T>
class TensorT {
 public:
  using Node = detail::TensorNode<T>;

  TensorT() = default;

  explicit TensorT(std::vector<int> shape, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->shape = std::move(shape);
    node_->data.assign(shape_numel(node_->shape), T(0));
    node_->requires_grad = requires_grad;
  }

  static TensorT zeros(std::vector<int> shape, bool requires_grad = false) {
    return TensorT(std::move(shape), requires_grad);
  }

  static TensorT full(std::vector<int> shape, T value, bool requires_grad = false) {
    TensorT t(std::move(shape), requires_grad);
    for (auto& v : t.node_->data) v = value;
    return t;
  }

  static TensorT ones(std::vector<int> shape, bool requires_grad = false) {
    return full(std::move(shape), T(1), requires_grad);
  }

  static TensorT from_data(std::vector<int> shape, std::vector<T> data,
                           bool requires_grad = false) {
    if (shape_numel(shape) != data.size())
      throw std::invalid_argument("tensor: data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    TensorT t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->data = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static TensorT scalar(T value, bool requires_grad = false) {
    return from_data({1}, {value}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  size_t numel() const { return node_->numel(); }

  std::span<T> data() { return {node_->data.data(), node_->data.size()}; }
  std::span<const T> data() const { return {node_->data.data(), node_->data.size()}; }

  bool requires_grad() const { return node_->requires_grad; }

  void set_requires_grad(bool on) {
    if (on && node_->backward_fn)
      throw std::logic_error("set_requires_grad: only valid on leaf tensors");
    node_->requires_grad = on;
  }

  bool has_grad() const { return !node_->grad.empty(); }

  std::span<T> grad() {
    node_->ensure_grad();
    return {node_->grad.data(), node_->grad.size()};
  }

  std::span<const T> grad() const {
    node_->ensure_grad();
    return {node_->grad.data(), node_->grad.size()};
  }

  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.assign(node_->data.size(), T(0));
  }

  T item() const {
    if (numel() != 1)
      throw std::logic_error("item: tensor has shape " + shape_str(node_->shape));
    return node_->data[0];
  }

  // Copy of the values with no graph attached.
  TensorT detach() const {
    TensorT t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = node_->shape;
    t.node_->data = node_->data;
    return t;
  }

  bool is_leaf() const { return node_->backward_fn == nullptr; }

  // Reverse pass from a scalar. Gradients accumulate additively into every
  // requires_grad ancestor; each node's backward_fn runs exactly once.
  void backward() const {
    if (numel() != 1)
      throw std::logic_error("backward: expected scalar loss, got shape " +
                             shape_str(node_->shape));
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    topo_visit(node_.get(), visited, order);
    // Intermediate grads are scratch for this pass; only leaves accumulate
    // across passes.
    for (Node* n : order)
      if (n->backward_fn && !n->grad.empty()) n->grad.assign(n->data.size(), T(0));
    node_->ensure_grad();
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
  }

  std::shared_ptr<Node> node() const { return node_; }

  // Builds an op result: records parents and the pull-back only when grad
  // mode is on and some parent needs gradients.
  static TensorT make_op(std::vector<int> shape, std::vector<T> data,
                         std::vector<TensorT> parents,
                         std::function<void(Node&)> backward_fn) {
    TensorT out = from_data(std::move(shape), std::move(data));
    bool needs = false;
    if (autograd::grad_enabled())
      for (const auto& p : parents) needs = needs || p.node_->requires_grad;
    if (needs) {
      out.node_->requires_grad = true;
      out.node_->parents.reserve(parents.size());
      for (auto& p : parents) out.node_->parents.push_back(p.node_);
      out.node_->backward_fn = std::move(backward_fn);
    }
    return out;
  }

 private:
  static void topo_visit(Node* n, std::unordered_set<Node*>& visited,
                         std::vector<Node*>& order) {
    // Iterative DFS; graphs can be thousands of nodes deep over an epoch.
    struct Frame {
      Node* node;
      size_t next_parent;
    };
    std::vector<Frame> stack;
    if (visited.insert(n).second) stack.push_back({n, 0});
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.node->parents.size()) {
        Node* p = f.node->parents[f.next_parent++].get();
        if (visited.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(f.node);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Node> node_;
};

using Tensor = TensorT<float>;

}  // namespace ssdg
