#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace posepyr {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename T>
using ArrayX = Eigen::Array<T, Eigen::Dynamic, 1>;

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Thread-local switch controlling whether ops record the autograd tape.
class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set_enabled(bool on) { flag() = on; }

 private:
  static bool& flag() {
    thread_local bool on = true;
    return on;
  }
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  ArrayX<T> data;
  ArrayX<T> grad;  // empty until a backward pass reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  ArrayX<T>& ensure_grad() {
    if (grad.size() != data.size()) grad = ArrayX<T>::Zero(data.size());
    return grad;
  }
};

}  // namespace detail

/// Dense NCHW row-major array with reverse-mode differentiation.
///
/// A Tensor is a shared handle: copies alias the same storage and graph node,
/// which is how parameters are referenced from both the model layers and the
/// optimizer registry.
template <typename T>
class Tensor {
 public:
  using Scalar = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : node_(std::make_shared<detail::Node<T>>()) {
    for (Index e : shape) {
      if (e < 0) throw std::invalid_argument("Tensor: negative extent in shape " + shape_str(shape));
    }
    node_->data = ArrayX<T>::Zero(shape_numel(shape));
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, ArrayX<T> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node<T>>()) {
    if (values.size() != shape_numel(shape)) {
      throw std::invalid_argument("Tensor: buffer length " + std::to_string(values.size()) +
                                  " does not match shape " + shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) { return Tensor(std::move(shape), requires_grad); }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    t.data().setConstant(value);
    return t;
  }

  static Tensor scalar(T value, bool requires_grad = false) { return full({}, value, requires_grad); }

  bool defined() const { return static_cast<bool>(node_); }

  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  Index dim(std::size_t i) const { return node_->shape.at(i); }
  Index numel() const { return node_->data.size(); }

  ArrayX<T>& data() { return node_->data; }
  const ArrayX<T>& data() const { return node_->data; }
  T* ptr() { return node_->data.data(); }
  const T* ptr() const { return node_->data.data(); }

  T item() const {
    if (numel() != 1) throw std::invalid_argument("Tensor::item: tensor has " + std::to_string(numel()) + " elements");
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_->grad.size() == node_->data.size() && node_->data.size() > 0; }
  const ArrayX<T>& grad() const { return node_->grad; }
  ArrayX<T>& grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.resize(0); }

  /// Copy of the values with no graph attached.
  Tensor detach() const { return Tensor(shape(), data()); }

  /// Same storage viewed under another shape of equal element count; not recorded on the tape.
  Tensor reshaped_copy(Shape shape) const { return Tensor(std::move(shape), data()); }

  const NodePtr& node() const { return node_; }

  /// Accumulates d(this)/d(leaf) into the grad of every requires_grad tensor
  /// reachable from this scalar. Interior grads are recomputed per call, leaf
  /// grads accumulate across calls until cleared.
  void backward() const {
    if (numel() != 1) {
      throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_str(shape()));
    }
    if (!requires_grad()) throw std::invalid_argument("backward: loss does not require grad");

    std::vector<detail::Node<T>*> order;
    std::unordered_set<detail::Node<T>*> seen;
    std::vector<std::pair<detail::Node<T>*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        detail::Node<T>* p = n->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }

    for (detail::Node<T>* n : order) {
      if (n->backward_fn) {
        n->grad = ArrayX<T>::Zero(n->data.size());
      } else {
        n->ensure_grad();
      }
    }
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
  }

 private:
  NodePtr node_;
};

/// Builds an op result; attaches parents and the backward closure only when
/// grad mode is on and some input requires grad.
template <typename T>
Tensor<T> make_result(Shape shape, ArrayX<T> values, std::vector<Tensor<T>> inputs,
                      std::function<void(detail::Node<T>&)> backward_fn) {
  Tensor<T> out(std::move(shape), std::move(values));
  if (!GradMode::enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (auto& in : inputs) node.parents.push_back(in.node());
  node.backward_fn = std::move(backward_fn);
  return out;
}

}  // namespace posepyr
