#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace life::nn {

using Index = Eigen::Index;

struct Shape {
  Index n = 1, c = 1, h = 1, w = 1;

  Index numel() const { return n * c * h * w; }
  Index plane() const { return h * w; }
  friend bool operator==(const Shape&, const Shape&) = default;
  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w);
  }
};

template <typename Scalar>
using Buffer = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct Node {
  Shape shape;
  Buffer<Scalar> value;
  Buffer<Scalar> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward;

  Buffer<Scalar>& grad_buffer() {
    if (grad.size() != value.size()) grad = Buffer<Scalar>::Zero(value.size());
    return grad;
  }
};

namespace detail {

inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

/// Optional fingerprint of every non-smooth branch decision (ReLU masks,
/// max-pool winners, L1 signs) taken during a forward pass. Finite-difference
/// checks compare fingerprints to skip probes that straddle a kink.
struct KinkTrace {
  bool active = false;
  std::uint64_t hash = 1469598103934665603ULL;
  void mix(std::uint64_t v) {
    hash ^= v + 0x9E3779B97F4A7C15ULL + (hash << 6) + (hash >> 2);
  }
};

inline KinkTrace& kink_trace() {
  thread_local KinkTrace trace;
  return trace;
}

}  // namespace detail

/// Disables graph construction in the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled()) { detail::grad_enabled() = false; }
  ~NoGradGuard() { detail::grad_enabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename Scalar>
class BasicTensor {
 public:
  using NodePtr = std::shared_ptr<Node<Scalar>>;

  BasicTensor() = default;
  explicit BasicTensor(NodePtr node) : node_(std::move(node)) {}

  static BasicTensor zeros(Shape shape, bool requires_grad = false) {
    auto node = std::make_shared<Node<Scalar>>();
    node->shape = shape;
    node->value = Buffer<Scalar>::Zero(shape.numel());
    node->requires_grad = requires_grad;
    return BasicTensor(std::move(node));
  }

  static BasicTensor from(Shape shape, Buffer<Scalar> values, bool requires_grad = false) {
    if (values.size() != shape.numel()) {
      throw std::invalid_argument("tensor value count does not match shape " + shape.str());
    }
    auto node = std::make_shared<Node<Scalar>>();
    node->shape = shape;
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return BasicTensor(std::move(node));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  Buffer<Scalar>& value() { return node_->value; }
  const Buffer<Scalar>& value() const { return node_->value; }
  Buffer<Scalar>& grad() { return node_->grad_buffer(); }
  const Buffer<Scalar>& grad() const { return node_->grad_buffer(); }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  Scalar item() const {
    if (node_->value.size() != 1) throw std::logic_error("item() on a non-scalar tensor");
    return node_->value[0];
  }
  const NodePtr& node() const { return node_; }

  void zero_grad() { node_->grad.resize(0); }

  /// Reverse-mode sweep from this scalar.
  void backward() const {
    if (node_->value.size() != 1) throw std::logic_error("backward() needs a scalar output");
    std::vector<Node<Scalar>*> order;
    std::unordered_set<Node<Scalar>*> seen;
    std::vector<std::pair<Node<Scalar>*, bool>> stack{{node_.get(), false}};
    while (!stack.empty()) {
      auto [n, expanded] = stack.back();
      stack.pop_back();
      if (expanded) {
        order.push_back(n);
        continue;
      }
      if (!seen.insert(n).second) continue;
      stack.push_back({n, true});
      for (const auto& p : n->parents) {
        if (p->requires_grad && !seen.contains(p.get())) stack.push_back({p.get(), false});
      }
    }
    node_->grad_buffer().setOnes();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<Scalar>* n = *it;
      if (n->backward && n->grad.size() == n->value.size()) n->backward();
    }
  }

 private:
  NodePtr node_;
};

using Tensor = BasicTensor<float>;

namespace detail {

/// Creates an op output. When gradients are enabled and any input requires
/// them, the output records its parents and a backward closure.
template <typename Scalar>
BasicTensor<Scalar> make_output(Shape shape, Buffer<Scalar> value,
                                std::initializer_list<BasicTensor<Scalar>> inputs) {
  auto node = std::make_shared<Node<Scalar>>();
  node->shape = shape;
  node->value = std::move(value);
#ifndef NDEBUG
  if (!node->value.allFinite()) throw std::runtime_error("non-finite tensor value produced");
#endif
  if (grad_enabled()) {
    for (const auto& in : inputs) {
      if (in.defined() && in.requires_grad()) {
        node->requires_grad = true;
        node->parents.push_back(in.node());
      }
    }
  }
  return BasicTensor<Scalar>(std::move(node));
}

}  // namespace detail

}  // namespace life::nn
