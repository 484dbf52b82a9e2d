#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace kfusion {

// batch x channel x feature
struct Shape3 {
  int b = 0;
  int c = 0;
  int l = 0;

  bool operator==(const Shape3&) const = default;
  std::int64_t numel() const {
    return static_cast<std::int64_t>(b) * c * l;
  }
  std::string str() const;
};

namespace detail {

struct Node {
  Shape3 shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized on demand during backward
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Scatters this node's grad into the parents' grads.
  std::function<void(Node&)> backprop;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

// Dense double-precision array with reverse-mode gradient support. A Tensor
// is a cheap handle to a shared node; values are treated as immutable once
// the tensor participates in a graph. Leaf values may be rewritten in place
// through values() between graph builds (optimizer steps, finite-difference
// probes) because each forward pass re-reads them.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape3 s, bool requires_grad = false);
  static Tensor full(Shape3 s, double v, bool requires_grad = false);
  static Tensor from_values(Shape3 s, std::vector<double> v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape3& shape() const { return node_->shape; }
  std::int64_t numel() const { return node_->shape.numel(); }
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& values() { return node_->value; }

  double at(int b, int c, int l) const {
    const Shape3& s = node_->shape;
    return node_->value[(static_cast<std::int64_t>(b) * s.c + c) * s.l + l];
  }
  double& at(int b, int c, int l) {
    const Shape3& s = node_->shape;
    return node_->value[(static_cast<std::int64_t>(b) * s.c + c) * s.l + l];
  }

  // Valid after backward() has run over a graph containing this tensor.
  const std::vector<double>& grad() const { return node_->grad; }

  bool all_finite() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> n);

 private:
  std::shared_ptr<detail::Node> node_;
};

// Seeds `output` with `seed` (same shape) and accumulates gradients into every
// node reachable from it. Gradients of the reachable set are reset first, so
// repeated calls do not mix sweeps. Read results via Tensor::grad().
void backward(const Tensor& output, const Tensor& seed);

// backward() with a seed of ones.
void backward(const Tensor& output);

}  // namespace kfusion
