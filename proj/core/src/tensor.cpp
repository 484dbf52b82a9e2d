#include "kfusion/tensor.hpp"

#include <cmath>
#include <unordered_set>
#include <utility>

#include "kfusion/errors.hpp"

namespace kfusion {

std::string Shape3::str() const {
  return "(" + std::to_string(b) + "," + std::to_string(c) + "," + std::to_string(l) + ")";
}

Tensor Tensor::zeros(Shape3 s, bool requires_grad) {
  return full(s, 0.0, requires_grad);
}

Tensor Tensor::full(Shape3 s, double v, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->shape = s;
  n->value.assign(static_cast<std::size_t>(s.numel()), v);
  n->requires_grad = requires_grad;
  return from_node(std::move(n));
}

Tensor Tensor::from_values(Shape3 s, std::vector<double> v, bool requires_grad) {
  if (static_cast<std::int64_t>(v.size()) != s.numel()) {
    throw ShapeError("from_values: data length " + std::to_string(v.size()) +
                     " does not match shape " + s.str());
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = s;
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  return from_node(std::move(n));
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> n) {
  Tensor t;
  t.node_ = std::move(n);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : node_->value) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace {

// Iterative post-order DFS; parents are visited in stored order so the
// resulting topological order (and therefore float accumulation order) is
// identical across runs.
void topo_sort(detail::Node* root, std::vector<detail::Node*>& order) {
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next].get();
      ++next;
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

}  // namespace

void backward(const Tensor& output, const Tensor& seed) {
  if (!(seed.shape() == output.shape())) {
    throw ShapeError("backward: seed shape " + seed.shape().str() +
                     " does not match output shape " + output.shape().str());
  }
  std::vector<detail::Node*> order;
  topo_sort(output.node(), order);
  for (detail::Node* n : order) {
    n->grad.assign(n->value.size(), 0.0);
  }
  detail::Node* out = output.node();
  out->grad = seed.values();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backprop && n->requires_grad) n->backprop(*n);
  }
}

void backward(const Tensor& output) {
  backward(output, Tensor::full(output.shape(), 1.0));
}

}  // namespace kfusion
