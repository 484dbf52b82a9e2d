#include "kfusion/diff.hpp"

#include <cmath>
#include <vector>

#include "kfusion/errors.hpp"
#include "kfusion/ops.hpp"

namespace kfusion {

NamedTensors evaluate(const Graph& g, const NamedTensors& inputs) {
  for (const auto& [name, t] : inputs) {
    if (!t.all_finite()) {
      throw NonFiniteError("evaluate: input '" + name + "' contains NaN or Inf");
    }
  }
  return g(inputs);
}

NamedTensors gradient(const Graph& g, const NamedTensors& inputs,
                      const std::string& output, const Tensor& seed) {
  NamedTensors outputs = g(inputs);
  auto it = outputs.find(output);
  if (it == outputs.end()) {
    throw ValidationError("gradient: graph has no output named '" + output + "'");
  }
  backward(it->second, seed);
  NamedTensors grads;
  for (const auto& [name, t] : inputs) {
    if (t.requires_grad()) {
      grads.emplace(name, Tensor::from_values(t.shape(), t.grad()));
    }
  }
  return grads;
}

namespace {

double seeded_scalar(const Tensor& out) {
  double acc = 0.0;
  for (double v : out.values()) acc += v;
  return acc;
}

}  // namespace

double finite_difference_check(const std::function<Tensor()>& forward,
                               std::span<const Tensor> watched, double eps) {
  if (eps <= 0.0) throw ValidationError("finite_difference_check: eps must be positive");
  Tensor out = forward();
  if (!out.all_finite()) {
    throw NonFiniteError("finite_difference_check: non-finite forward output");
  }
  backward(out);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(watched.size());
  for (const Tensor& t : watched) analytic.push_back(t.grad());

  double worst = 0.0;
  for (std::size_t wi = 0; wi < watched.size(); ++wi) {
    // Leaf values are perturbed in place; forward() re-reads them.
    auto& vals = const_cast<Tensor&>(watched[wi]).values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + eps;
      const double up = seeded_scalar(forward());
      vals[i] = saved - eps;
      const double dn = seeded_scalar(forward());
      vals[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(dn)) {
        throw NonFiniteError("finite_difference_check: non-finite intermediate");
      }
      const double numeric = (up - dn) / (2.0 * eps);
      const double a = analytic[wi][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
  }
  return worst;
}

double finite_difference_check(const Graph& g, const NamedTensors& inputs,
                               const std::string& output, double eps) {
  std::vector<Tensor> watched;
  for (const auto& [name, t] : inputs) {
    if (t.requires_grad()) watched.push_back(t);
  }
  auto forward = [&g, &inputs, &output]() -> Tensor {
    NamedTensors outs = g(inputs);
    auto it = outs.find(output);
    if (it == outs.end()) {
      throw ValidationError("finite_difference_check: no output named '" + output + "'");
    }
    return it->second;
  };
  return finite_difference_check(forward, watched, eps);
}

}  // namespace kfusion
