#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>

#include "kfusion/tensor.hpp"

namespace kfusion {

// std::map keeps iteration (and float accumulation) order deterministic.
using NamedTensors = std::map<std::string, Tensor>;

// A graph is any composition of primitives from named inputs to named outputs.
using Graph = std::function<NamedTensors(const NamedTensors&)>;

// Runs the graph. Throws NonFiniteError if an input contains NaN/Inf;
// shape errors surface from the offending primitive.
NamedTensors evaluate(const Graph& g, const NamedTensors& inputs);

// d(seed . output) / d(input) for every input marked requires_grad.
NamedTensors gradient(const Graph& g, const NamedTensors& inputs,
                      const std::string& output, const Tensor& seed);

// Compares reverse-mode gradients of scalarize(forward()) against central
// finite differences, perturbing every entry of every watched tensor in
// place. Returns max over entries of
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// `forward` must re-read the watched tensors' current values on every call.
double finite_difference_check(const std::function<Tensor()>& forward,
                               std::span<const Tensor> watched, double eps);

// Same check phrased over a named graph: seed is all-ones over `output`.
double finite_difference_check(const Graph& g, const NamedTensors& inputs,
                               const std::string& output, double eps);

}  // namespace kfusion
