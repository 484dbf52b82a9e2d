#pragma once

#include <span>
#include <variant>
#include <vector>

#include "kfusion/rng.hpp"
#include "kfusion/tensor.hpp"

namespace kfusion {

// Uniform knot grid for order-k (degree-k) B-splines over [lo, hi] with
// `intervals` interior intervals, extended by k knots on each side.
// Knot count = intervals + 2k + 1; basis count = intervals + k.
struct SplineGrid {
  double lo = -1.0;
  double hi = 1.0;
  int intervals = 5;  // G
  int order = 3;      // k
  std::vector<double> knots;

  static SplineGrid make(double lo, double hi, int intervals, int order);
  int basis_count() const { return intervals + order; }

  // Writes all basis_count() values at x; zero outside each basis support.
  void basis(double x, std::span<double> out) const;
  // Also writes d/dx of every basis function.
  void basis_and_deriv(double x, std::span<double> out, std::span<double> deriv) const;
};

// Cox-de Boor evaluation of all basis functions at x.
std::vector<double> bspline_basis(double x, const SplineGrid& grid);

// One learnable univariate function: w_b * SiLU(x) + w_s * sum_i c_i B_i(x).
struct KanEdge {
  std::vector<double> coeff;  // basis_count() entries
  double w_base = 1.0;
  double w_spline = 1.0;
};

double edge_eval(double x, const KanEdge& edge, const SplineGrid& grid);

// in_dim -> out_dim map applied independently at every (batch, channel)
// position along the feature axis. Edge parameters are packed:
//   coeff (out, in, basis), w_base (1, out, in), w_spline (1, out, in).
struct KanLayer {
  int in_dim = 0;
  int out_dim = 0;
  SplineGrid grid;
  Tensor coeff;
  Tensor w_base;
  Tensor w_spline;
};

KanLayer make_kan_layer(int in_dim, int out_dim, const SplineGrid& grid, Rng& rng);
KanEdge get_edge(const KanLayer& layer, int out_index, int in_index);

// (B,C,in_dim) -> (B,C,out_dim); differentiable in x and all parameters.
Tensor kan_layer_forward(const Tensor& x, const KanLayer& layer);

struct KanNetwork {
  std::vector<KanLayer> layers;
};

KanNetwork make_kan_network(std::span<const int> dims, const SplineGrid& grid, Rng& rng);
Tensor network_forward(const Tensor& x, const KanNetwork& net);

// Linear / SiLU / linear ... stack with the same shape contract, used to swap
// the fusion head for an MLP.
struct MlpNetwork {
  std::vector<Tensor> weights;  // (1, in, out)
  std::vector<Tensor> biases;   // (1, 1, out)
};

MlpNetwork mlp_substitute(std::span<const int> dims, Rng& rng);
Tensor network_forward(const Tensor& x, const MlpNetwork& net);

using FusionHead = std::variant<KanNetwork, MlpNetwork>;
Tensor head_forward(const Tensor& x, const FusionHead& head);

}  // namespace kfusion
