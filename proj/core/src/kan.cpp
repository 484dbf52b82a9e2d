#include "kfusion/kan.hpp"

#include <cmath>
#include <memory>

#include "kfusion/errors.hpp"
#include "kfusion/ops.hpp"

namespace kfusion {

SplineGrid SplineGrid::make(double lo, double hi, int intervals, int order) {
  if (!(lo < hi) || intervals < 1 || order < 1) {
    throw ValidationError("SplineGrid: need lo < hi, intervals >= 1, order >= 1");
  }
  SplineGrid g;
  g.lo = lo;
  g.hi = hi;
  g.intervals = intervals;
  g.order = order;
  const double h = (hi - lo) / intervals;
  const int count = intervals + 2 * order + 1;
  g.knots.resize(count);
  for (int i = 0; i < count; ++i) g.knots[i] = lo + (i - order) * h;
  return g;
}

namespace {

// Cox-de Boor pyramid up to `degree`, over all spans of the knot vector.
void cox_de_boor(const std::vector<double>& t, double x, int degree,
                 std::vector<double>& work) {
  const int spans = static_cast<int>(t.size()) - 1;
  work.assign(spans, 0.0);
  for (int i = 0; i < spans; ++i) {
    work[i] = (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;
  }
  for (int d = 1; d <= degree; ++d) {
    for (int i = 0; i + d + 1 <= spans; ++i) {
      const double left = (x - t[i]) / (t[i + d] - t[i]);
      const double right = (t[i + d + 1] - x) / (t[i + d + 1] - t[i + 1]);
      work[i] = left * work[i] + right * work[i + 1];
    }
  }
}

}  // namespace

void SplineGrid::basis(double x, std::span<double> out) const {
  std::vector<double> work;
  cox_de_boor(knots, x, order, work);
  for (int i = 0; i < basis_count(); ++i) out[i] = work[i];
}

void SplineGrid::basis_and_deriv(double x, std::span<double> out, std::span<double> deriv) const {
  std::vector<double> work;
  cox_de_boor(knots, x, order - 1, work);
  const int nb = basis_count();
  // Derivative from the degree-(k-1) pyramid, then one more Cox-de Boor step.
  for (int i = 0; i < nb; ++i) {
    const double a = work[i] / (knots[i + order] - knots[i]);
    const double b = work[i + 1] / (knots[i + order + 1] - knots[i + 1]);
    deriv[i] = order * (a - b);
  }
  const int d = order;
  const int spans = static_cast<int>(knots.size()) - 1;
  std::vector<double> top(work);
  for (int i = 0; i + d + 1 <= spans; ++i) {
    const double left = (x - knots[i]) / (knots[i + d] - knots[i]);
    const double right = (knots[i + d + 1] - x) / (knots[i + d + 1] - knots[i + 1]);
    top[i] = left * work[i] + right * work[i + 1];
  }
  for (int i = 0; i < nb; ++i) out[i] = top[i];
}

std::vector<double> bspline_basis(double x, const SplineGrid& grid) {
  std::vector<double> out(grid.basis_count());
  grid.basis(x, out);
  return out;
}

namespace {

double silu_scalar(double v) {
  const double s = 1.0 / (1.0 + std::exp(-v));
  return v * s;
}

double silu_deriv(double v) {
  const double s = 1.0 / (1.0 + std::exp(-v));
  return s * (1.0 + v * (1.0 - s));
}

}  // namespace

double edge_eval(double x, const KanEdge& edge, const SplineGrid& grid) {
  std::vector<double> b(grid.basis_count());
  grid.basis(x, b);
  double spline = 0.0;
  for (int i = 0; i < grid.basis_count(); ++i) spline += edge.coeff[i] * b[i];
  return edge.w_base * silu_scalar(x) + edge.w_spline * spline;
}

KanLayer make_kan_layer(int in_dim, int out_dim, const SplineGrid& grid, Rng& rng) {
  KanLayer layer;
  layer.in_dim = in_dim;
  layer.out_dim = out_dim;
  layer.grid = grid;
  const int nb = grid.basis_count();
  const double sigma = 0.1 / std::sqrt(static_cast<double>(nb));
  std::vector<double> coeff(static_cast<std::size_t>(out_dim) * in_dim * nb);
  for (double& c : coeff) c = sigma * rng.normal();
  layer.coeff = Tensor::from_values(Shape3{out_dim, in_dim, nb}, std::move(coeff), true);
  layer.w_base = Tensor::full(Shape3{1, out_dim, in_dim}, 1.0, true);
  layer.w_spline = Tensor::full(Shape3{1, out_dim, in_dim}, 1.0, true);
  return layer;
}

KanEdge get_edge(const KanLayer& layer, int out_index, int in_index) {
  const int nb = layer.grid.basis_count();
  KanEdge e;
  e.coeff.resize(nb);
  const auto& cv = layer.coeff.values();
  const std::int64_t base = (static_cast<std::int64_t>(out_index) * layer.in_dim + in_index) * nb;
  for (int t = 0; t < nb; ++t) e.coeff[t] = cv[base + t];
  e.w_base = layer.w_base.values()[static_cast<std::size_t>(out_index) * layer.in_dim + in_index];
  e.w_spline = layer.w_spline.values()[static_cast<std::size_t>(out_index) * layer.in_dim + in_index];
  return e;
}

Tensor kan_layer_forward(const Tensor& x, const KanLayer& layer) {
  const Shape3 s = x.shape();
  if (s.l != layer.in_dim) {
    throw ShapeError("kan_layer: input feature dim " + std::to_string(s.l) +
                     " does not match layer in_dim " + std::to_string(layer.in_dim));
  }
  const int n = layer.in_dim, m = layer.out_dim, nb = layer.grid.basis_count();
  const int positions = s.b * s.c;

  auto node = std::make_shared<detail::Node>();
  node->shape = Shape3{s.b, s.c, m};
  node->value.assign(static_cast<std::size_t>(node->shape.numel()), 0.0);
  node->op = "kan_layer";
  node->parents = {x.node_ptr(), layer.coeff.node_ptr(), layer.w_base.node_ptr(),
                   layer.w_spline.node_ptr()};
  for (const auto& p : node->parents) {
    if (p->requires_grad) node->requires_grad = true;
  }

  // Basis values and derivatives are cached from the forward pass so the
  // backward sweep does not redo the Cox-de Boor recursion.
  struct Cache {
    std::vector<double> basis, dbasis, act, dact;
  };
  auto cache = std::make_shared<Cache>();
  cache->basis.resize(static_cast<std::size_t>(positions) * n * nb);
  cache->dbasis.resize(cache->basis.size());
  cache->act.resize(static_cast<std::size_t>(positions) * n);
  cache->dact.resize(cache->act.size());

  const auto& xv = x.values();
  const auto& cv = layer.coeff.values();
  const auto& wbv = layer.w_base.values();
  const auto& wsv = layer.w_spline.values();
  auto& ov = node->value;

  for (int p = 0; p < positions; ++p) {
    const double* xr = xv.data() + static_cast<std::int64_t>(p) * n;
    double* brow = cache->basis.data() + static_cast<std::int64_t>(p) * n * nb;
    double* drow = cache->dbasis.data() + static_cast<std::int64_t>(p) * n * nb;
    double* act = cache->act.data() + static_cast<std::int64_t>(p) * n;
    double* dact = cache->dact.data() + static_cast<std::int64_t>(p) * n;
    for (int i = 0; i < n; ++i) {
      layer.grid.basis_and_deriv(xr[i], std::span<double>(brow + i * nb, nb),
                                 std::span<double>(drow + i * nb, nb));
      act[i] = silu_scalar(xr[i]);
      dact[i] = silu_deriv(xr[i]);
    }
    double* orow = ov.data() + static_cast<std::int64_t>(p) * m;
    for (int j = 0; j < m; ++j) {
      const double* cj = cv.data() + static_cast<std::int64_t>(j) * n * nb;
      const double* wbj = wbv.data() + static_cast<std::int64_t>(j) * n;
      const double* wsj = wsv.data() + static_cast<std::int64_t>(j) * n;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        const double* bi = brow + i * nb;
        const double* ci = cj + static_cast<std::int64_t>(i) * nb;
        double spline = 0.0;
        for (int t = 0; t < nb; ++t) spline += ci[t] * bi[t];
        acc += wbj[i] * act[i] + wsj[i] * spline;
      }
      orow[j] = acc;
    }
  }

  const int nn = n, mm = m, nbb = nb, pos = positions;
  node->backprop = [cache, nn, mm, nbb, pos](detail::Node& self) {
    detail::Node& px = *self.parents[0];
    detail::Node& pc = *self.parents[1];
    detail::Node& pwb = *self.parents[2];
    detail::Node& pws = *self.parents[3];
    const bool need_x = px.requires_grad;
    const bool need_c = pc.requires_grad;
    const bool need_wb = pwb.requires_grad;
    const bool need_ws = pws.requires_grad;
    if (need_x) px.ensure_grad();
    if (need_c) pc.ensure_grad();
    if (need_wb) pwb.ensure_grad();
    if (need_ws) pws.ensure_grad();
    for (int p = 0; p < pos; ++p) {
      const double* g = self.grad.data() + static_cast<std::int64_t>(p) * mm;
      const double* brow = cache->basis.data() + static_cast<std::int64_t>(p) * nn * nbb;
      const double* drow = cache->dbasis.data() + static_cast<std::int64_t>(p) * nn * nbb;
      const double* act = cache->act.data() + static_cast<std::int64_t>(p) * nn;
      const double* dact = cache->dact.data() + static_cast<std::int64_t>(p) * nn;
      double* dx = need_x ? px.grad.data() + static_cast<std::int64_t>(p) * nn : nullptr;
      for (int j = 0; j < mm; ++j) {
        const double gj = g[j];
        if (gj == 0.0) continue;
        const double* cj = pc.value.data() + static_cast<std::int64_t>(j) * nn * nbb;
        const double* wbj = pwb.value.data() + static_cast<std::int64_t>(j) * nn;
        const double* wsj = pws.value.data() + static_cast<std::int64_t>(j) * nn;
        double* dcj = need_c ? pc.grad.data() + static_cast<std::int64_t>(j) * nn * nbb : nullptr;
        double* dwbj = need_wb ? pwb.grad.data() + static_cast<std::int64_t>(j) * nn : nullptr;
        double* dwsj = need_ws ? pws.grad.data() + static_cast<std::int64_t>(j) * nn : nullptr;
        for (int i = 0; i < nn; ++i) {
          const double* bi = brow + i * nbb;
          const double* di = drow + i * nbb;
          const double* ci = cj + static_cast<std::int64_t>(i) * nbb;
          double sval = 0.0, sder = 0.0;
          for (int t = 0; t < nbb; ++t) {
            sval += ci[t] * bi[t];
            sder += ci[t] * di[t];
          }
          if (need_c) {
            const double gws = gj * wsj[i];
            double* dci = dcj + static_cast<std::int64_t>(i) * nbb;
            for (int t = 0; t < nbb; ++t) dci[t] += gws * bi[t];
          }
          if (need_wb) dwbj[i] += gj * act[i];
          if (need_ws) dwsj[i] += gj * sval;
          if (need_x) dx[i] += gj * (wbj[i] * dact[i] + wsj[i] * sder);
        }
      }
    }
  };
  return Tensor::from_node(node);
}

KanNetwork make_kan_network(std::span<const int> dims, const SplineGrid& grid, Rng& rng) {
  if (dims.size() < 2) throw ValidationError("KanNetwork: need at least two dims");
  KanNetwork net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    net.layers.push_back(make_kan_layer(dims[i], dims[i + 1], grid, rng));
  }
  return net;
}

Tensor network_forward(const Tensor& x, const KanNetwork& net) {
  Tensor h = x;
  for (const KanLayer& layer : net.layers) h = kan_layer_forward(h, layer);
  return h;
}

MlpNetwork mlp_substitute(std::span<const int> dims, Rng& rng) {
  if (dims.size() < 2) throw ValidationError("mlp_substitute: need at least two dims");
  MlpNetwork net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const int in = dims[i], out = dims[i + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    std::vector<double> w(static_cast<std::size_t>(in) * out);
    for (double& v : w) v = rng.uniform(-limit, limit);
    net.weights.push_back(Tensor::from_values(Shape3{1, in, out}, std::move(w), true));
    net.biases.push_back(Tensor::zeros(Shape3{1, 1, out}, true));
  }
  return net;
}

Tensor network_forward(const Tensor& x, const MlpNetwork& net) {
  Tensor h = x;
  for (std::size_t i = 0; i < net.weights.size(); ++i) {
    h = matmul(h, net.weights[i]);
    const Shape3 hs = h.shape();
    h = add(h, broadcast_to(net.biases[i], hs));
    if (i + 1 < net.weights.size()) h = silu(h);
  }
  return h;
}

Tensor head_forward(const Tensor& x, const FusionHead& head) {
  return std::visit([&x](const auto& net) { return network_forward(x, net); }, head);
}

}  // namespace kfusion
