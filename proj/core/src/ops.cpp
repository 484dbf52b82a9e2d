#include "kfusion/ops.hpp"

#include <cmath>
#include <cstring>
#include <utility>
#include <vector>

#include "kfusion/errors.hpp"

namespace kfusion {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr make_node(Shape3 s, const char* op, std::vector<NodePtr> parents) {
  auto n = std::make_shared<Node>();
  n->shape = s;
  n->value.assign(static_cast<std::size_t>(s.numel()), 0.0);
  n->op = op;
  for (const auto& p : parents) {
    if (p->requires_grad) n->requires_grad = true;
  }
  n->parents = std::move(parents);
  return n;
}

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) {
    shape_fail(op, "operand shapes " + a.shape().str() + " and " + b.shape().str() + " differ");
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  NodePtr n = make_node(a.shape(), "add", {a.node_ptr(), b.node_ptr()});
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] + bv[i];
  n->backprop = [](Node& self) {
    for (int pi = 0; pi < 2; ++pi) {
      Node& p = *self.parents[pi];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    }
  };
  return Tensor::from_node(n);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  NodePtr n = make_node(a.shape(), "mul", {a.node_ptr(), b.node_ptr()});
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] * bv[i];
  n->backprop = [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
    }
  };
  return Tensor::from_node(n);
}

Tensor scale(const Tensor& x, double s) {
  NodePtr n = make_node(x.shape(), "scale", {x.node_ptr()});
  const auto& xv = x.values();
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = xv[i] * s;
  n->backprop = [s](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * s;
  };
  return Tensor::from_node(n);
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

namespace {

Tensor matmul_impl(const Tensor& a, const Tensor& w, bool transpose_w, const char* op) {
  const Shape3 as = a.shape();
  const Shape3 ws = w.shape();
  const int contract = transpose_w ? ws.l : ws.c;
  const int out_dim = transpose_w ? ws.c : ws.l;
  if (as.l != contract) {
    shape_fail(op, "inner dims differ: " + as.str() + " vs " + ws.str());
  }
  if (ws.b != 1 && ws.b != as.b) {
    shape_fail(op, "batch dims incompatible: " + as.str() + " vs " + ws.str());
  }
  const Shape3 os{as.b, as.c, out_dim};
  NodePtr n = make_node(os, op, {a.node_ptr(), w.node_ptr()});
  const auto& av = a.values();
  const auto& wv = w.values();
  auto& ov = n->value;
  const int L = as.l, M = out_dim, C = as.c;
  for (int b = 0; b < as.b; ++b) {
    const double* ab = av.data() + static_cast<std::int64_t>(b) * C * L;
    const double* wb = wv.data() + static_cast<std::int64_t>(ws.b == 1 ? 0 : b) * ws.c * ws.l;
    double* ob = ov.data() + static_cast<std::int64_t>(b) * C * M;
    if (!transpose_w) {
      // out[c,m] = sum_k a[c,k] * w[k,m]
      for (int c = 0; c < C; ++c) {
        double* orow = ob + static_cast<std::int64_t>(c) * M;
        const double* arow = ab + static_cast<std::int64_t>(c) * L;
        for (int k = 0; k < L; ++k) {
          const double av_ck = arow[k];
          const double* wrow = wb + static_cast<std::int64_t>(k) * M;
          for (int m = 0; m < M; ++m) orow[m] += av_ck * wrow[m];
        }
      }
    } else {
      // out[c,m] = sum_k a[c,k] * w[m,k]
      for (int c = 0; c < C; ++c) {
        const double* arow = ab + static_cast<std::int64_t>(c) * L;
        double* orow = ob + static_cast<std::int64_t>(c) * M;
        for (int m = 0; m < M; ++m) {
          const double* wrow = wb + static_cast<std::int64_t>(m) * L;
          double acc = 0.0;
          for (int k = 0; k < L; ++k) acc += arow[k] * wrow[k];
          orow[m] = acc;
        }
      }
    }
  }
  n->backprop = [transpose_w, as, ws, C, L, M](Node& self) {
    Node& pa = *self.parents[0];
    Node& pw = *self.parents[1];
    const auto& g = self.grad;
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (int b = 0; b < as.b; ++b) {
        const double* gb = g.data() + static_cast<std::int64_t>(b) * C * M;
        const double* wb = pw.value.data() + static_cast<std::int64_t>(ws.b == 1 ? 0 : b) * ws.c * ws.l;
        double* ab = pa.grad.data() + static_cast<std::int64_t>(b) * C * L;
        if (!transpose_w) {
          // dA[c,k] = sum_m g[c,m] * w[k,m]
          for (int c = 0; c < C; ++c) {
            const double* grow = gb + static_cast<std::int64_t>(c) * M;
            double* arow = ab + static_cast<std::int64_t>(c) * L;
            for (int k = 0; k < L; ++k) {
              const double* wrow = wb + static_cast<std::int64_t>(k) * M;
              double acc = 0.0;
              for (int m = 0; m < M; ++m) acc += grow[m] * wrow[m];
              arow[k] += acc;
            }
          }
        } else {
          // dA[c,k] = sum_m g[c,m] * w[m,k]
          for (int c = 0; c < C; ++c) {
            const double* grow = gb + static_cast<std::int64_t>(c) * M;
            double* arow = ab + static_cast<std::int64_t>(c) * L;
            for (int m = 0; m < M; ++m) {
              const double gcm = grow[m];
              const double* wrow = wb + static_cast<std::int64_t>(m) * L;
              for (int k = 0; k < L; ++k) arow[k] += gcm * wrow[k];
            }
          }
        }
      }
    }
    if (pw.requires_grad) {
      pw.ensure_grad();
      for (int b = 0; b < as.b; ++b) {
        const double* gb = g.data() + static_cast<std::int64_t>(b) * C * M;
        const double* ab = pa.value.data() + static_cast<std::int64_t>(b) * C * L;
        double* wb = pw.grad.data() + static_cast<std::int64_t>(ws.b == 1 ? 0 : b) * ws.c * ws.l;
        if (!transpose_w) {
          // dW[k,m] += sum_c a[c,k] * g[c,m]
          for (int c = 0; c < C; ++c) {
            const double* arow = ab + static_cast<std::int64_t>(c) * L;
            const double* grow = gb + static_cast<std::int64_t>(c) * M;
            for (int k = 0; k < L; ++k) {
              double* wrow = wb + static_cast<std::int64_t>(k) * M;
              const double ack = arow[k];
              for (int m = 0; m < M; ++m) wrow[m] += ack * grow[m];
            }
          }
        } else {
          // dW[m,k] += sum_c g[c,m] * a[c,k]
          for (int c = 0; c < C; ++c) {
            const double* arow = ab + static_cast<std::int64_t>(c) * L;
            const double* grow = gb + static_cast<std::int64_t>(c) * M;
            for (int m = 0; m < M; ++m) {
              double* wrow = wb + static_cast<std::int64_t>(m) * L;
              const double gcm = grow[m];
              for (int k = 0; k < L; ++k) wrow[k] += gcm * arow[k];
            }
          }
        }
      }
    }
  };
  return Tensor::from_node(n);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& w) { return matmul_impl(a, w, false, "matmul"); }
Tensor matmul_nt(const Tensor& a, const Tensor& w) { return matmul_impl(a, w, true, "matmul_nt"); }

Tensor conv1d(const Tensor& x, const Tensor& w) {
  const Shape3 xs = x.shape();
  const Shape3 ws = w.shape();
  const int k = ws.l;
  if (k != 1 && k != 3) shape_fail("conv1d", "kernel size must be 1 or 3, got " + std::to_string(k));
  if (ws.c != xs.c) {
    shape_fail("conv1d", "input channels " + std::to_string(xs.c) + " do not match weight " + ws.str());
  }
  const int Ci = xs.c, Co = ws.b, L = xs.l, B = xs.b;
  const int pad = (k == 3) ? 1 : 0;
  NodePtr n = make_node(Shape3{B, Co, L}, "conv1d", {x.node_ptr(), w.node_ptr()});
  const auto& xv = x.values();
  const auto& wv = w.values();
  auto& ov = n->value;
  for (int b = 0; b < B; ++b) {
    for (int co = 0; co < Co; ++co) {
      double* orow = ov.data() + (static_cast<std::int64_t>(b) * Co + co) * L;
      for (int ci = 0; ci < Ci; ++ci) {
        const double* xrow = xv.data() + (static_cast<std::int64_t>(b) * Ci + ci) * L;
        const double* wk = wv.data() + (static_cast<std::int64_t>(co) * Ci + ci) * k;
        for (int t = 0; t < k; ++t) {
          const double wt = wk[t];
          if (wt == 0.0) continue;
          const int shift = t - pad;
          const int lo = std::max(0, -shift);
          const int hi = std::min(L, L - shift);
          for (int l = lo; l < hi; ++l) orow[l] += wt * xrow[l + shift];
        }
      }
    }
  }
  n->backprop = [Ci, Co, L, B, k, pad](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    const auto& g = self.grad;
    if (px.requires_grad) {
      px.ensure_grad();
      for (int b = 0; b < B; ++b) {
        for (int co = 0; co < Co; ++co) {
          const double* grow = g.data() + (static_cast<std::int64_t>(b) * Co + co) * L;
          for (int ci = 0; ci < Ci; ++ci) {
            double* xrow = px.grad.data() + (static_cast<std::int64_t>(b) * Ci + ci) * L;
            const double* wk = pw.value.data() + (static_cast<std::int64_t>(co) * Ci + ci) * k;
            for (int t = 0; t < k; ++t) {
              const double wt = wk[t];
              if (wt == 0.0) continue;
              const int shift = t - pad;
              const int lo = std::max(0, -shift);
              const int hi = std::min(L, L - shift);
              for (int l = lo; l < hi; ++l) xrow[l + shift] += wt * grow[l];
            }
          }
        }
      }
    }
    if (pw.requires_grad) {
      pw.ensure_grad();
      for (int b = 0; b < B; ++b) {
        for (int co = 0; co < Co; ++co) {
          const double* grow = g.data() + (static_cast<std::int64_t>(b) * Co + co) * L;
          for (int ci = 0; ci < Ci; ++ci) {
            const double* xrow = px.value.data() + (static_cast<std::int64_t>(b) * Ci + ci) * L;
            double* wk = pw.grad.data() + (static_cast<std::int64_t>(co) * Ci + ci) * k;
            for (int t = 0; t < k; ++t) {
              const int shift = t - pad;
              const int lo = std::max(0, -shift);
              const int hi = std::min(L, L - shift);
              double acc = 0.0;
              for (int l = lo; l < hi; ++l) acc += grow[l] * xrow[l + shift];
              wk[t] += acc;
            }
          }
        }
      }
    }
  };
  return Tensor::from_node(n);
}

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_ew(const Tensor& x, const char* op, Fwd fwd, Bwd dfd) {
  NodePtr n = make_node(x.shape(), op, {x.node_ptr()});
  const auto& xv = x.values();
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = fwd(xv[i]);
  n->backprop = [dfd](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      p.grad[i] += self.grad[i] * dfd(p.value[i], self.value[i]);
    }
  };
  return Tensor::from_node(n);
}

double sigmoid_scalar(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

Tensor sigmoid(const Tensor& x) {
  return unary_ew(
      x, "sigmoid", [](double v) { return sigmoid_scalar(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary_ew(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor silu(const Tensor& x) {
  return unary_ew(
      x, "silu", [](double v) { return v * sigmoid_scalar(v); },
      [](double v, double) {
        const double s = sigmoid_scalar(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor softmax(const Tensor& x, Axis axis) {
  const Shape3 s = x.shape();
  NodePtr n = make_node(s, "softmax", {x.node_ptr()});
  const auto& xv = x.values();
  auto& ov = n->value;
  const int B = s.b, C = s.c, L = s.l;
  // Rows run along `axis`; the other two axes index independent rows.
  const bool feat = (axis == Axis::Feature);
  const int rows_outer = feat ? B * C : B;
  const int rows_inner = feat ? 1 : L;
  const int len = feat ? L : C;
  const std::int64_t stride = feat ? 1 : L;
  auto row_base = [feat, L, C](int outer, int inner) -> std::int64_t {
    return feat ? static_cast<std::int64_t>(outer) * L
                : static_cast<std::int64_t>(outer) * C * L + inner;
  };
  for (int o = 0; o < rows_outer; ++o) {
    for (int i = 0; i < rows_inner; ++i) {
      const std::int64_t base = row_base(o, i);
      double mx = xv[base];
      for (int t = 1; t < len; ++t) mx = std::max(mx, xv[base + t * stride]);
      double sum = 0.0;
      for (int t = 0; t < len; ++t) {
        const double e = std::exp(xv[base + t * stride] - mx);
        ov[base + t * stride] = e;
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (int t = 0; t < len; ++t) ov[base + t * stride] *= inv;
    }
  }
  n->backprop = [rows_outer, rows_inner, len, stride, row_base](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (int o = 0; o < rows_outer; ++o) {
      for (int i = 0; i < rows_inner; ++i) {
        const std::int64_t base = row_base(o, i);
        double dot = 0.0;
        for (int t = 0; t < len; ++t) {
          dot += self.grad[base + t * stride] * self.value[base + t * stride];
        }
        for (int t = 0; t < len; ++t) {
          const std::int64_t idx = base + t * stride;
          p.grad[idx] += self.value[idx] * (self.grad[idx] - dot);
        }
      }
    }
  };
  return Tensor::from_node(n);
}

Tensor concat_channel(std::span<const Tensor> parts) {
  if (parts.empty()) shape_fail("concat_channel", "no operands");
  const Shape3 first = parts[0].shape();
  int total_c = 0;
  std::vector<NodePtr> parents;
  parents.reserve(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Shape3 s = parts[i].shape();
    if (s.b != first.b || s.l != first.l) {
      shape_fail("concat_channel", "operand " + std::to_string(i) + " shape " + s.str() +
                                       " incompatible with " + first.str());
    }
    total_c += s.c;
    parents.push_back(parts[i].node_ptr());
  }
  const Shape3 os{first.b, total_c, first.l};
  NodePtr n = make_node(os, "concat_channel", std::move(parents));
  auto& ov = n->value;
  const int L = first.l;
  int c_off = 0;
  for (const Tensor& part : parts) {
    const Shape3 s = part.shape();
    const auto& pv = part.values();
    for (int b = 0; b < s.b; ++b) {
      std::memcpy(ov.data() + (static_cast<std::int64_t>(b) * total_c + c_off) * L,
                  pv.data() + static_cast<std::int64_t>(b) * s.c * L,
                  static_cast<std::size_t>(s.c) * L * sizeof(double));
    }
    c_off += s.c;
  }
  n->backprop = [total_c, L](Node& self) {
    const int B = self.shape.b;
    int c_off = 0;
    for (auto& pp : self.parents) {
      Node& p = *pp;
      const int pc = p.shape.c;
      if (p.requires_grad) {
        p.ensure_grad();
        for (int b = 0; b < B; ++b) {
          const double* src = self.grad.data() + (static_cast<std::int64_t>(b) * total_c + c_off) * L;
          double* dst = p.grad.data() + static_cast<std::int64_t>(b) * pc * L;
          for (std::int64_t i = 0; i < static_cast<std::int64_t>(pc) * L; ++i) dst[i] += src[i];
        }
      }
      c_off += pc;
    }
  };
  return Tensor::from_node(n);
}

namespace {

Tensor slice_axis(const Tensor& x, int lo, int hi, bool channel, const char* op) {
  const Shape3 s = x.shape();
  const int extent = channel ? s.c : s.l;
  if (lo < 0 || hi > extent || lo >= hi) {
    shape_fail(op, "range [" + std::to_string(lo) + "," + std::to_string(hi) +
                       ") invalid for shape " + s.str());
  }
  const int out_extent = hi - lo;
  const Shape3 os = channel ? Shape3{s.b, out_extent, s.l} : Shape3{s.b, s.c, out_extent};
  NodePtr n = make_node(os, op, {x.node_ptr()});
  const auto& xv = x.values();
  auto& ov = n->value;
  if (channel) {
    for (int b = 0; b < s.b; ++b) {
      std::memcpy(ov.data() + static_cast<std::int64_t>(b) * out_extent * s.l,
                  xv.data() + (static_cast<std::int64_t>(b) * s.c + lo) * s.l,
                  static_cast<std::size_t>(out_extent) * s.l * sizeof(double));
    }
  } else {
    for (int b = 0; b < s.b; ++b) {
      for (int c = 0; c < s.c; ++c) {
        std::memcpy(ov.data() + (static_cast<std::int64_t>(b) * s.c + c) * out_extent,
                    xv.data() + (static_cast<std::int64_t>(b) * s.c + c) * s.l + lo,
                    static_cast<std::size_t>(out_extent) * sizeof(double));
      }
    }
  }
  n->backprop = [s, lo, out_extent, channel](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    if (channel) {
      for (int b = 0; b < s.b; ++b) {
        const double* src = self.grad.data() + static_cast<std::int64_t>(b) * out_extent * s.l;
        double* dst = p.grad.data() + (static_cast<std::int64_t>(b) * s.c + lo) * s.l;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(out_extent) * s.l; ++i) dst[i] += src[i];
      }
    } else {
      for (int b = 0; b < s.b; ++b) {
        for (int c = 0; c < s.c; ++c) {
          const double* src = self.grad.data() + (static_cast<std::int64_t>(b) * s.c + c) * out_extent;
          double* dst = p.grad.data() + (static_cast<std::int64_t>(b) * s.c + c) * s.l + lo;
          for (int i = 0; i < out_extent; ++i) dst[i] += src[i];
        }
      }
    }
  };
  return Tensor::from_node(n);
}

}  // namespace

Tensor slice_channel(const Tensor& x, int lo, int hi) {
  return slice_axis(x, lo, hi, true, "slice_channel");
}

Tensor slice_feature(const Tensor& x, int lo, int hi) {
  return slice_axis(x, lo, hi, false, "slice_feature");
}

Tensor slice_write_feature(const Tensor& x, const Tensor& patch, int offset) {
  const Shape3 s = x.shape();
  const Shape3 ps = patch.shape();
  if (ps.b != s.b || ps.c != s.c || offset < 0 || offset + ps.l > s.l) {
    shape_fail("slice_write_feature", "patch " + ps.str() + " at offset " + std::to_string(offset) +
                                          " does not fit " + s.str());
  }
  NodePtr n = make_node(s, "slice_write_feature", {x.node_ptr(), patch.node_ptr()});
  n->value = x.values();
  const auto& pv = patch.values();
  for (int b = 0; b < s.b; ++b) {
    for (int c = 0; c < s.c; ++c) {
      std::memcpy(n->value.data() + (static_cast<std::int64_t>(b) * s.c + c) * s.l + offset,
                  pv.data() + (static_cast<std::int64_t>(b) * s.c + c) * ps.l,
                  static_cast<std::size_t>(ps.l) * sizeof(double));
    }
  }
  n->backprop = [s, ps, offset](Node& self) {
    Node& px = *self.parents[0];
    Node& pp = *self.parents[1];
    if (px.requires_grad) {
      px.ensure_grad();
      for (int b = 0; b < s.b; ++b) {
        for (int c = 0; c < s.c; ++c) {
          const double* g = self.grad.data() + (static_cast<std::int64_t>(b) * s.c + c) * s.l;
          double* dst = px.grad.data() + (static_cast<std::int64_t>(b) * s.c + c) * s.l;
          for (int l = 0; l < offset; ++l) dst[l] += g[l];
          for (int l = offset + ps.l; l < s.l; ++l) dst[l] += g[l];
        }
      }
    }
    if (pp.requires_grad) {
      pp.ensure_grad();
      for (int b = 0; b < s.b; ++b) {
        for (int c = 0; c < s.c; ++c) {
          const double* g = self.grad.data() + (static_cast<std::int64_t>(b) * s.c + c) * s.l + offset;
          double* dst = pp.grad.data() + (static_cast<std::int64_t>(b) * s.c + c) * ps.l;
          for (int l = 0; l < ps.l; ++l) dst[l] += g[l];
        }
      }
    }
  };
  return Tensor::from_node(n);
}

Tensor layer_norm(const Tensor& x, double eps) {
  const Shape3 s = x.shape();
  NodePtr n = make_node(s, "layer_norm", {x.node_ptr()});
  const auto& xv = x.values();
  auto& ov = n->value;
  const int rows = s.b * s.c;
  const int L = s.l;
  // Cache inverse stddev per row for the backward pass.
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (int r = 0; r < rows; ++r) {
    const double* row = xv.data() + static_cast<std::int64_t>(r) * L;
    double mean = 0.0;
    for (int l = 0; l < L; ++l) mean += row[l];
    mean /= L;
    double var = 0.0;
    for (int l = 0; l < L; ++l) {
      const double d = row[l] - mean;
      var += d * d;
    }
    var /= L;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    double* orow = ov.data() + static_cast<std::int64_t>(r) * L;
    for (int l = 0; l < L; ++l) orow[l] = (row[l] - mean) * is;
  }
  n->backprop = [rows, L, inv_std](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (int r = 0; r < rows; ++r) {
      const double* g = self.grad.data() + static_cast<std::int64_t>(r) * L;
      const double* y = self.value.data() + static_cast<std::int64_t>(r) * L;
      double* dx = p.grad.data() + static_cast<std::int64_t>(r) * L;
      double gsum = 0.0, gysum = 0.0;
      for (int l = 0; l < L; ++l) {
        gsum += g[l];
        gysum += g[l] * y[l];
      }
      const double is = (*inv_std)[r];
      for (int l = 0; l < L; ++l) {
        dx[l] += is * (g[l] - gsum / L - y[l] * gysum / L);
      }
    }
  };
  return Tensor::from_node(n);
}

Tensor mean_sq(const Tensor& x) {
  NodePtr n = make_node(Shape3{1, 1, 1}, "mean_sq", {x.node_ptr()});
  const auto& xv = x.values();
  double acc = 0.0;
  for (double v : xv) acc += v * v;
  const double inv_n = 1.0 / static_cast<double>(xv.size());
  n->value[0] = acc * inv_n;
  n->backprop = [inv_n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += 2.0 * inv_n * g * p.value[i];
  };
  return Tensor::from_node(n);
}

Tensor broadcast_to(const Tensor& x, Shape3 target) {
  const Shape3 s = x.shape();
  if ((s.b != target.b && s.b != 1) || (s.c != target.c && s.c != 1) ||
      (s.l != target.l && s.l != 1)) {
    shape_fail("broadcast_to", "cannot expand " + s.str() + " to " + target.str());
  }
  NodePtr n = make_node(target, "broadcast_to", {x.node_ptr()});
  const auto& xv = x.values();
  auto& ov = n->value;
  for (int b = 0; b < target.b; ++b) {
    const int sb = (s.b == 1) ? 0 : b;
    for (int c = 0; c < target.c; ++c) {
      const int sc = (s.c == 1) ? 0 : c;
      const double* src = xv.data() + (static_cast<std::int64_t>(sb) * s.c + sc) * s.l;
      double* dst = ov.data() + (static_cast<std::int64_t>(b) * target.c + c) * target.l;
      if (s.l == 1) {
        const double v = src[0];
        for (int l = 0; l < target.l; ++l) dst[l] = v;
      } else {
        std::memcpy(dst, src, static_cast<std::size_t>(target.l) * sizeof(double));
      }
    }
  }
  n->backprop = [s, target](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (int b = 0; b < target.b; ++b) {
      const int sb = (s.b == 1) ? 0 : b;
      for (int c = 0; c < target.c; ++c) {
        const int sc = (s.c == 1) ? 0 : c;
        const double* g = self.grad.data() + (static_cast<std::int64_t>(b) * target.c + c) * target.l;
        double* dst = p.grad.data() + (static_cast<std::int64_t>(sb) * s.c + sc) * s.l;
        if (s.l == 1) {
          double acc = 0.0;
          for (int l = 0; l < target.l; ++l) acc += g[l];
          dst[0] += acc;
        } else {
          for (int l = 0; l < target.l; ++l) dst[l] += g[l];
        }
      }
    }
  };
  return Tensor::from_node(n);
}

Tensor embedding_rows(const Tensor& table, std::span<const int> ids) {
  const Shape3 s = table.shape();
  if (s.b != 1) shape_fail("embedding_rows", "table must be (1,K,D), got " + s.str());
  for (int id : ids) {
    if (id < 0 || id >= s.c) {
      shape_fail("embedding_rows", "row id " + std::to_string(id) + " outside table " + s.str());
    }
  }
  const int B = static_cast<int>(ids.size());
  NodePtr n = make_node(Shape3{B, 1, s.l}, "embedding_rows", {table.node_ptr()});
  const auto& tv = table.values();
  auto ids_copy = std::make_shared<std::vector<int>>(ids.begin(), ids.end());
  for (int b = 0; b < B; ++b) {
    std::memcpy(n->value.data() + static_cast<std::int64_t>(b) * s.l,
                tv.data() + static_cast<std::int64_t>((*ids_copy)[b]) * s.l,
                static_cast<std::size_t>(s.l) * sizeof(double));
  }
  n->backprop = [s, ids_copy](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t b = 0; b < ids_copy->size(); ++b) {
      const double* g = self.grad.data() + static_cast<std::int64_t>(b) * s.l;
      double* dst = p.grad.data() + static_cast<std::int64_t>((*ids_copy)[b]) * s.l;
      for (int l = 0; l < s.l; ++l) dst[l] += g[l];
    }
  };
  return Tensor::from_node(n);
}

}  // namespace kfusion
