#include "kfusion/fusion.hpp"

#include <array>

#include "kfusion/errors.hpp"
#include "kfusion/ops.hpp"

namespace kfusion {

namespace {

void expect_shape(const char* where, const char* operand, const Tensor& t, Shape3 want) {
  if (!(t.shape() == want)) {
    throw ShapeError(std::string(where) + ": operand " + operand + " has shape " +
                     t.shape().str() + ", expected " + want.str());
  }
}

}  // namespace

std::pair<Tensor, Tensor> fuse_concat(const Tensor& m, const Tensor& gb_m, const Tensor& f,
                                      const Tensor& gb, const Tensor& ct) {
  const Shape3 ms = m.shape();
  const int B = ms.b, C = ms.c, M = ms.l;
  const int F = f.shape().l;
  expect_shape("fuse_concat", "gb_m", gb_m, Shape3{B, C, M});
  expect_shape("fuse_concat", "f", f, Shape3{B, C, F});
  expect_shape("fuse_concat", "gb", gb, Shape3{B, C, F});
  expect_shape("fuse_concat", "ct", ct, Shape3{B, C, F});
  const std::array<Tensor, 2> mouth_ops{m, gb_m};
  const std::array<Tensor, 3> face_ops{f, gb, ct};
  return {concat_channel(mouth_ops), concat_channel(face_ops)};
}

Tensor bottleneck(const Tensor& x, const ConvParams& reduce, const ConvParams& mid,
                  const ConvParams& out) {
  Tensor h = silu(conv_block(x, reduce));
  h = silu(conv_block(h, mid));
  return conv_block(h, out);
}

Tensor fuse_face(const Tensor& x_f, const FusionParams& fp, ResidualMode mode) {
  Tensor bf = bottleneck(x_f, fp.f_reduce, fp.f_mid, fp.f_out);
  Tensor res = conv_block(x_f, fp.res);
  return mode == ResidualMode::Product ? mul(bf, res) : add(bf, res);
}

Tensor insert_mouth(const Tensor& x_f, const Tensor& x_m, int offset) {
  const Shape3 fs = x_f.shape();
  const Shape3 ms = x_m.shape();
  if (ms.b != fs.b || ms.c != fs.c || offset < 0 || offset + ms.l > fs.l) {
    throw ShapeError("insert_mouth: mouth " + ms.str() + " at offset " + std::to_string(offset) +
                     " does not fit face " + fs.str());
  }
  return slice_write_feature(x_f, x_m, offset);
}

Tensor kfusion_forward(const Tensor& gb, const Tensor& gb_m, const Tensor& ct, const Tensor& f,
                       const Tensor& m, const FusionParams& fp, const ModelConfig& cfg) {
  auto [x_m, x_f] = fuse_concat(m, gb_m, f, gb, ct);
  Tensor mouth = bottleneck(x_m, fp.m_reduce, fp.m_mid, fp.m_out);
  Tensor face = fuse_face(x_f, fp, cfg.residual);
  face = insert_mouth(face, mouth, cfg.mouth_offset());
  return head_forward(face, fp.head);
}

Tensor no_kfusion_forward(const Tensor& gb, const Tensor& gb_m, const Tensor& ct, const Tensor& f,
                          const Tensor& m, const FusionParams& fp, const ModelConfig& cfg) {
  Tensor face_mean = scale(add(add(f, gb), ct), 1.0 / 3.0);
  Tensor mouth_mean = scale(add(m, gb_m), 0.5);
  Tensor face = linear(face_mean, fp.nk_face);
  Tensor mouth = linear(mouth_mean, fp.nk_mouth);
  return insert_mouth(face, mouth, cfg.mouth_offset());
}

Tensor fusion_forward(const Tensor& gb, const Tensor& gb_m, const Tensor& ct, const Tensor& f,
                      const Tensor& m, const FusionParams& fp, const ModelConfig& cfg) {
  if (cfg.ablation == Ablation::NoKfusion) {
    return no_kfusion_forward(gb, gb_m, ct, f, m, fp, cfg);
  }
  return kfusion_forward(gb, gb_m, ct, f, m, fp, cfg);
}

}  // namespace kfusion
