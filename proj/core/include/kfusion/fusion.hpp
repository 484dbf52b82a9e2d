#pragma once

#include <utility>

#include "kfusion/model.hpp"
#include "kfusion/tensor.hpp"

namespace kfusion {

// x_m = m (+) gb_m over channels (B,2C,M); x_f = f (+) gb (+) ct (B,3C,F).
// Operand order is fixed.
std::pair<Tensor, Tensor> fuse_concat(const Tensor& m, const Tensor& gb_m, const Tensor& f,
                                      const Tensor& gb, const Tensor& ct);

// conv k=1 -> SiLU -> conv k=3 -> SiLU -> conv k=1, length preserved.
Tensor bottleneck(const Tensor& x, const ConvParams& reduce, const ConvParams& mid,
                  const ConvParams& out);

// Bottleneck path combined with the k=1 residual conv path, elementwise
// product by default (ResidualMode::Sum adds instead).
Tensor fuse_face(const Tensor& x_f, const FusionParams& fp, ResidualMode mode);

// Replaces feature slice [offset, offset + M) of x_f with x_m; everything
// else is bit-identical. Gradients flow to both operands.
Tensor insert_mouth(const Tensor& x_f, const Tensor& x_m, int offset);

// Full block: concat, bottlenecks, residual product, mouth insertion, then
// the KAN (or MLP) head per frame.
Tensor kfusion_forward(const Tensor& gb, const Tensor& gb_m, const Tensor& ct, const Tensor& f,
                       const Tensor& m, const FusionParams& fp, const ModelConfig& cfg);

// Ablation replacement: per-frame mean of the concatenated channel groups
// followed by a linear head, with the mouth result inserted at L_m.
Tensor no_kfusion_forward(const Tensor& gb, const Tensor& gb_m, const Tensor& ct, const Tensor& f,
                          const Tensor& m, const FusionParams& fp, const ModelConfig& cfg);

// Dispatches on cfg.ablation.
Tensor fusion_forward(const Tensor& gb, const Tensor& gb_m, const Tensor& ct, const Tensor& f,
                      const Tensor& m, const FusionParams& fp, const ModelConfig& cfg);

}  // namespace kfusion
