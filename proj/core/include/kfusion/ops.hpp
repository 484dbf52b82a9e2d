#pragma once

#include <span>

#include "kfusion/tensor.hpp"

namespace kfusion {

enum class Axis { Channel = 1, Feature = 2 };

// Every primitive below has an exact shape rule (stated next to it) and a
// reverse-mode gradient; the gradients are verified against central finite
// differences in the test suite.

// (B,C,L) + (B,C,L) -> (B,C,L)
Tensor add(const Tensor& a, const Tensor& b);

// Hadamard product; shapes as add.
Tensor mul(const Tensor& a, const Tensor& b);

// x * s for a constant s.
Tensor scale(const Tensor& x, double s);

// a - b, composed from add and scale.
Tensor sub(const Tensor& a, const Tensor& b);

// (B,C,L) x (Bw,L,M) -> (B,C,M); Bw must be 1 (shared weights) or B.
Tensor matmul(const Tensor& a, const Tensor& w);

// (B,C,L) x (Bw,M,L) -> (B,C,M); contracts the last axis of both operands.
Tensor matmul_nt(const Tensor& a, const Tensor& w);

// (B,Ci,L) conv (Co,Ci,k) -> (B,Co,L) along the feature axis with channel
// mixing; k in {1,3}; zero padding preserves L for k=3.
Tensor conv1d(const Tensor& x, const Tensor& w);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor silu(const Tensor& x);

// Normalizes to a probability simplex along the given axis.
Tensor softmax(const Tensor& x, Axis axis);

// Concatenates along the channel axis; batch and feature dims must agree.
Tensor concat_channel(std::span<const Tensor> parts);

// Contiguous [lo,hi) reads.
Tensor slice_channel(const Tensor& x, int lo, int hi);
Tensor slice_feature(const Tensor& x, int lo, int hi);

// Returns x with feature range [offset, offset + patch.l) replaced by patch;
// every other entry is bit-identical to x. Gradients flow to both operands.
Tensor slice_write_feature(const Tensor& x, const Tensor& patch, int offset);

// Zero mean, unit variance over the feature axis.
Tensor layer_norm(const Tensor& x, double eps = 1e-5);

// Mean of squared entries as a (1,1,1) tensor.
Tensor mean_sq(const Tensor& x);

// Expands axes whose source dim is 1 up to the target dims; gradients sum
// over the expanded axes.
Tensor broadcast_to(const Tensor& x, Shape3 target);

// (1,K,D) table gathered by row ids -> (ids.size(),1,D); the gradient
// scatter-adds into the selected rows.
Tensor embedding_rows(const Tensor& table, std::span<const int> ids);

}  // namespace kfusion
