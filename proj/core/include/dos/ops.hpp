// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

#include "dos/graph.hpp"
#include "dos/tensor.hpp"

// Differentiable primitives over Graph nodes. Shapes must match exactly; the
// only broadcast is a 1 x n row applied to every row of an m x n matrix
// (add_row / mul_row). Anything else throws ContractViolation.
namespace dos {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_row(Var m, Var row);
Var mul_row(Var m, Var row);
Var scale(Var a, double s);

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

Var sigmoid(Var a);
/// tanh approximation of GELU
Var gelu(Var a);
Var softmax_rows(Var a);
/// Per-row standardisation without affine terms.
Var layer_norm_rows(Var a, double eps = 1e-5);

Var sum(Var a);
Var mean(Var a);
Var sum_squares(Var a);
/// Mean over consecutive groups of `segment` rows: (B*segment) x n -> B x n.
Var segment_mean(Var a, std::size_t segment);

Var concat_cols(Var a, Var b);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var tile_rows(Var a, std::size_t times);
Var gather_rows(Var table, std::span<const std::size_t> rows);

/// Entry (i, j) is a(i, j) where mask(i, j) != 0, and +0.0 elsewhere. The mask
/// is a constant; no gradient flows to masked-out entries.
Var apply_mask(Var a, const Tensor& mask);

/// Scaled dot-product attention applied independently to each block of
/// `seq_len` consecutive rows, with `heads` column groups. `causal` restricts
/// row t to keys 0..t within its block.
Var attention(Var q, Var k, Var v, std::size_t seq_len, std::size_t heads = 1, bool causal = false);

/// Forward identity, zero backward. Routed through the graph's freeze tape.
Var stop_gradient(Var a);

/// Summed binary cross-entropy; probabilities are clamped to [clamp, 1-clamp].
Var bce_sum(Var prob, std::span<const double> labels, double clamp = 1e-7);
/// Summed softmax cross-entropy of each row against an integer target.
Var softmax_cross_entropy_sum(Var logits, std::span<const std::size_t> targets);

/// x * w + b with w stored as in x out.
Var linear(Var x, Var w, Var b);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace dos
