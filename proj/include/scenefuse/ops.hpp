// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "scenefuse/autodiff.hpp"

// Differentiable tensor operations. Matrices are {rows, cols}; feature maps
// are {rows, cols, channels} and can be reshaped to {rows * cols, channels}
// without copying semantics changing.
namespace scenefuse::ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_constant(Var a, const Tensor& c);
/// x {n, m} + b {m}.
Var add_rowvec(Var x, Var b);
/// Multiplies row i of x {n, m} by the constant factor[i].
Var mul_rows(Var x, std::vector<double> factor);

/// {n, k} x {k, m}.
Var matmul(Var a, Var b);
/// x {n, in} * w {in, out} + b {out}. `b` may be an invalid Var.
Var linear(Var x, Var w, Var b);

Var relu(Var x);
Var sigmoid(Var x);
/// Normalizes each row of x {n, m} and applies gamma/beta {m}.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

Var reshape(Var x, Shape shape);
/// Concatenates {n, m_i} blocks along columns.
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var x, int begin, int count);

/// out[i] = x[index[i]]; index -1 yields a zero row.
Var gather_rows(Var x, std::vector<int> index);
/// out {rows_out, m}; out[index[i]] += x[i]; index -1 is skipped.
Var scatter_rows(Var x, std::vector<int> index, int rows_out);
/// Column-wise max over row segments [offsets[g], offsets[g+1]). Empty
/// segments produce zeros.
Var segment_max(Var x, std::vector<int> offsets);
Var segment_sum(Var x, std::vector<int> offsets);

/// 2D convolution. x {H, W, Cin}, w {kh, kw, Cin, Cout}, b {Cout} (optional),
/// zero padding `pad` on every side.
Var conv2d(Var x, Var w, Var b, int stride, int pad);

/// Bilinear sampling of map {H, W, C} at uv {N, 2}, u along columns and v
/// along rows, integer coordinates on cell centers, zero outside the map.
Var bilinear_sample(Var map, Var uv);

/// Softmax over consecutive column groups of width `group` in x {n, m}.
Var group_softmax(Var x, int group);
/// Deformable-attention reduction. weights {K, heads * points},
/// samples {K * heads * points, C}; head h reads columns [h*C/heads, (h+1)*C/heads).
Var head_blend(Var weights, Var samples, int heads, int points);

Var sum(Var x);
/// Sum of w .* x for a constant w of the same shape.
Var weighted_sum(Var x, const Tensor& w);

}  // namespace scenefuse::ad
