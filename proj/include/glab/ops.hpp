#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "glab/tape.hpp"

// Differentiable primitives. Every op records itself on the tape of its inputs,
// validates shapes (DimensionError) and rejects non-finite results
// (NumericError). All backward rules are built from these same ops, so any
// composition can be differentiated twice.

namespace glab {

// Elementwise, equal shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double c);
Var sqrt(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var relu(const Var& a);

// Reductions and broadcasts.
Var sum(const Var& a);                                  // -> scalar
Var broadcast_scalar(const Var& s, const Shape& shape);  // one-element s -> shape
Var dot(const Var& a, const Var& b);                    // sum(a * b)
Var sum_squares(const Var& a);
Var reshape(const Var& a, const Shape& shape);

// [rows, cols] helpers.
Var sum_rows(const Var& a);                               // [R, C] -> [C]
Var broadcast_rows(const Var& v, std::size_t rows);       // [C] -> [R, C]
Var row_sum(const Var& a);                                // [R, C] -> [R]
Var broadcast_cols(const Var& v, std::size_t cols);       // [R] -> [R, C]

// Channel axis (axis 1) of [N, C, ...] tensors.
Var sum_channels(const Var& a);                           // [N, C, ...] -> [C]
Var broadcast_channels(const Var& v, const Shape& shape);  // [C] -> [N, C, ...]

// c = op(a) * op(b), op = transpose when flagged. Operands are rank 2.
Var matmul(const Var& a, const Var& b, bool transpose_a = false, bool transpose_b = false);

// ---- layer primitives ----

// x [N, in], weight [out, in], bias [out] -> [N, out]
Var linear(const Var& x, const Var& weight, const Var& bias);

// Cross-correlation. input [N, C, H, W], kernel [K, C, kH, kW] -> [N, K, H', W'].
Var conv2d(const Var& input, const Var& kernel, std::size_t stride, std::size_t padding);
// Adjoints of conv2d in its two arguments; exposed for tests.
Var conv2d_input_grad(const Var& grad_out, const Var& kernel, const Shape& input_shape,
                      std::size_t stride, std::size_t padding);
Var conv2d_weight_grad(const Var& input, const Var& grad_out, const Shape& kernel_shape,
                       std::size_t stride, std::size_t padding);

// Non-overlapping k x k average pooling over the last two axes of [N, C, H, W].
Var avgpool2d(const Var& x, std::size_t k);

// (x - mean) / sqrt(var + eps) * gamma + beta, per channel (axis 1), using the
// stored statistics only.
Var batchnorm_inference(const Var& x, const Var& mean, const Var& var, const Var& gamma,
                        const Var& beta, double eps = 1e-5);

// ---- losses ----

Var logsumexp(const Var& logits);
Var softmax(const Var& logits);
// -log softmax(logits)[label]; logits of any shape with `size()` classes.
Var cross_entropy(const Var& logits, std::size_t label);
// Mean over classes of binary cross-entropy against the multi-hot encoding of labels.
Var multi_hot_bce(const Var& logits, std::span<const std::size_t> labels);
// <a, b> / (|a| |b|); DegenerateInputError if either norm is zero.
Var cosine_similarity(const Var& a, const Var& b);
// Cosine similarity of the concatenations a[0]..a[n-1] and b[0]..b[n-1].
Var cosine_similarity(std::span<const Var> a, std::span<const Var> b);

// Anisotropic L1 total variation summed over the leading axes of [..., H, W].
Var total_variation(const Var& x);

}  // namespace glab
