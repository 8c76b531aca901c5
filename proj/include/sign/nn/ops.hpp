#pragma once

// Differentiable primitives. Shape errors throw Error(ShapeMismatch) naming
// both operand shapes.

#include <cstddef>

#include "sign/nn/autodiff.hpp"

namespace sign::nn::ops {

// [m, k] x [k, n] -> [m, n]
[[nodiscard]] Var matmul(const Var& a, const Var& b);
// [g, m, k] x [g, k, n] -> [g, m, n]; with transpose_b, b is [g, n, k].
[[nodiscard]] Var bmm(const Var& a, const Var& b, bool transpose_b = false);

[[nodiscard]] Var add(const Var& a, const Var& b);
[[nodiscard]] Var sub(const Var& a, const Var& b);
[[nodiscard]] Var mul(const Var& a, const Var& b);
[[nodiscard]] Var scale(const Var& a, double factor);
// x[..., c] + bias[c]
[[nodiscard]] Var add_bias(const Var& x, const Var& bias);
// x (any shape, size a multiple of t's size) + t repeated over the leading blocks.
[[nodiscard]] Var add_tiled(const Var& x, const Var& t);

[[nodiscard]] Var relu(const Var& x);
[[nodiscard]] Var sigmoid(const Var& x);
[[nodiscard]] Var abs(const Var& x);

// Over the last axis of a [rows, c] view; gamma and beta are [c].
[[nodiscard]] Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-8);
// Over the last axis.
[[nodiscard]] Var softmax(const Var& x);

// Mean of all elements -> [1].
[[nodiscard]] Var mean(const Var& x);
// Sum over the last axis: [..., c] -> [...].
[[nodiscard]] Var sum_last(const Var& x);
[[nodiscard]] Var reshape(const Var& x, Shape shape);
// [r, c1] ++ [r, c2] -> [r, c1 + c2]
[[nodiscard]] Var concat_last(const Var& a, const Var& b);

// NHWC input [b, h, w, cin], weight [cout, k, k, cin], bias [cout]. With
// fuse_relu the result is relu(conv) computed in one node.
[[nodiscard]] Var conv2d(const Var& x, const Var& weight, const Var& bias, std::size_t stride,
                         std::size_t padding, bool fuse_relu = false);
// [b, h, w, c] -> [b, c]
[[nodiscard]] Var global_avg_pool(const Var& x);

// Selects columns [offset, offset + heads*head_dim) of x [batch*tokens, width]
// and lays them out as [batch*heads, tokens, head_dim].
[[nodiscard]] Var split_heads(const Var& x, std::size_t batch, std::size_t heads,
                              std::size_t head_dim, std::size_t offset);
// Inverse layout: [batch*heads, tokens, head_dim] -> [batch*tokens, heads*head_dim].
[[nodiscard]] Var merge_heads(const Var& x, std::size_t batch, std::size_t heads);

}  // namespace sign::nn::ops
