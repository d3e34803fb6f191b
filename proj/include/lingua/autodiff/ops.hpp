#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lingua/autodiff/tensor.hpp"

// Differentiable primitives. Unless noted, "row" means the last axis and a
// tensor of shape [a x b x n] is treated as a*b rows of length n.
namespace lingua::ad {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

// x[..., n] + row[n]; `row` may be [n] or [1 x n].
Tensor add_row(const Tensor& x, const Tensor& row);
// x[r x n] * col[r x 1], broadcasting the column across each row.
Tensor mul_col(const Tensor& x, const Tensor& col);
// [1 x n] -> [count x n]
Tensor repeat_rows(const Tensor& row, std::size_t count);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);
// Swaps the trailing two axes.
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

// ids -> rows of `table` ([V x n]); result [ids.size() x n].
Tensor embedding(const Tensor& table, std::span<const int> ids);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);

// Positions where keep[i] == 0 are replaced by `value` and receive no grad.
Tensor masked_fill(const Tensor& x, std::span<const std::uint8_t> keep, double value);
// Column-wise variant for [r x n] scores; keep has length n.
Tensor masked_fill_cols(const Tensor& x, std::span<const std::uint8_t> keep_cols, double value);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// out[r] = x[r, index[r]]
Tensor pick(const Tensor& x, std::span<const int> index);

// Time-axis patch extraction for strided 1-D convolution over [T x C]:
// output row t holds input rows t*stride - kernel/2 ... t*stride + kernel/2
// (zeros outside [0, T)), giving ceil(T / stride) rows of kernel*C values.
Tensor frame_stack(const Tensor& x, std::size_t kernel, std::size_t stride);

}  // namespace lingua::ad
