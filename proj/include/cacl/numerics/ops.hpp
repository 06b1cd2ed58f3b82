#ifndef CACL_NUMERICS_OPS_HPP_
#define CACL_NUMERICS_OPS_HPP_

// Differentiable operations. Every op records itself on the active GradTape
// when at least one input requires a gradient; otherwise it is a plain
// forward evaluation.

#include <cstddef>
#include <span>
#include <vector>

#include "cacl/numerics/tensor.hpp"

namespace cacl {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// [rows x cols] -> [rows]
Tensor row_sum(const Tensor& x);

// y = x W^T + b. x is [in] or [batch x in]; W is [out x in]; b is [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// 3x3 kernel, stride 1, zero padding 1. x is [C x H x W] or
// [batch x C x H x W]; kernels [F x C x 3 x 3]; bias [F].
Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias);

// Concatenate / slice along the last axis. Leading extents must agree.
Tensor concat(const std::vector<Tensor>& parts);
Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);
// Stack matrices with equal column counts along the first axis.
Tensor concat_rows(const std::vector<Tensor>& parts);
// out[r] = x[rows[r]] for a matrix x; repeated rows accumulate gradient.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

// Row-wise over [rows x cols].
Tensor log_softmax_rows(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor l2_normalize_rows(const Tensor& x);
// out[r] = x[r, index[r]]
Tensor pick(const Tensor& x, std::span<const std::size_t> index);

// W / ||W^T u||, with u held constant. Returns W untouched when the
// estimate falls below 1e-12.
Tensor spectral_divide(const Tensor& weight, std::span<const double> u);

// mean((a - b)^2)
Tensor mse(const Tensor& a, const Tensor& b);

}  // namespace cacl

#endif  // CACL_NUMERICS_OPS_HPP_
