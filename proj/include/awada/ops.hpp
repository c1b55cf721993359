#pragma once

#include <vector>

#include "awada/tensor.hpp"

// Differentiable operations. Binary ops require identical shapes (no
// broadcasting); violations throw std::invalid_argument naming both shapes.

namespace awada {

/// input [N,Cin,H,W], kernel [Cout,Cin,kh,kw], bias [Cout] -> [N,Cout,H',W'].
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
              int pad);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);

/// Lower bound applied to log operands, in forward and backward alike.
inline constexpr double kLogClamp = 1e-12;
/// Natural log of max(a, kLogClamp); the gradient is zero where clamped.
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);

/// Reductions keep reduced axes with size 1. An empty axis list reduces all
/// axes; reducing a tensor with no elements throws.
Tensor sum(const Tensor& a, const std::vector<int>& axes = {});
Tensor mean(const Tensor& a, const std::vector<int>& axes = {});

/// (1/numel) * sum(a * weights) with constant weights. Gradient w.r.t. a is
/// weights / numel. With all-ones weights the value and gradient are
/// bit-identical to mean(a).
Tensor weighted_mean(const Tensor& a, const Tensor& weights);

/// Nearest-neighbour doubling of the two trailing axes of a rank-4 tensor.
Tensor upsample2x(const Tensor& a);
/// 2x2 average pooling of a rank-4 tensor with even spatial dims.
Tensor avgpool2x(const Tensor& a);

/// Softmax across axis 1 of a rank-4 tensor.
Tensor softmax_channels(const Tensor& a);
/// Channels [begin, end) of a rank-4 tensor.
Tensor slice_channels(const Tensor& a, int begin, int end);
/// Channels of a followed by channels of b; other axes must agree.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Per-sample, per-channel normalisation over the spatial axes.
Tensor instance_norm(const Tensor& a, double eps = 1e-5);

/// Top-left spatial crop of a rank-4 tensor to (height, width).
Tensor crop2d(const Tensor& a, int height, int width);

/// Copy with no graph history.
Tensor detach(const Tensor& a);

}  // namespace awada
