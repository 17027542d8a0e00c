#pragma once

#include <cstddef>
#include <vector>

#include "cdmamba/tensor.hpp"

/// Differentiable primitives. Every op allocates its result and, under an
/// active Tape, records the matching vector-Jacobian product. Broadcasting
/// is limited to scalar-tensor and per-channel (last axis) affine forms.
namespace cdmamba::ops {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
/// x * s where s is a one-element tensor (learnable scalars, gate weights).
Tensor mul_scalar(const Tensor& x, const Tensor& s);
/// Adds bias[C] along the last axis of x[..., C].
Tensor add_bias(const Tensor& x, const Tensor& bias);

/// [M,K] x [K,N] -> [M,N].
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[L,in] * weight[in,out] (+ bias[out] when defined).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
std::vector<Tensor> split(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& sizes);

/// Reductions drop the reduced axis. A rank-1 input reduces to shape [1].
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

Tensor silu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double negative_slope = 0.01);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor abs(const Tensor& x);
/// log(max(x, floor)); the gradient is zero where the floor is active.
Tensor log(const Tensor& x, double floor = 1e-12);
/// Softmax over the last axis.
Tensor softmax(const Tensor& x);

/// Row-wise normalization of x[L,C] over C followed by gamma/beta affine.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// x[C_in,H,W], weight[C_out, C_in/groups, k, k], bias[C_out] or undefined.
/// groups == C_in == C_out gives a depthwise convolution.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding, std::size_t groups = 1);

/// Per-channel 1-D convolution along the token axis of x[L,C] with
/// weight[C,k]. With causal_left_pad the sequence is left-padded by k-1
/// zeros so position t only sees positions <= t.
Tensor conv1d_depthwise(const Tensor& x, const Tensor& weight, bool causal_left_pad = true);

/// Bilinear resize of x[C,H,W] by scale num/den with the half-pixel
/// (align_corners = false) convention. Output size is round(H * scale).
Tensor bilinear_resize(const Tensor& x, std::size_t num, std::size_t den);

/// [L,C] tokens (row-major over H x W) -> [C,H,W] image.
Tensor tokens_to_image(const Tensor& tokens, std::size_t height, std::size_t width);
/// [C,H,W] image -> [H*W, C] tokens.
Tensor image_to_tokens(const Tensor& image);

}  // namespace cdmamba::ops
