#pragma once

#include <span>

#include "resfeat/tensor.hpp"

namespace resfeat {

// Forward/backward pairs for the closed layer set of the descriptor network.
// Every `*_backward` accumulates into the `.grad()` buffers of its tensor
// arguments; `grad_output` has the shape of the forward result.

/// 3x3 convolution, stride 1, zero padding 1.
/// input C_in x H x W, weights C_out x C_in x 3 x 3, bias C_out.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                      const Tensor<Scalar>& bias);
template <typename Scalar>
void conv2d_backward(Tensor<Scalar>& input, Tensor<Scalar>& weights, Tensor<Scalar>& bias,
                     const typename Tensor<Scalar>::Array& grad_output);

/// 2x2 max pooling with stride 2. Gradient goes to the first maximum in
/// row-major order of each window.
template <typename Scalar>
Tensor<Scalar> maxpool2x2(const Tensor<Scalar>& input);
template <typename Scalar>
void maxpool2x2_backward(Tensor<Scalar>& input, const typename Tensor<Scalar>::Array& grad_output);

/// Row-wise affine map: input N x D_in, weights D_out x D_in, bias D_out.
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                      const Tensor<Scalar>& bias);
template <typename Scalar>
void linear_backward(Tensor<Scalar>& input, Tensor<Scalar>& weights, Tensor<Scalar>& bias,
                     const typename Tensor<Scalar>::Array& grad_output);

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& input);
/// Subgradient at exactly 0 is 0.
template <typename Scalar>
void relu_backward(Tensor<Scalar>& input, const typename Tensor<Scalar>::Array& grad_output);

inline constexpr double kNormalizeEps = 1e-12;

/// x / max(||x||, eps). Rank-1 input is treated as one vector, rank-2 input
/// is normalized row by row.
template <typename Scalar>
Tensor<Scalar> l2_normalize(const Tensor<Scalar>& input, double eps = kNormalizeEps);
template <typename Scalar>
void l2_normalize_backward(Tensor<Scalar>& input, const Tensor<Scalar>& output,
                           const typename Tensor<Scalar>::Array& grad_output,
                           double eps = kNormalizeEps);

/// Bilinear lookup of a D x Hc x Wc map at (u, v) grid coordinates; returns N x D.
/// Points must lie in [0, Wc-1] x [0, Hc-1].
template <typename Scalar>
Tensor<Scalar> bilinear_sample(const Tensor<Scalar>& dense, std::span<const Eigen::Vector2d> points);
template <typename Scalar>
void bilinear_sample_backward(Tensor<Scalar>& dense, std::span<const Eigen::Vector2d> points,
                              const typename Tensor<Scalar>::Array& grad_output);

}  // namespace resfeat
