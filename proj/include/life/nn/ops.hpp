#pragma once

#include "life/nn/tensor.hpp"

namespace life::nn {

// All tensors are NCHW. Ops are instantiated for float and double.

/// Stride-1 convolution with zero padding k / 2. weight is [Cout, Cin, k, k]
/// (stored as Shape{Cout, Cin, k, k}); bias is [1, Cout, 1, 1] or undefined.
template <typename S>
BasicTensor<S> conv2d(const BasicTensor<S>& x, const BasicTensor<S>& weight, const BasicTensor<S>& bias);

template <typename S>
BasicTensor<S> relu(const BasicTensor<S>& x);

template <typename S>
BasicTensor<S> softplus(const BasicTensor<S>& x);

/// Per-sample, per-channel normalization over the spatial plane.
template <typename S>
BasicTensor<S> instance_norm(const BasicTensor<S>& x, S eps = S(1e-5));

/// 2x2 max pooling, stride 2. Height and width must be even.
template <typename S>
BasicTensor<S> maxpool2(const BasicTensor<S>& x);

/// Nearest-neighbour 2x upsampling.
template <typename S>
BasicTensor<S> upsample2(const BasicTensor<S>& x);

/// Channel concatenation.
template <typename S>
BasicTensor<S> concat(const BasicTensor<S>& a, const BasicTensor<S>& b);

template <typename S>
BasicTensor<S> add(const BasicTensor<S>& a, const BasicTensor<S>& b);

template <typename S>
BasicTensor<S> mul(const BasicTensor<S>& a, const BasicTensor<S>& b);

/// x * scale + shift.
template <typename S>
BasicTensor<S> affine(const BasicTensor<S>& x, S scale, S shift);

/// mu + sigma * noise, noise held constant.
template <typename S>
BasicTensor<S> reparameterize(const BasicTensor<S>& mu, const BasicTensor<S>& sigma,
                              const BasicTensor<S>& noise);

/// a * sum|y - y_pred| + b / N * sum (y - y_pred)^2 with N the element count.
/// The target y is treated as a constant.
template <typename S>
BasicTensor<S> loss_l1l2(const BasicTensor<S>& y, const BasicTensor<S>& y_pred, S a, S b);

template <typename S>
BasicTensor<S> sum(const BasicTensor<S>& x);

}  // namespace life::nn
