#pragma once

#include <cstdint>

#include "stwo/tensor.hpp"

// Differentiable tensor operations. Unless noted, backward passes are built
// from these same ops and so support a second differentiation pass.
namespace stwo::ops {

// Elementwise, identical shapes.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T value);

template <typename T> Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.2));
// g * (x >= 0 ? 1 : slope); the adjoint of leaky_relu at x.
template <typename T> Tensor<T> leaky_relu_grad(const Tensor<T>& g, const Tensor<T>& x, T slope);
// First-order only.
template <typename T> Tensor<T> tanh(const Tensor<T>& x);
// log(1 + e^x), first-order only.
template <typename T> Tensor<T> softplus(const Tensor<T>& x);

// Row-wise v / sqrt(mean(v^2) + 1e-8) over the last axis of a 1-D or 2-D tensor. First-order only.
template <typename T> Tensor<T> rms_normalize(const Tensor<T>& x);

// Reductions to a scalar (shape {}).
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
// Scalar (numel 1) broadcast to `shape`.
template <typename T> Tensor<T> expand(const Tensor<T>& s, const Shape& shape);

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
template <typename T> Tensor<T> reshape(const Tensor<T>& a, const Shape& shape);

// Channel axis is axis 1 of a 2-D (b x c) or 4-D (b x c x H x W) tensor.
template <typename T> Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t start, std::int64_t count);
// Places x at channels [start, start + c) of a zero tensor with `total` channels.
template <typename T> Tensor<T> pad_channels(const Tensor<T>& x, std::int64_t start, std::int64_t total);

// x + bias broadcast along axis 1.
template <typename T> Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);
// Sum over every axis except axis 1; result has shape {dim(1)}.
template <typename T> Tensor<T> sum_except_channels(const Tensor<T>& x);
template <typename T> Tensor<T> broadcast_channels(const Tensor<T>& v, const Shape& shape);

// Batch axis 0: tile a leading-1 tensor, or sum it back down.
template <typename T> Tensor<T> repeat_batch(const Tensor<T>& x, std::int64_t batch);
template <typename T> Tensor<T> sum_batch(const Tensor<T>& x);

enum class Resample { up_nearest_2x, down_avg_2x };
template <typename T> Tensor<T> resample(const Tensor<T>& x, Resample mode);
template <typename T> Tensor<T> upsample2x(const Tensor<T>& x) { return resample(x, Resample::up_nearest_2x); }
template <typename T> Tensor<T> downsample2x(const Tensor<T>& x) { return resample(x, Resample::down_avg_2x); }

// Stride-1 cross-correlation with zero padding. `w` is either shared
// (o x c x kh x kw) or per-sample (b x o x c x kh x kw).
template <typename T> Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int pad);
// Adjoint of conv2d with respect to its input (a transposed convolution).
template <typename T>
Tensor<T> conv2d_input_grad(const Tensor<T>& g, const Tensor<T>& w, int pad, const Shape& x_shape);
// Adjoint of conv2d with respect to its weight.
template <typename T>
Tensor<T> conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& g, int pad, const Shape& w_shape);

}  // namespace stwo::ops
