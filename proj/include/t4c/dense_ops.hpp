#pragma once

// Dense layers over channels-first activations with explicit forward and
// backward passes. Convolution is cross-correlation (no kernel flip).

#include <cstdint>
#include <optional>
#include <vector>

#include "t4c/conv_spec.hpp"
#include "t4c/tensor.hpp"

namespace t4c {

/// `input` stays empty when the caller asked for parameter gradients only.
template <class T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weight;
  std::optional<Tensor<T>> bias;
};

/// [B, C_in, T, H, W] -> [B, C_out, T', H', W'], zero padding.
template <class T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const ConvSpec& spec, const KernelWeights<T>& w);
template <class T>
ConvGrads<T> conv3d_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input,
                             const ConvSpec& spec, const KernelWeights<T>& w, bool need_input = true);

/// [B, C_in, H, W] -> [B, C_out, H', W']. The ConvSpec must have kernel[0] == 1 and padding[0] == 0.
template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvSpec& spec, const KernelWeights<T>& w);
template <class T>
ConvGrads<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input,
                             const ConvSpec& spec, const KernelWeights<T>& w, bool need_input = true);

/// Transposed convolution: out[f] += W[d]^T in[c] wherever f = c * stride + d
/// lands inside `out_dims` (t, h, w). Weights are [K, C_in, C_out].
template <class T>
Tensor<T> conv_transposed3d_forward(const Tensor<T>& input, const ConvSpec& spec,
                                    const KernelWeights<T>& w, const std::vector<std::int64_t>& out_dims);
template <class T>
ConvGrads<T> conv_transposed3d_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input,
                                        const ConvSpec& spec, const KernelWeights<T>& w, bool need_input = true);

/// Stride-2 max pool over (t, h, w): output site o covers inputs {2o, 2o+1}
/// per axis, output extent ceil(n / 2). `argmax` holds the flat input index
/// chosen for every output element (first in scan order on ties).
template <class T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::int64_t> argmax;
};
template <class T>
PoolResult<T> maxpool3d_forward(const Tensor<T>& input);
template <class T>
Tensor<T> maxpool3d_backward(const Tensor<T>& grad_out, const std::vector<std::int64_t>& argmax,
                             const Shape& input_shape);

template <class T>
Tensor<T> relu_forward(const Tensor<T>& x);
template <class T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input);

/// Residual sum; the backward pass hands grad_out to both operands unchanged.
template <class T>
Tensor<T> add_forward(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
struct MseResult {
  double loss = 0.0;
  Tensor<T> grad;  // d loss / d pred
};
/// Mean of squared differences over every element.
template <class T>
MseResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

/// [B, C, T, H, W] -> [B, C*T, H, W]; element (b,c,t,h,w) lands at channel c*T + t.
template <class T>
Tensor<T> stack_time_channels(const Tensor<T>& x);
/// Inverse of stack_time_channels for a given time length.
template <class T>
Tensor<T> unstack_time_channels(const Tensor<T>& x, std::int64_t time);

/// Concatenation along `axis`; split() is its adjoint.
template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::int64_t axis);
template <class T>
std::vector<Tensor<T>> split(const Tensor<T>& whole, const std::vector<std::int64_t>& sizes,
                             std::int64_t axis);

/// Repeats a size-1 axis `n` times; sum_axis() is its adjoint.
template <class T>
Tensor<T> broadcast_axis(const Tensor<T>& x, std::int64_t axis, std::int64_t n);
template <class T>
Tensor<T> sum_axis(const Tensor<T>& x, std::int64_t axis);

/// Slice [start, start+len) along `axis`.
template <class T>
Tensor<T> slice(const Tensor<T>& x, std::int64_t axis, std::int64_t start, std::int64_t len);

}  // namespace t4c
