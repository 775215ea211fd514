#pragma once

#include <optional>
#include <vector>

#include "t4c/conv_spec.hpp"
#include "t4c/rulebook.hpp"
#include "t4c/sparse_tensor.hpp"

namespace t4c {

template <class T>
struct SparseConvGrads {
  std::vector<T> input;  // [N_in, C_in]
  Tensor<T> weight;
  std::optional<Tensor<T>> bias;
};

/// Gather-scatter convolution along `rb`; the output lives on rb.out_coords.
/// Bias is added to every output row after the taps.
template <class T>
SparseTensor<T> sparse_conv_forward(const SparseTensor<T>& input, const KernelWeights<T>& w,
                                    const Rulebook& rb);

/// Adjoint of sparse_conv_forward. `grad_out` is [rb.out_coords.size(), C_out].
template <class T>
SparseConvGrads<T> sparse_conv_backward(const std::vector<T>& grad_out, const SparseTensor<T>& cached_input,
                                        const KernelWeights<T>& w, const Rulebook& rb,
                                        bool need_input = true);

/// Stride-2 transposed convolution onto `target` coordinates (encoder level restore).
template <class T>
SparseTensor<T> sparse_transposed_conv(const SparseTensor<T>& input, const ConvSpec& spec,
                                       const KernelWeights<T>& w, const std::vector<Coord>& target,
                                       const GridShape& target_shape);

template <class T>
struct SparsePoolResult {
  SparseTensor<T> output;
  std::vector<std::int32_t> argmax;  // [N_out, C] winning input row per channel
};

/// Stride-2 max pool: output coord = floor(coord / 2) on t, h, w; batch kept.
/// Channelwise max over the active rows that map to a site; ties go to the
/// first row in canonical order.
template <class T>
SparsePoolResult<T> sparse_maxpool(const SparseTensor<T>& input);
template <class T>
std::vector<T> sparse_maxpool_backward(const std::vector<T>& grad_out, const std::vector<std::int32_t>& argmax,
                                       int channels, std::int64_t input_rows);

/// Elementwise ReLU on features; coordinates are kept even when a row becomes all-zero.
template <class T>
SparseTensor<T> sparse_relu(const SparseTensor<T>& x);
template <class T>
std::vector<T> sparse_relu_backward(const std::vector<T>& grad_out, const SparseTensor<T>& cached_input);

/// Channel concatenation. Rows are aligned on the union of both coordinate
/// sets; a side missing a coordinate contributes zeros.
template <class T>
struct SparseConcat {
  SparseTensor<T> output;
  std::vector<std::int32_t> a_rows;  // output row of each row of a
  std::vector<std::int32_t> b_rows;
};
template <class T>
SparseConcat<T> sparse_concat(const SparseTensor<T>& a, const SparseTensor<T>& b);

}  // namespace t4c
