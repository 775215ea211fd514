#pragma once

// Gather-multiply-scatter kernels driven by a rulebook.
//
// Taps are processed in order. Inside one tap no output row repeats, so
// the parallel versions split a tap's pairs across threads without
// atomics and every output row sees its contributions in tap order. Both
// variants therefore produce bit-identical results.

#include <span>
#include <vector>

#include "t4c/rulebook.hpp"

namespace t4c::kernels {

/// out[o] += in[i] * W[k] for every pair (i, o) of tap k. W is [K, C_in, C_out].
/// grad_in[i] += grad_out[o] * W[k]^T.
/// grad_w[k] = sum over pairs of in[i]^T grad_out[o]  (overwrites grad_w).

namespace serial {
template <class T>
void sparse_forward(const std::vector<PairList>& taps, std::span<const T> in, int cin,
                    std::span<const T> w, int cout, std::span<T> out);
template <class T>
void sparse_backward_data(const std::vector<PairList>& taps, std::span<const T> grad_out, int cout,
                          std::span<const T> w, int cin, std::span<T> grad_in);
template <class T>
void sparse_backward_weight(const std::vector<PairList>& taps, std::span<const T> in, int cin,
                            std::span<const T> grad_out, int cout, std::span<T> grad_w);
}  // namespace serial

namespace parallel {
template <class T>
void sparse_forward(const std::vector<PairList>& taps, std::span<const T> in, int cin,
                    std::span<const T> w, int cout, std::span<T> out);
template <class T>
void sparse_backward_data(const std::vector<PairList>& taps, std::span<const T> grad_out, int cout,
                          std::span<const T> w, int cin, std::span<T> grad_in);
template <class T>
void sparse_backward_weight(const std::vector<PairList>& taps, std::span<const T> in, int cin,
                            std::span<const T> grad_out, int cout, std::span<T> grad_w);
}  // namespace parallel

}  // namespace t4c::kernels
