#pragma once

// Dense convolution kernels over channels-first [B, C, T, H, W] buffers.
//
// Every dense convolution, its adjoints and the stride-2 transposed
// convolution reduce to three primitives over a "fine" grid and a
// "coarse" grid linked by  fine = coarse * stride + offset(tap):
//
//   gather        dst[b][cc][p]          += sum_cf sum_tap A(tap,cf,cc) * src[b][cf][p*s + d]
//   scatter       dst[b][cf][p*s + d]    += sum_cc sum_tap A(tap,cf,cc) * src[b][cc][p]
//   weight_grad   G(tap,cf,cc)            = sum_b sum_p fine[b][cf][p*s + d] * coarse[b][cc][p]
//
// For a convolution the fine grid is the input and the coarse grid the
// output; for a transposed convolution the roles swap. A(tap,cf,cc) is read
// from an offset-major weight buffer through WeightLayout strides so the
// same primitive serves [K, C_in, C_out] weights in either orientation.
//
// `serial` holds straightforward site-major reference loops. `parallel`
// holds the row-vectorized OpenMP versions; work is split over disjoint
// output channels so the result does not depend on the thread count.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "t4c/conv_spec.hpp"

namespace t4c::kernels {

using Dims3 = std::array<std::int64_t, 3>;

struct GridPair {
  std::int64_t batch = 1;
  int fine_channels = 0;
  int coarse_channels = 0;
  Dims3 fine{1, 1, 1};
  Dims3 coarse{1, 1, 1};
  Axes3 stride{1, 1, 1};
  std::vector<Axes3> taps;

  std::int64_t fine_volume() const { return fine[0] * fine[1] * fine[2]; }
  std::int64_t coarse_volume() const { return coarse[0] * coarse[1] * coarse[2]; }
};

/// Element (tap, cf, cc) lives at tap * tap_stride + cf * fine_stride + cc * coarse_stride.
struct WeightLayout {
  std::int64_t tap_stride = 0;
  std::int64_t fine_stride = 0;
  std::int64_t coarse_stride = 0;
};

/// Grid pair of a convolution: fine = input, coarse = output.
GridPair conv_grids(const ConvSpec& spec, std::int64_t batch, const Dims3& in_dims);
/// Grid pair of a transposed convolution: fine = output, coarse = input.
GridPair transposed_grids(const ConvSpec& spec, std::int64_t batch, const Dims3& in_dims,
                          const Dims3& out_dims);

/// [K, C_in, C_out] weights addressed as (tap, C_in, C_out).
WeightLayout conv_layout(const ConvSpec& spec);
/// [K, C_in, C_out] weights of a transposed conv addressed as (tap, C_out, C_in).
WeightLayout transposed_layout(const ConvSpec& spec);

namespace serial {
template <class T>
void gather(const GridPair& g, std::span<const T> src, std::span<const T> w, WeightLayout lay,
            std::span<T> dst);
template <class T>
void scatter(const GridPair& g, std::span<const T> src, std::span<const T> w, WeightLayout lay,
             std::span<T> dst);
template <class T>
void weight_grad(const GridPair& g, std::span<const T> fine, std::span<const T> coarse,
                 WeightLayout lay, std::span<T> grad);
}  // namespace serial

namespace parallel {
template <class T>
void gather(const GridPair& g, std::span<const T> src, std::span<const T> w, WeightLayout lay,
            std::span<T> dst);
template <class T>
void scatter(const GridPair& g, std::span<const T> src, std::span<const T> w, WeightLayout lay,
             std::span<T> dst);
template <class T>
void weight_grad(const GridPair& g, std::span<const T> fine, std::span<const T> coarse,
                 WeightLayout lay, std::span<T> grad);
}  // namespace parallel

}  // namespace t4c::kernels
