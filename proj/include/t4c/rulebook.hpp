#pragma once

#include <cstdint>
#include <vector>

#include "t4c/conv_spec.hpp"
#include "t4c/sparse_tensor.hpp"

namespace t4c {

/// Submanifold keeps the input coordinate set (stride 1 only).
/// Generalized emits every in-bounds site some input reaches through a tap.
enum class SparseConvMode { Submanifold, Generalized };

/// (input row, output row) pairs of one kernel tap, sorted by output row.
/// Within one tap every output row appears at most once.
struct PairList {
  std::vector<std::int32_t> in_rows;
  std::vector<std::int32_t> out_rows;

  std::size_t size() const noexcept { return in_rows.size(); }
};

/// Gather/scatter plan of one sparse convolution.
struct Rulebook {
  std::vector<PairList> taps;       // same enumeration as KernelWeights
  std::vector<Coord> out_coords;    // canonical order
  GridShape out_shape{1, 1, 1, 1};
  std::int64_t in_rows = 0;

  std::size_t total_pairs() const;
};

/// Convolution plan: output site p reads input site p * stride + offset(k) through tap k.
Rulebook build_rulebook(const std::vector<Coord>& in_coords, const GridShape& in_shape,
                        const ConvSpec& spec, SparseConvMode mode);

template <class T>
Rulebook build_rulebook(const SparseTensor<T>& input, const ConvSpec& spec, SparseConvMode mode) {
  return build_rulebook(input.coords, input.shape, spec, mode);
}

/// Transposed plan: input site c feeds output site c * stride + offset(k) through tap k.
/// Outputs are restricted to `target` (coordinate restoration from an encoder level).
Rulebook build_transposed_rulebook(const std::vector<Coord>& in_coords, const GridShape& in_shape,
                                   const ConvSpec& spec, const std::vector<Coord>& target,
                                   const GridShape& target_shape);

/// Transposed plan whose outputs are every in-bounds site of `out_shape` that an input reaches.
Rulebook build_transposed_rulebook_generalized(const std::vector<Coord>& in_coords,
                                               const GridShape& in_shape, const ConvSpec& spec,
                                               const GridShape& out_shape);

}  // namespace t4c
