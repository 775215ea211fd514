#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "t4c/tensor.hpp"

namespace t4c {

/// (batch, t, h, w) of one active site.
using Coord = std::array<std::int32_t, 4>;
/// (B, T, H, W) extent of the dense grid a sparse tensor lives in.
using GridShape = std::array<std::int64_t, 4>;

/// Packs a coordinate into a key whose integer order is the canonical
/// lexicographic (batch, t, h, w) order. Every component must be < 2^16.
inline std::uint64_t pack_coord(const Coord& c) {
  return (static_cast<std::uint64_t>(c[0]) << 48) | (static_cast<std::uint64_t>(c[1]) << 32) |
         (static_cast<std::uint64_t>(c[2]) << 16) | static_cast<std::uint64_t>(c[3]);
}

inline Coord unpack_coord(std::uint64_t k) {
  return {static_cast<std::int32_t>(k >> 48), static_cast<std::int32_t>((k >> 32) & 0xffff),
          static_cast<std::int32_t>((k >> 16) & 0xffff), static_cast<std::int32_t>(k & 0xffff)};
}

/// COO tensor: coordinate rows sorted canonically and unique, with one
/// `channels`-wide feature row (row-major [N, C]) per coordinate.
template <class T>
struct SparseTensor {
  std::vector<Coord> coords;
  std::vector<T> feats;
  int channels = 0;
  GridShape shape{1, 1, 1, 1};

  std::int64_t rows() const noexcept { return static_cast<std::int64_t>(coords.size()); }
  const T* row(std::int64_t i) const { return feats.data() + i * channels; }
  T* row(std::int64_t i) { return feats.data() + i * channels; }

  /// Throws ShapeError if any invariant (sorted, unique, in bounds, feature length) fails.
  void validate() const;
};

/// Coordinate -> row lookup for one coordinate table.
class CoordIndex {
 public:
  CoordIndex() = default;
  explicit CoordIndex(const std::vector<Coord>& coords);

  /// Row of `c`, or -1 when absent.
  std::int32_t find(const Coord& c) const {
    auto it = map_.find(pack_coord(c));
    return it == map_.end() ? -1 : it->second;
  }
  std::size_t size() const noexcept { return map_.size(); }

 private:
  std::unordered_map<std::uint64_t, std::int32_t> map_;
};

bool grid_contains(const GridShape& shape, const Coord& c);
void check_grid_shape(const GridShape& shape);

/// Sites of x [B, C, T, H, W] where some channel has |value| > threshold.
template <class T>
SparseTensor<T> dense_to_sparse(const Tensor<T>& x, double threshold = 0.0);

/// Zeros everywhere except the listed coordinates.
template <class T>
Tensor<T> sparse_to_dense(const SparseTensor<T>& s);

/// Occupied fraction N / (B * T * H * W).
template <class T>
double nnz_rate(const SparseTensor<T>& s) {
  const double vol = static_cast<double>(s.shape[0] * s.shape[1] * s.shape[2] * s.shape[3]);
  return static_cast<double>(s.coords.size()) / vol;
}

}  // namespace t4c
