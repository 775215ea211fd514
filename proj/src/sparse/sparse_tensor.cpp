#include "t4c/sparse_tensor.hpp"

#include <cmath>
#include <string>

namespace t4c {

bool grid_contains(const GridShape& shape, const Coord& c) {
  for (int a = 0; a < 4; ++a) {
    if (c[a] < 0 || c[a] >= shape[a]) return false;
  }
  return true;
}

void check_grid_shape(const GridShape& shape) {
  for (auto d : shape) {
    if (d <= 0 || d > 0xffff) {
      throw ShapeError("sparse grid extents must lie in [1, 65535]");
    }
  }
}

CoordIndex::CoordIndex(const std::vector<Coord>& coords) {
  map_.reserve(coords.size() * 2);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    map_.emplace(pack_coord(coords[i]), static_cast<std::int32_t>(i));
  }
}

template <class T>
void SparseTensor<T>::validate() const {
  check_grid_shape(shape);
  if (channels <= 0) throw ShapeError("sparse tensor needs a positive channel count");
  if (feats.size() != coords.size() * static_cast<std::size_t>(channels)) {
    throw ShapeError("sparse tensor has " + std::to_string(feats.size()) + " feature values for " +
                     std::to_string(coords.size()) + " rows of " + std::to_string(channels));
  }
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (!grid_contains(shape, coords[i])) {
      throw ShapeError("sparse row " + std::to_string(i) + " lies outside the dense shape");
    }
    if (i && !(coords[i - 1] < coords[i])) {
      throw ShapeError("sparse rows are not sorted and unique at row " + std::to_string(i));
    }
  }
}

template <class T>
SparseTensor<T> dense_to_sparse(const Tensor<T>& x, double threshold) {
  require_rank(x.shape(), 5, "dense_to_sparse");
  const auto& s = x.shape();
  SparseTensor<T> out;
  out.channels = static_cast<int>(s[1]);
  out.shape = {s[0], s[2], s[3], s[4]};
  check_grid_shape(out.shape);
  const std::int64_t vol = s[2] * s[3] * s[4];
  auto v = x.data();
  for (std::int64_t b = 0; b < s[0]; ++b) {
    const T* base = v.data() + b * s[1] * vol;
    for (std::int64_t site = 0; site < vol; ++site) {
      bool active = false;
      for (std::int64_t c = 0; c < s[1] && !active; ++c) {
        active = std::abs(static_cast<double>(base[c * vol + site])) > threshold;
      }
      if (!active) continue;
      const auto w = site % s[4];
      const auto h = (site / s[4]) % s[3];
      const auto t = site / (s[4] * s[3]);
      out.coords.push_back({static_cast<std::int32_t>(b), static_cast<std::int32_t>(t),
                            static_cast<std::int32_t>(h), static_cast<std::int32_t>(w)});
      for (std::int64_t c = 0; c < s[1]; ++c) out.feats.push_back(base[c * vol + site]);
    }
  }
  return out;
}

template <class T>
Tensor<T> sparse_to_dense(const SparseTensor<T>& s) {
  check_grid_shape(s.shape);
  const auto& g = s.shape;
  Tensor<T> out({g[0], s.channels, g[1], g[2], g[3]});
  auto o = out.mutable_data();
  const std::int64_t vol = g[1] * g[2] * g[3];
  for (std::int64_t i = 0; i < s.rows(); ++i) {
    const auto& c = s.coords[i];
    if (!grid_contains(g, c)) {
      throw ShapeError("sparse_to_dense: row " + std::to_string(i) + " lies outside the dense shape");
    }
    const std::int64_t site = (static_cast<std::int64_t>(c[1]) * g[2] + c[2]) * g[3] + c[3];
    T* base = o.data() + static_cast<std::int64_t>(c[0]) * s.channels * vol + site;
    const T* f = s.row(i);
    for (int ch = 0; ch < s.channels; ++ch) base[ch * vol] = f[ch];
  }
  return out;
}

template struct SparseTensor<float>;
template struct SparseTensor<double>;
template SparseTensor<float> dense_to_sparse(const Tensor<float>&, double);
template SparseTensor<double> dense_to_sparse(const Tensor<double>&, double);
template Tensor<float> sparse_to_dense(const SparseTensor<float>&);
template Tensor<double> sparse_to_dense(const SparseTensor<double>&);

}  // namespace t4c
