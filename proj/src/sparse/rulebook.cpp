#include "t4c/rulebook.hpp"

#include <algorithm>
#include <numeric>

#include "t4c/backend.hpp"

namespace t4c {
namespace {

std::vector<Axes3> tap_offsets(const ConvSpec& spec) {
  std::vector<Axes3> taps;
  taps.reserve(spec.volume());
  for (int k = 0; k < spec.volume(); ++k) taps.push_back(spec.offset(k));
  return taps;
}

// Conv relation: output p reads input p * s + d.
struct ConvLocate {
  Axes3 stride;
  bool operator()(const Coord& out, const Axes3& d, Coord& in) const {
    in[0] = out[0];
    for (int a = 0; a < 3; ++a) in[a + 1] = out[a + 1] * stride[a] + d[a];
    return true;
  }
};

// Transposed relation: input c feeds output c * s + d, so c = (p - d) / s.
struct TransposedLocate {
  Axes3 stride;
  bool operator()(const Coord& out, const Axes3& d, Coord& in) const {
    in[0] = out[0];
    for (int a = 0; a < 3; ++a) {
      const int num = out[a + 1] - d[a];
      if (num < 0 || num % stride[a] != 0) return false;
      in[a + 1] = num / stride[a];
    }
    return true;
  }
};

template <class Locate>
void fill_tap(const std::vector<Coord>& out_coords, const CoordIndex& in_index,
              const GridShape& in_shape, const Axes3& d, const Locate& locate, PairList& pl) {
  Coord in{};
  for (std::size_t o = 0; o < out_coords.size(); ++o) {
    if (!locate(out_coords[o], d, in) || !grid_contains(in_shape, in)) continue;
    const auto i = in_index.find(in);
    if (i < 0) continue;
    pl.in_rows.push_back(i);
    pl.out_rows.push_back(static_cast<std::int32_t>(o));
  }
}

template <class Locate>
std::vector<PairList> find_pairs(const std::vector<Coord>& out_coords, const std::vector<Coord>& in_coords,
                                 const GridShape& in_shape, const std::vector<Axes3>& taps,
                                 const Locate& locate) {
  const CoordIndex in_index(in_coords);
  std::vector<PairList> result(taps.size());
  const auto n = static_cast<std::int64_t>(taps.size());
  if (kernel_backend() == Backend::Serial) {
    for (std::int64_t k = 0; k < n; ++k) fill_tap(out_coords, in_index, in_shape, taps[k], locate, result[k]);
  } else {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t k = 0; k < n; ++k) fill_tap(out_coords, in_index, in_shape, taps[k], locate, result[k]);
  }
  return result;
}

std::vector<Coord> sorted_unique(std::vector<std::uint64_t>& keys) {
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  std::vector<Coord> coords;
  coords.reserve(keys.size());
  for (auto k : keys) coords.push_back(unpack_coord(k));
  return coords;
}

void check_submanifold(const ConvSpec& spec) {
  for (int a = 0; a < 3; ++a) {
    if (spec.stride[a] != 1) throw ShapeError("submanifold convolution requires stride 1");
    if (spec.kernel[a] % 2 == 0 || spec.padding[a] != spec.kernel[a] / 2) {
      throw ShapeError("submanifold convolution requires an odd kernel with same padding");
    }
  }
}

}  // namespace

std::size_t Rulebook::total_pairs() const {
  return std::accumulate(taps.begin(), taps.end(), std::size_t{0},
                         [](std::size_t s, const PairList& p) { return s + p.size(); });
}

Rulebook build_rulebook(const std::vector<Coord>& in_coords, const GridShape& in_shape,
                        const ConvSpec& spec, SparseConvMode mode) {
  spec.validate();
  check_grid_shape(in_shape);
  const auto taps = tap_offsets(spec);
  Rulebook rb;
  rb.in_rows = static_cast<std::int64_t>(in_coords.size());

  if (mode == SparseConvMode::Submanifold) {
    check_submanifold(spec);
    rb.out_coords = in_coords;
    rb.out_shape = in_shape;
  } else {
    rb.out_shape = {in_shape[0], spec.out_extent(0, in_shape[1]), spec.out_extent(1, in_shape[2]),
                    spec.out_extent(2, in_shape[3])};
    check_grid_shape(rb.out_shape);
    std::vector<std::uint64_t> keys;
    keys.reserve(in_coords.size() * taps.size());
    for (const auto& c : in_coords) {
      for (const auto& d : taps) {
        Coord p{c[0], 0, 0, 0};
        bool ok = true;
        for (int a = 0; a < 3 && ok; ++a) {
          const int num = c[a + 1] - d[a];
          ok = num >= 0 && num % spec.stride[a] == 0 && num / spec.stride[a] < rb.out_shape[a + 1];
          if (ok) p[a + 1] = num / spec.stride[a];
        }
        if (ok) keys.push_back(pack_coord(p));
      }
    }
    rb.out_coords = sorted_unique(keys);
  }
  rb.taps = find_pairs(rb.out_coords, in_coords, in_shape, taps, ConvLocate{spec.stride});
  return rb;
}

Rulebook build_transposed_rulebook(const std::vector<Coord>& in_coords, const GridShape& in_shape,
                                   const ConvSpec& spec, const std::vector<Coord>& target,
                                   const GridShape& target_shape) {
  spec.validate();
  check_grid_shape(in_shape);
  check_grid_shape(target_shape);
  if (target.empty() && !in_coords.empty()) {
    throw ShapeError("transposed sparse conv: empty target coordinate table for a non-empty input");
  }
  Rulebook rb;
  rb.in_rows = static_cast<std::int64_t>(in_coords.size());
  rb.out_coords = target;
  rb.out_shape = target_shape;
  rb.taps = find_pairs(rb.out_coords, in_coords, in_shape, tap_offsets(spec), TransposedLocate{spec.stride});
  return rb;
}

Rulebook build_transposed_rulebook_generalized(const std::vector<Coord>& in_coords,
                                               const GridShape& in_shape, const ConvSpec& spec,
                                               const GridShape& out_shape) {
  spec.validate();
  check_grid_shape(in_shape);
  check_grid_shape(out_shape);
  const auto taps = tap_offsets(spec);
  std::vector<std::uint64_t> keys;
  keys.reserve(in_coords.size() * taps.size());
  for (const auto& c : in_coords) {
    for (const auto& d : taps) {
      Coord f{c[0], 0, 0, 0};
      bool ok = true;
      for (int a = 0; a < 3 && ok; ++a) {
        f[a + 1] = c[a + 1] * spec.stride[a] + d[a];
        ok = f[a + 1] >= 0 && f[a + 1] < out_shape[a + 1];
      }
      if (ok) keys.push_back(pack_coord(f));
    }
  }
  Rulebook rb;
  rb.in_rows = static_cast<std::int64_t>(in_coords.size());
  rb.out_coords = sorted_unique(keys);
  rb.out_shape = out_shape;
  rb.taps = find_pairs(rb.out_coords, in_coords, in_shape, taps, TransposedLocate{spec.stride});
  return rb;
}

}  // namespace t4c
