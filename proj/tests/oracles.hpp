#pragma once

// Independent reference implementations used by the tests. They follow the
// textbook definitions with plain nested loops and share no code with the
// library kernels.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <span>
#include <tuple>
#include <vector>

#include "t4c/conv_spec.hpp"
#include "t4c/rulebook.hpp"
#include "t4c/sparse_tensor.hpp"
#include "t4c/tensor.hpp"

namespace oracle {

using t4c::ConvSpec;
using t4c::Coord;
using t4c::GridShape;
using t4c::KernelWeights;
using t4c::Shape;
using t4c::Tensor;

inline std::int64_t at5(const Shape& s, std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d,
                        std::int64_t e) {
  return (((a * s[1] + b) * s[2] + c) * s[3] + d) * s[4] + e;
}

inline std::array<int, 3> tap_offset(const ConvSpec& s, int k) {
  const int kt = k / (s.kernel[1] * s.kernel[2]);
  const int kh = (k / s.kernel[2]) % s.kernel[1];
  const int kw = k % s.kernel[2];
  return {kt - s.padding[0], kh - s.padding[1], kw - s.padding[2]};
}

/// y[b,o,p] = bias[o] + sum_k sum_i x[b, i, p*stride + off(k)] * W[k, i, o]
inline Tensor<double> conv3d(const Tensor<double>& x, const ConvSpec& s, const KernelWeights<double>& w) {
  const auto& xs = x.shape();
  const std::int64_t B = xs[0], Ci = xs[1];
  std::int64_t out[3];
  for (int a = 0; a < 3; ++a) out[a] = (xs[2 + a] + 2 * s.padding[a] - s.kernel[a]) / s.stride[a] + 1;
  const std::int64_t Co = s.out_channels;
  Tensor<double> y({B, Co, out[0], out[1], out[2]});
  const auto& ys = y.shape();
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t o = 0; o < Co; ++o)
      for (std::int64_t t = 0; t < out[0]; ++t)
        for (std::int64_t h = 0; h < out[1]; ++h)
          for (std::int64_t v = 0; v < out[2]; ++v) {
            double acc = w.bias ? (*w.bias)[o] : 0.0;
            for (int k = 0; k < s.volume(); ++k) {
              const auto d = tap_offset(s, k);
              const std::int64_t it = t * s.stride[0] + d[0], ih = h * s.stride[1] + d[1], iw = v * s.stride[2] + d[2];
              if (it < 0 || ih < 0 || iw < 0 || it >= xs[2] || ih >= xs[3] || iw >= xs[4]) continue;
              for (std::int64_t i = 0; i < Ci; ++i) {
                acc += x[at5(xs, b, i, it, ih, iw)] * w.weight[(k * Ci + i) * Co + o];
              }
            }
            y[at5(ys, b, o, t, h, v)] = acc;
          }
  return y;
}

/// y[b,o,f] = bias[o] + sum over (c, k) with f = c*stride + off(k) of x[b,i,c] W[k,i,o]
inline Tensor<double> conv_transposed3d(const Tensor<double>& x, const ConvSpec& s, const KernelWeights<double>& w,
                                        const std::vector<std::int64_t>& out_dims) {
  const auto& xs = x.shape();
  const std::int64_t B = xs[0], Ci = xs[1], Co = s.out_channels;
  Tensor<double> y({B, Co, out_dims[0], out_dims[1], out_dims[2]});
  const auto& ys = y.shape();
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t o = 0; o < Co; ++o)
      for (std::int64_t t = 0; t < ys[2]; ++t)
        for (std::int64_t h = 0; h < ys[3]; ++h)
          for (std::int64_t v = 0; v < ys[4]; ++v) y[at5(ys, b, o, t, h, v)] = w.bias ? (*w.bias)[o] : 0.0;
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t t = 0; t < xs[2]; ++t)
      for (std::int64_t h = 0; h < xs[3]; ++h)
        for (std::int64_t v = 0; v < xs[4]; ++v)
          for (int k = 0; k < s.volume(); ++k) {
            const auto d = tap_offset(s, k);
            const std::int64_t ft = t * s.stride[0] + d[0], fh = h * s.stride[1] + d[1], fw = v * s.stride[2] + d[2];
            if (ft < 0 || fh < 0 || fw < 0 || ft >= ys[2] || fh >= ys[3] || fw >= ys[4]) continue;
            for (std::int64_t i = 0; i < Ci; ++i)
              for (std::int64_t o = 0; o < Co; ++o)
                y[at5(ys, b, o, ft, fh, fw)] += x[at5(xs, b, i, t, h, v)] * w.weight[(k * Ci + i) * Co + o];
          }
  return y;
}

/// Window {2p, 2p+1} per axis, extent ceil(n/2).
inline Tensor<double> maxpool3d(const Tensor<double>& x) {
  const auto& xs = x.shape();
  Tensor<double> y({xs[0], xs[1], (xs[2] + 1) / 2, (xs[3] + 1) / 2, (xs[4] + 1) / 2});
  const auto& ys = y.shape();
  for (std::int64_t b = 0; b < ys[0]; ++b)
    for (std::int64_t c = 0; c < ys[1]; ++c)
      for (std::int64_t t = 0; t < ys[2]; ++t)
        for (std::int64_t h = 0; h < ys[3]; ++h)
          for (std::int64_t v = 0; v < ys[4]; ++v) {
            double m = -INFINITY;
            for (int dt = 0; dt < 2; ++dt)
              for (int dh = 0; dh < 2; ++dh)
                for (int dw = 0; dw < 2; ++dw) {
                  const std::int64_t it = 2 * t + dt, ih = 2 * h + dh, iw = 2 * v + dw;
                  if (it < xs[2] && ih < xs[3] && iw < xs[4]) m = std::max(m, x[at5(xs, b, c, it, ih, iw)]);
                }
            y[at5(ys, b, c, t, h, v)] = m;
          }
  return y;
}

/// Rulebook as a set of (tap, input coord, output coord) triples.
using Triples = std::set<std::tuple<int, Coord, Coord>>;

/// Voxel x offset enumeration. Generalized: every output grid site p and tap k
/// with p*stride + off(k) active. Submanifold: outputs restricted to the inputs.
inline Triples brute_rulebook(const std::vector<Coord>& in, const GridShape& shape, const ConvSpec& s,
                              bool submanifold, std::set<Coord>* outputs = nullptr) {
  std::set<Coord> active(in.begin(), in.end());
  std::int64_t out[3];
  for (int a = 0; a < 3; ++a) out[a] = submanifold ? shape[1 + a] : (shape[1 + a] + 2 * s.padding[a] - s.kernel[a]) / s.stride[a] + 1;
  Triples triples;
  for (std::int64_t b = 0; b < shape[0]; ++b)
    for (std::int64_t t = 0; t < out[0]; ++t)
      for (std::int64_t h = 0; h < out[1]; ++h)
        for (std::int64_t w = 0; w < out[2]; ++w) {
          const Coord p{static_cast<int>(b), static_cast<int>(t), static_cast<int>(h), static_cast<int>(w)};
          if (submanifold && !active.count(p)) continue;
          bool reached = false;
          for (int k = 0; k < s.volume(); ++k) {
            const auto d = tap_offset(s, k);
            const Coord q{p[0], static_cast<int>(t * s.stride[0] + d[0]), static_cast<int>(h * s.stride[1] + d[1]),
                          static_cast<int>(w * s.stride[2] + d[2])};
            if (active.count(q)) {
              triples.insert({k, q, p});
              reached = true;
            }
          }
          if (outputs && (reached || submanifold)) outputs->insert(p);
        }
  return triples;
}

inline Triples triples_of(const t4c::Rulebook& rb, const std::vector<Coord>& in) {
  Triples t;
  for (std::size_t k = 0; k < rb.taps.size(); ++k) {
    for (std::size_t j = 0; j < rb.taps[k].size(); ++j) {
      t.insert({static_cast<int>(k), in[rb.taps[k].in_rows[j]], rb.out_coords[rb.taps[k].out_rows[j]]});
    }
  }
  return t;
}

// Random inputs.

inline Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(shape);
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.mutable_data()) v = d(rng);
  return t;
}

/// Values with |v| in [0.1, 1]: keeps ReLU inputs away from the kink.
inline Tensor<double> away_from_zero(const Shape& shape, std::mt19937_64& rng) {
  Tensor<double> t(shape);
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.mutable_data()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

inline KernelWeights<double> random_weights(const ConvSpec& s, std::mt19937_64& rng) {
  auto w = KernelWeights<double>::zeros(s);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (auto& v : w.weight.mutable_data()) v = d(rng);
  if (w.bias) {
    for (auto& v : w.bias->mutable_data()) v = d(rng);
  }
  return w;
}

/// Sparse tensor with each grid site active with probability `density`.
inline t4c::SparseTensor<double> random_sparse(const GridShape& shape, int channels, double density,
                                               std::mt19937_64& rng) {
  t4c::SparseTensor<double> s;
  s.shape = shape;
  s.channels = channels;
  std::bernoulli_distribution on(density);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  for (int b = 0; b < shape[0]; ++b)
    for (int t = 0; t < shape[1]; ++t)
      for (int h = 0; h < shape[2]; ++h)
        for (int w = 0; w < shape[3]; ++w) {
          if (!on(rng)) continue;
          s.coords.push_back({b, t, h, w});
          for (int c = 0; c < channels; ++c) s.feats.push_back(val(rng));
        }
  return s;
}

/// Max-norm relative error max|a - b| / max|b| (b is the reference).
inline double rel_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return scale == 0.0 ? diff : diff / scale;
}

/// Central differences of `loss` with respect to the entries `which` of `x`
/// (all entries when empty). `x` is restored afterwards.
inline std::vector<double> central_diff(std::span<double> x, const std::function<double()>& loss,
                                        const std::vector<std::size_t>& which = {}, double h = 1e-5) {
  std::vector<std::size_t> idx = which;
  if (idx.empty()) {
    idx.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) idx[i] = i;
  }
  std::vector<double> g;
  g.reserve(idx.size());
  for (auto i : idx) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = loss();
    x[i] = keep - h;
    const double down = loss();
    x[i] = keep;
    g.push_back((up - down) / (2 * h));
  }
  return g;
}

/// Central differences that step around ReLU kinks. An entry whose estimates
/// at h and h/10 disagree by more than `tol` (absolute) has a non-differentiable
/// point inside its step and is re-measured at h/10, then h/100. `refined`
/// counts such entries.
inline std::vector<double> kink_aware_diff(std::span<double> x, const std::function<double()>& loss,
                                           const std::vector<std::size_t>& which, double tol,
                                           std::size_t* refined = nullptr, double h = 1e-5) {
  const auto c0 = central_diff(x, loss, which, h);
  const auto c1 = central_diff(x, loss, which, h / 10);
  const auto c2 = central_diff(x, loss, which, h / 100);
  std::vector<double> g(c0.size());
  std::size_t n = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (std::abs(c0[i] - c1[i]) <= tol) {
      g[i] = c0[i];
      continue;
    }
    ++n;
    g[i] = std::abs(c1[i] - c2[i]) <= tol ? c1[i] : c2[i];
  }
  if (refined) *refined += n;
  return g;
}

/// `count` distinct indices below n (all of them when n <= count).
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, std::mt19937_64& rng) {
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  if (n <= count) return all;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace oracle
