#include "t4c/sparse_ops.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "t4c/backend.hpp"
#include "t4c/kernels/gather_scatter.hpp"

namespace t4c {
namespace {

template <class T>
void check_plan(const SparseTensor<T>& input, const KernelWeights<T>& w, const Rulebook& rb,
                const char* op) {
  if (w.weight.rank() != 3) throw ShapeError(std::string(op) + ": weights must be [taps, C_in, C_out]");
  if (input.channels != w.weight.dim(1)) {
    throw ShapeError(std::string(op) + ": input has " + std::to_string(input.channels) +
                     " channels but the weights expect " + std::to_string(w.weight.dim(1)));
  }
  if (static_cast<std::size_t>(w.weight.dim(0)) != rb.taps.size()) {
    throw ShapeError(std::string(op) + ": weight tap count differs from the rulebook");
  }
  if (rb.in_rows != input.rows()) {
    throw ShapeError(std::string(op) + ": rulebook was built for " + std::to_string(rb.in_rows) +
                     " input rows, got " + std::to_string(input.rows()));
  }
  if (w.bias && w.bias->numel() != w.weight.dim(2)) throw ShapeError(std::string(op) + ": bias size");
}

}  // namespace

template <class T>
SparseTensor<T> sparse_conv_forward(const SparseTensor<T>& input, const KernelWeights<T>& w,
                                    const Rulebook& rb) {
  check_plan(input, w, rb, "sparse_conv_forward");
  const int cin = input.channels;
  const int cout = static_cast<int>(w.weight.dim(2));
  SparseTensor<T> out;
  out.coords = rb.out_coords;
  out.shape = rb.out_shape;
  out.channels = cout;
  out.feats.assign(rb.out_coords.size() * static_cast<std::size_t>(cout), T(0));
  if (kernel_backend() == Backend::Serial) {
    kernels::serial::sparse_forward<T>(rb.taps, input.feats, cin, w.weight.data(), cout, out.feats);
  } else {
    kernels::parallel::sparse_forward<T>(rb.taps, input.feats, cin, w.weight.data(), cout, out.feats);
  }
  if (w.bias) {
    auto b = w.bias->data();
    for (std::int64_t i = 0; i < out.rows(); ++i) {
      T* r = out.row(i);
      for (int c = 0; c < cout; ++c) r[c] += b[c];
    }
  }
  return out;
}

template <class T>
SparseConvGrads<T> sparse_conv_backward(const std::vector<T>& grad_out, const SparseTensor<T>& cached_input,
                                        const KernelWeights<T>& w, const Rulebook& rb,
                                        bool need_input) {
  check_plan(cached_input, w, rb, "sparse_conv_backward");
  const int cin = cached_input.channels;
  const int cout = static_cast<int>(w.weight.dim(2));
  if (grad_out.size() != rb.out_coords.size() * static_cast<std::size_t>(cout)) {
    throw ShapeError("sparse_conv_backward: grad_out has " + std::to_string(grad_out.size()) +
                     " values, expected " + std::to_string(rb.out_coords.size()) + " rows of " +
                     std::to_string(cout));
  }
  SparseConvGrads<T> g{{}, Tensor<T>(w.weight.shape()), std::nullopt};
  if (need_input) g.input.assign(cached_input.feats.size(), T(0));
  if (kernel_backend() == Backend::Serial) {
    if (need_input) {
      kernels::serial::sparse_backward_data<T>(rb.taps, grad_out, cout, w.weight.data(), cin, g.input);
    }
    kernels::serial::sparse_backward_weight<T>(rb.taps, cached_input.feats, cin, grad_out, cout,
                                               g.weight.mutable_data());
  } else {
    if (need_input) {
      kernels::parallel::sparse_backward_data<T>(rb.taps, grad_out, cout, w.weight.data(), cin, g.input);
    }
    kernels::parallel::sparse_backward_weight<T>(rb.taps, cached_input.feats, cin, grad_out, cout,
                                                 g.weight.mutable_data());
  }
  if (w.bias) {
    Tensor<T> gb({cout});
    const std::size_t rows = rb.out_coords.size();
    for (int c = 0; c < cout; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < rows; ++i) acc += grad_out[i * cout + c];
      gb[c] = static_cast<T>(acc);
    }
    g.bias = std::move(gb);
  }
  return g;
}

template <class T>
SparseTensor<T> sparse_transposed_conv(const SparseTensor<T>& input, const ConvSpec& spec,
                                       const KernelWeights<T>& w, const std::vector<Coord>& target,
                                       const GridShape& target_shape) {
  const auto rb = build_transposed_rulebook(input.coords, input.shape, spec, target, target_shape);
  return sparse_conv_forward(input, w, rb);
}

template <class T>
SparsePoolResult<T> sparse_maxpool(const SparseTensor<T>& input) {
  const int C = input.channels;
  SparsePoolResult<T> r;
  auto& out = r.output;
  out.channels = C;
  out.shape = {input.shape[0], (input.shape[1] + 1) / 2, (input.shape[2] + 1) / 2, (input.shape[3] + 1) / 2};

  // Pooled keys are not monotone in input order; sort and index them.
  std::vector<std::uint64_t> keys(input.coords.size());
  for (std::size_t i = 0; i < input.coords.size(); ++i) {
    const auto& c = input.coords[i];
    keys[i] = pack_coord({c[0], c[1] / 2, c[2] / 2, c[3] / 2});
  }
  std::vector<std::uint64_t> uniq = keys;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  out.coords.reserve(uniq.size());
  for (auto k : uniq) out.coords.push_back(unpack_coord(k));

  out.feats.assign(uniq.size() * C, T(0));
  r.argmax.assign(uniq.size() * C, -1);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto o = std::lower_bound(uniq.begin(), uniq.end(), keys[i]) - uniq.begin();
    const T* x = input.row(static_cast<std::int64_t>(i));
    T* y = out.row(o);
    std::int32_t* am = r.argmax.data() + o * C;
    for (int c = 0; c < C; ++c) {
      if (am[c] < 0 || x[c] > y[c]) {
        y[c] = x[c];
        am[c] = static_cast<std::int32_t>(i);
      }
    }
  }
  return r;
}

template <class T>
std::vector<T> sparse_maxpool_backward(const std::vector<T>& grad_out, const std::vector<std::int32_t>& argmax,
                                       int channels, std::int64_t input_rows) {
  if (grad_out.size() != argmax.size()) throw ShapeError("sparse_maxpool_backward: size mismatch");
  std::vector<T> gi(static_cast<std::size_t>(input_rows) * channels, T(0));
  for (std::size_t j = 0; j < argmax.size(); ++j) {
    const auto c = static_cast<std::int64_t>(j % channels);
    gi[static_cast<std::size_t>(argmax[j]) * channels + c] += grad_out[j];
  }
  return gi;
}

template <class T>
SparseTensor<T> sparse_relu(const SparseTensor<T>& x) {
  SparseTensor<T> y = x;
  for (auto& v : y.feats) v = v > T(0) ? v : T(0);
  return y;
}

template <class T>
std::vector<T> sparse_relu_backward(const std::vector<T>& grad_out, const SparseTensor<T>& cached_input) {
  if (grad_out.size() != cached_input.feats.size()) throw ShapeError("sparse_relu_backward: size mismatch");
  std::vector<T> g(grad_out.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = cached_input.feats[i] > T(0) ? grad_out[i] : T(0);
  return g;
}

template <class T>
SparseConcat<T> sparse_concat(const SparseTensor<T>& a, const SparseTensor<T>& b) {
  if (a.shape != b.shape) throw ShapeError("sparse_concat: dense shapes differ");
  SparseConcat<T> r;
  auto& out = r.output;
  out.shape = a.shape;
  out.channels = a.channels + b.channels;
  if (a.coords == b.coords) {
    out.coords = a.coords;
    r.a_rows.resize(a.coords.size());
    std::iota(r.a_rows.begin(), r.a_rows.end(), 0);
    r.b_rows = r.a_rows;
  } else {
    std::size_t i = 0, j = 0;
    while (i < a.coords.size() || j < b.coords.size()) {
      const bool take_a = j == b.coords.size() || (i < a.coords.size() && !(b.coords[j] < a.coords[i]));
      const bool take_b = i == a.coords.size() || (j < b.coords.size() && !(a.coords[i] < b.coords[j]));
      const auto row = static_cast<std::int32_t>(out.coords.size());
      out.coords.push_back(take_a ? a.coords[i] : b.coords[j]);
      if (take_a) { r.a_rows.push_back(row); ++i; }
      if (take_b) { r.b_rows.push_back(row); ++j; }
    }
  }
  out.feats.assign(out.coords.size() * out.channels, T(0));
  for (std::size_t i = 0; i < r.a_rows.size(); ++i) {
    std::copy_n(a.row(static_cast<std::int64_t>(i)), a.channels, out.row(r.a_rows[i]));
  }
  for (std::size_t j = 0; j < r.b_rows.size(); ++j) {
    std::copy_n(b.row(static_cast<std::int64_t>(j)), b.channels, out.row(r.b_rows[j]) + a.channels);
  }
  return r;
}

#define T4C_INSTANTIATE(T)                                                                          \
  template SparseTensor<T> sparse_conv_forward(const SparseTensor<T>&, const KernelWeights<T>&,    \
                                               const Rulebook&);                                    \
  template SparseConvGrads<T> sparse_conv_backward(const std::vector<T>&, const SparseTensor<T>&,  \
                                                   const KernelWeights<T>&, const Rulebook&, bool); \
  template SparseTensor<T> sparse_transposed_conv(const SparseTensor<T>&, const ConvSpec&,         \
                                                  const KernelWeights<T>&, const std::vector<Coord>&, \
                                                  const GridShape&);                                \
  template SparsePoolResult<T> sparse_maxpool(const SparseTensor<T>&);                              \
  template std::vector<T> sparse_maxpool_backward(const std::vector<T>&,                            \
                                                  const std::vector<std::int32_t>&, int, std::int64_t); \
  template SparseTensor<T> sparse_relu(const SparseTensor<T>&);                                     \
  template std::vector<T> sparse_relu_backward(const std::vector<T>&, const SparseTensor<T>&);      \
  template SparseConcat<T> sparse_concat(const SparseTensor<T>&, const SparseTensor<T>&);

T4C_INSTANTIATE(float)
T4C_INSTANTIATE(double)
#undef T4C_INSTANTIATE

}  // namespace t4c
