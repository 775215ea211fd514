#include "t4c/kernels/gather_scatter.hpp"

#include <algorithm>
#include <cstdint>

namespace t4c::kernels {
namespace {

// dst[0..n) = sum_r x[r] * M[r][0..n), r ascending.
template <class T>
inline void row_times_matrix(const T* x, int rows, const T* M, int n, T* dst) {
  std::fill_n(dst, n, T(0));
  for (int r = 0; r < rows; ++r) {
    const T a = x[r];
    const T* m = M + static_cast<std::int64_t>(r) * n;
    for (int j = 0; j < n; ++j) dst[j] += a * m[j];
  }
}

template <class T>
inline void add_row(const T* src, int n, T* dst) {
  for (int j = 0; j < n; ++j) dst[j] += src[j];
}

// Per-tap [C_out, C_in] copies of W so the data gradient is also a row-times-matrix.
template <class T>
std::vector<T> transpose_taps(std::span<const T> w, std::size_t taps, int cin, int cout) {
  std::vector<T> wt(w.size());
  const std::int64_t block = static_cast<std::int64_t>(cin) * cout;
  for (std::size_t k = 0; k < taps; ++k) {
    const T* src = w.data() + k * block;
    T* dst = wt.data() + k * block;
    for (int ci = 0; ci < cin; ++ci) {
      for (int co = 0; co < cout; ++co) dst[co * cin + ci] = src[ci * cout + co];
    }
  }
  return wt;
}

template <class T>
void outer_accumulate(const PairList& pl, std::span<const T> in, int cin, std::span<const T> go,
                      int cout, std::vector<double>& acc) {
  std::fill(acc.begin(), acc.end(), 0.0);
  for (std::size_t p = 0; p < pl.size(); ++p) {
    const T* x = in.data() + static_cast<std::int64_t>(pl.in_rows[p]) * cin;
    const T* g = go.data() + static_cast<std::int64_t>(pl.out_rows[p]) * cout;
    for (int ci = 0; ci < cin; ++ci) {
      const double a = x[ci];
      double* row = acc.data() + static_cast<std::int64_t>(ci) * cout;
      for (int co = 0; co < cout; ++co) row[co] += a * static_cast<double>(g[co]);
    }
  }
}

}  // namespace

namespace serial {

template <class T>
void sparse_forward(const std::vector<PairList>& taps, std::span<const T> in, int cin,
                    std::span<const T> w, int cout, std::span<T> out) {
  std::vector<T> tmp(static_cast<std::size_t>(cout));
  const std::int64_t block = static_cast<std::int64_t>(cin) * cout;
  for (std::size_t k = 0; k < taps.size(); ++k) {
    const auto& pl = taps[k];
    for (std::size_t p = 0; p < pl.size(); ++p) {
      row_times_matrix(in.data() + static_cast<std::int64_t>(pl.in_rows[p]) * cin, cin,
                       w.data() + k * block, cout, tmp.data());
      add_row(tmp.data(), cout, out.data() + static_cast<std::int64_t>(pl.out_rows[p]) * cout);
    }
  }
}

template <class T>
void sparse_backward_data(const std::vector<PairList>& taps, std::span<const T> grad_out, int cout,
                          std::span<const T> w, int cin, std::span<T> grad_in) {
  const auto wt = transpose_taps(w, taps.size(), cin, cout);
  std::vector<T> tmp(static_cast<std::size_t>(cin));
  const std::int64_t block = static_cast<std::int64_t>(cin) * cout;
  for (std::size_t k = 0; k < taps.size(); ++k) {
    const auto& pl = taps[k];
    for (std::size_t p = 0; p < pl.size(); ++p) {
      row_times_matrix(grad_out.data() + static_cast<std::int64_t>(pl.out_rows[p]) * cout, cout,
                       wt.data() + k * block, cin, tmp.data());
      add_row(tmp.data(), cin, grad_in.data() + static_cast<std::int64_t>(pl.in_rows[p]) * cin);
    }
  }
}

template <class T>
void sparse_backward_weight(const std::vector<PairList>& taps, std::span<const T> in, int cin,
                            std::span<const T> grad_out, int cout, std::span<T> grad_w) {
  const std::int64_t block = static_cast<std::int64_t>(cin) * cout;
  std::vector<double> acc(static_cast<std::size_t>(block));
  for (std::size_t k = 0; k < taps.size(); ++k) {
    outer_accumulate(taps[k], in, cin, grad_out, cout, acc);
    std::transform(acc.begin(), acc.end(), grad_w.begin() + k * block,
                   [](double v) { return static_cast<T>(v); });
  }
}

}  // namespace serial

namespace parallel {

template <class T>
void sparse_forward(const std::vector<PairList>& taps, std::span<const T> in, int cin,
                    std::span<const T> w, int cout, std::span<T> out) {
  const std::int64_t block = static_cast<std::int64_t>(cin) * cout;
#pragma omp parallel
  {
    std::vector<T> tmp(static_cast<std::size_t>(cout));
    for (std::size_t k = 0; k < taps.size(); ++k) {
      const auto& pl = taps[k];
      const auto n = static_cast<std::int64_t>(pl.size());
      const T* wk = w.data() + k * block;
#pragma omp for schedule(static)
      for (std::int64_t p = 0; p < n; ++p) {
        row_times_matrix(in.data() + static_cast<std::int64_t>(pl.in_rows[p]) * cin, cin, wk, cout,
                         tmp.data());
        add_row(tmp.data(), cout, out.data() + static_cast<std::int64_t>(pl.out_rows[p]) * cout);
      }
    }
  }
}

template <class T>
void sparse_backward_data(const std::vector<PairList>& taps, std::span<const T> grad_out, int cout,
                          std::span<const T> w, int cin, std::span<T> grad_in) {
  const auto wt = transpose_taps(w, taps.size(), cin, cout);
  const std::int64_t block = static_cast<std::int64_t>(cin) * cout;
#pragma omp parallel
  {
    std::vector<T> tmp(static_cast<std::size_t>(cin));
    for (std::size_t k = 0; k < taps.size(); ++k) {
      const auto& pl = taps[k];
      const auto n = static_cast<std::int64_t>(pl.size());
      const T* wk = wt.data() + k * block;
#pragma omp for schedule(static)
      for (std::int64_t p = 0; p < n; ++p) {
        row_times_matrix(grad_out.data() + static_cast<std::int64_t>(pl.out_rows[p]) * cout, cout, wk,
                         cin, tmp.data());
        add_row(tmp.data(), cin, grad_in.data() + static_cast<std::int64_t>(pl.in_rows[p]) * cin);
      }
    }
  }
}

template <class T>
void sparse_backward_weight(const std::vector<PairList>& taps, std::span<const T> in, int cin,
                            std::span<const T> grad_out, int cout, std::span<T> grad_w) {
  const std::int64_t block = static_cast<std::int64_t>(cin) * cout;
  const auto ntaps = static_cast<std::int64_t>(taps.size());
#pragma omp parallel
  {
    std::vector<double> acc(static_cast<std::size_t>(block));
#pragma omp for schedule(dynamic, 1)
    for (std::int64_t k = 0; k < ntaps; ++k) {
      outer_accumulate(taps[k], in, cin, grad_out, cout, acc);
      std::transform(acc.begin(), acc.end(), grad_w.begin() + k * block,
                     [](double v) { return static_cast<T>(v); });
    }
  }
}

}  // namespace parallel

#define T4C_INSTANTIATE(NS, T)                                                                     \
  template void NS::sparse_forward<T>(const std::vector<PairList>&, std::span<const T>, int,       \
                                      std::span<const T>, int, std::span<T>);                      \
  template void NS::sparse_backward_data<T>(const std::vector<PairList>&, std::span<const T>, int, \
                                            std::span<const T>, int, std::span<T>);                \
  template void NS::sparse_backward_weight<T>(const std::vector<PairList>&, std::span<const T>,    \
                                              int, std::span<const T>, int, std::span<T>);

T4C_INSTANTIATE(serial, float)
T4C_INSTANTIATE(serial, double)
T4C_INSTANTIATE(parallel, float)
T4C_INSTANTIATE(parallel, double)
#undef T4C_INSTANTIATE

}  // namespace t4c::kernels
