#include "t4c/kernels/dense_conv.hpp"

#include <algorithm>
#include <array>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace t4c::kernels {
namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
  return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}
std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}

// Coarse indices p in [lo, hi) with 0 <= p * s + d < fine_n.
struct Range {
  std::int64_t lo;
  std::int64_t hi;
};

Range valid_range(std::int64_t coarse_n, std::int64_t fine_n, int s, int d) {
  const std::int64_t lo = std::max<std::int64_t>(0, ceil_div(-d, s));
  const std::int64_t hi = std::min<std::int64_t>(coarse_n, floor_div(fine_n - 1 - d, s) + 1);
  return {lo, std::max(lo, hi)};
}

// Coarse index p with p * s + d == f, or -1.
std::int64_t coarse_of(std::int64_t f, std::int64_t coarse_n, int s, int d) {
  const std::int64_t num = f - d;
  if (num < 0 || num % s != 0) return -1;
  const std::int64_t p = num / s;
  return p < coarse_n ? p : -1;
}

constexpr int kLanes = 8;

// lanes[j] += x[i * xs] * y[i] for i = j (mod kLanes); association is fixed.
template <class T>
void dot_into_lanes(const T* x, int xs, const T* y, std::int64_t n, std::array<double, kLanes>& lanes) {
  std::int64_t i = 0;
  if (xs == 1) {
    for (; i + kLanes <= n; i += kLanes) {
      for (int j = 0; j < kLanes; ++j) {
        lanes[j] += static_cast<double>(x[i + j]) * static_cast<double>(y[i + j]);
      }
    }
  }
  for (; i < n; ++i) {
    lanes[i % kLanes] += static_cast<double>(x[i * xs]) * static_cast<double>(y[i]);
  }
}

}  // namespace

GridPair conv_grids(const ConvSpec& spec, std::int64_t batch, const Dims3& in_dims) {
  GridPair g;
  g.batch = batch;
  g.fine_channels = spec.in_channels;
  g.coarse_channels = spec.out_channels;
  g.fine = in_dims;
  for (int a = 0; a < 3; ++a) g.coarse[a] = spec.out_extent(a, in_dims[a]);
  g.stride = spec.stride;
  g.taps.reserve(spec.volume());
  for (int k = 0; k < spec.volume(); ++k) g.taps.push_back(spec.offset(k));
  return g;
}

GridPair transposed_grids(const ConvSpec& spec, std::int64_t batch, const Dims3& in_dims,
                          const Dims3& out_dims) {
  GridPair g;
  g.batch = batch;
  g.fine_channels = spec.out_channels;
  g.coarse_channels = spec.in_channels;
  g.fine = out_dims;
  g.coarse = in_dims;
  g.stride = spec.stride;
  g.taps.reserve(spec.volume());
  for (int k = 0; k < spec.volume(); ++k) g.taps.push_back(spec.offset(k));
  return g;
}

WeightLayout conv_layout(const ConvSpec& spec) {
  const std::int64_t co = spec.out_channels;
  return {spec.in_channels * co, co, 1};
}

WeightLayout transposed_layout(const ConvSpec& spec) {
  const std::int64_t co = spec.out_channels;
  return {spec.in_channels * co, 1, co};
}

// ---------------------------------------------------------------------------
// Serial reference: one output site at a time.

namespace serial {

template <class T>
void gather(const GridPair& g, std::span<const T> src, std::span<const T> w, WeightLayout lay,
            std::span<T> dst) {
  const auto& F = g.fine;
  const auto& C = g.coarse;
  const auto fvol = g.fine_volume();
  const auto cvol = g.coarse_volume();
  for (std::int64_t b = 0; b < g.batch; ++b) {
    for (int cc = 0; cc < g.coarse_channels; ++cc) {
      T* D = dst.data() + (b * g.coarse_channels + cc) * cvol;
      for (std::int64_t pt = 0; pt < C[0]; ++pt) {
        for (std::int64_t ph = 0; ph < C[1]; ++ph) {
          for (std::int64_t pw = 0; pw < C[2]; ++pw) {
            T acc = D[(pt * C[1] + ph) * C[2] + pw];
            for (int cf = 0; cf < g.fine_channels; ++cf) {
              const T* S = src.data() + (b * g.fine_channels + cf) * fvol;
              for (std::size_t k = 0; k < g.taps.size(); ++k) {
                const auto& d = g.taps[k];
                const std::int64_t ft = pt * g.stride[0] + d[0];
                const std::int64_t fh = ph * g.stride[1] + d[1];
                const std::int64_t fw = pw * g.stride[2] + d[2];
                if (ft < 0 || ft >= F[0] || fh < 0 || fh >= F[1] || fw < 0 || fw >= F[2]) continue;
                const T a = w[k * lay.tap_stride + cf * lay.fine_stride + cc * lay.coarse_stride];
                acc += a * S[(ft * F[1] + fh) * F[2] + fw];
              }
            }
            D[(pt * C[1] + ph) * C[2] + pw] = acc;
          }
        }
      }
    }
  }
}

template <class T>
void scatter(const GridPair& g, std::span<const T> src, std::span<const T> w, WeightLayout lay,
             std::span<T> dst) {
  const auto& F = g.fine;
  const auto& C = g.coarse;
  const auto fvol = g.fine_volume();
  const auto cvol = g.coarse_volume();
  for (std::int64_t b = 0; b < g.batch; ++b) {
    for (int cf = 0; cf < g.fine_channels; ++cf) {
      T* D = dst.data() + (b * g.fine_channels + cf) * fvol;
      for (std::int64_t ft = 0; ft < F[0]; ++ft) {
        for (std::int64_t fh = 0; fh < F[1]; ++fh) {
          for (std::int64_t fw = 0; fw < F[2]; ++fw) {
            T acc = D[(ft * F[1] + fh) * F[2] + fw];
            for (int cc = 0; cc < g.coarse_channels; ++cc) {
              const T* S = src.data() + (b * g.coarse_channels + cc) * cvol;
              for (std::size_t k = 0; k < g.taps.size(); ++k) {
                const auto& d = g.taps[k];
                const auto pt = coarse_of(ft, C[0], g.stride[0], d[0]);
                const auto ph = coarse_of(fh, C[1], g.stride[1], d[1]);
                const auto pw = coarse_of(fw, C[2], g.stride[2], d[2]);
                if (pt < 0 || ph < 0 || pw < 0) continue;
                const T a = w[k * lay.tap_stride + cf * lay.fine_stride + cc * lay.coarse_stride];
                acc += a * S[(pt * C[1] + ph) * C[2] + pw];
              }
            }
            D[(ft * F[1] + fh) * F[2] + fw] = acc;
          }
        }
      }
    }
  }
}

template <class T>
void weight_grad(const GridPair& g, std::span<const T> fine, std::span<const T> coarse,
                 WeightLayout lay, std::span<T> grad) {
  const auto& F = g.fine;
  const auto& C = g.coarse;
  const auto fvol = g.fine_volume();
  const auto cvol = g.coarse_volume();
  for (std::size_t k = 0; k < g.taps.size(); ++k) {
    const auto& d = g.taps[k];
    for (int cf = 0; cf < g.fine_channels; ++cf) {
      for (int cc = 0; cc < g.coarse_channels; ++cc) {
        // Products land in lane (i mod kLanes), i counting valid sites along w.
        std::array<double, kLanes> lanes{};
        for (std::int64_t b = 0; b < g.batch; ++b) {
          const T* X = fine.data() + (b * g.fine_channels + cf) * fvol;
          const T* Y = coarse.data() + (b * g.coarse_channels + cc) * cvol;
          for (std::int64_t pt = 0; pt < C[0]; ++pt) {
            for (std::int64_t ph = 0; ph < C[1]; ++ph) {
              std::int64_t i = 0;
              for (std::int64_t pw = 0; pw < C[2]; ++pw) {
                const std::int64_t ft = pt * g.stride[0] + d[0];
                const std::int64_t fh = ph * g.stride[1] + d[1];
                const std::int64_t fw = pw * g.stride[2] + d[2];
                if (ft < 0 || ft >= F[0] || fh < 0 || fh >= F[1] || fw < 0 || fw >= F[2]) continue;
                lanes[i++ % kLanes] += static_cast<double>(X[(ft * F[1] + fh) * F[2] + fw]) *
                                       static_cast<double>(Y[(pt * C[1] + ph) * C[2] + pw]);
              }
            }
          }
        }
        double acc = 0.0;
        for (double v : lanes) acc += v;
        grad[k * lay.tap_stride + cf * lay.fine_stride + cc * lay.coarse_stride] = static_cast<T>(acc);
      }
    }
  }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP: each job owns one (batch, channel) plane of the destination and
// streams contiguous rows through it, one (channel, tap) weight at a time.

namespace parallel {

template <class T>
void gather(const GridPair& g, std::span<const T> src, std::span<const T> w, WeightLayout lay,
            std::span<T> dst) {
  const auto F = g.fine;
  const auto C = g.coarse;
  const auto fvol = g.fine_volume();
  const auto cvol = g.coarse_volume();
  const std::int64_t jobs = g.batch * g.coarse_channels;
  const int s0 = g.stride[0], s1 = g.stride[1], s2 = g.stride[2];

#pragma omp parallel for schedule(static)
  for (std::int64_t job = 0; job < jobs; ++job) {
    const std::int64_t b = job / g.coarse_channels;
    const int cc = static_cast<int>(job % g.coarse_channels);
    T* D = dst.data() + job * cvol;
    for (int cf = 0; cf < g.fine_channels; ++cf) {
      const T* S = src.data() + (b * g.fine_channels + cf) * fvol;
      for (std::size_t k = 0; k < g.taps.size(); ++k) {
        const auto& d = g.taps[k];
        const T a = w[k * lay.tap_stride + cf * lay.fine_stride + cc * lay.coarse_stride];
        const Range rt = valid_range(C[0], F[0], s0, d[0]);
        const Range rh = valid_range(C[1], F[1], s1, d[1]);
        const Range rw = valid_range(C[2], F[2], s2, d[2]);
        for (std::int64_t pt = rt.lo; pt < rt.hi; ++pt) {
          const std::int64_t ft = pt * s0 + d[0];
          for (std::int64_t ph = rh.lo; ph < rh.hi; ++ph) {
            const std::int64_t fh = ph * s1 + d[1];
            T* drow = D + (pt * C[1] + ph) * C[2];
            const T* srow = S + (ft * F[1] + fh) * F[2] + d[2];
            if (s2 == 1) {
              for (std::int64_t pw = rw.lo; pw < rw.hi; ++pw) drow[pw] += a * srow[pw];
            } else {
              for (std::int64_t pw = rw.lo; pw < rw.hi; ++pw) drow[pw] += a * srow[pw * s2];
            }
          }
        }
      }
    }
  }
}

template <class T>
void scatter(const GridPair& g, std::span<const T> src, std::span<const T> w, WeightLayout lay,
             std::span<T> dst) {
  const auto F = g.fine;
  const auto C = g.coarse;
  const auto fvol = g.fine_volume();
  const auto cvol = g.coarse_volume();
  const std::int64_t jobs = g.batch * g.fine_channels;
  const int s0 = g.stride[0], s1 = g.stride[1], s2 = g.stride[2];

#pragma omp parallel for schedule(static)
  for (std::int64_t job = 0; job < jobs; ++job) {
    const std::int64_t b = job / g.fine_channels;
    const int cf = static_cast<int>(job % g.fine_channels);
    T* D = dst.data() + job * fvol;
    for (int cc = 0; cc < g.coarse_channels; ++cc) {
      const T* S = src.data() + (b * g.coarse_channels + cc) * cvol;
      for (std::size_t k = 0; k < g.taps.size(); ++k) {
        const auto& d = g.taps[k];
        const T a = w[k * lay.tap_stride + cf * lay.fine_stride + cc * lay.coarse_stride];
        const Range rt = valid_range(C[0], F[0], s0, d[0]);
        const Range rh = valid_range(C[1], F[1], s1, d[1]);
        const Range rw = valid_range(C[2], F[2], s2, d[2]);
        for (std::int64_t pt = rt.lo; pt < rt.hi; ++pt) {
          const std::int64_t ft = pt * s0 + d[0];
          for (std::int64_t ph = rh.lo; ph < rh.hi; ++ph) {
            const std::int64_t fh = ph * s1 + d[1];
            T* drow = D + (ft * F[1] + fh) * F[2] + d[2];
            const T* srow = S + (pt * C[1] + ph) * C[2];
            if (s2 == 1) {
              for (std::int64_t pw = rw.lo; pw < rw.hi; ++pw) drow[pw] += a * srow[pw];
            } else {
              for (std::int64_t pw = rw.lo; pw < rw.hi; ++pw) drow[pw * s2] += a * srow[pw];
            }
          }
        }
      }
    }
  }
}

template <class T>
void weight_grad(const GridPair& g, std::span<const T> fine, std::span<const T> coarse,
                 WeightLayout lay, std::span<T> grad) {
  const auto F = g.fine;
  const auto C = g.coarse;
  const auto fvol = g.fine_volume();
  const auto cvol = g.coarse_volume();
  const std::int64_t jobs = static_cast<std::int64_t>(g.fine_channels) * g.coarse_channels;
  const int s0 = g.stride[0], s1 = g.stride[1], s2 = g.stride[2];

#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t job = 0; job < jobs; ++job) {
    const int cf = static_cast<int>(job / g.coarse_channels);
    const int cc = static_cast<int>(job % g.coarse_channels);
    for (std::size_t k = 0; k < g.taps.size(); ++k) {
      const auto& d = g.taps[k];
      const Range rt = valid_range(C[0], F[0], s0, d[0]);
      const Range rh = valid_range(C[1], F[1], s1, d[1]);
      const Range rw = valid_range(C[2], F[2], s2, d[2]);
      std::array<double, kLanes> lanes{};
      for (std::int64_t b = 0; b < g.batch; ++b) {
        const T* X = fine.data() + (b * g.fine_channels + cf) * fvol;
        const T* Y = coarse.data() + (b * g.coarse_channels + cc) * cvol;
        for (std::int64_t pt = rt.lo; pt < rt.hi; ++pt) {
          const std::int64_t ft = pt * s0 + d[0];
          for (std::int64_t ph = rh.lo; ph < rh.hi; ++ph) {
            const std::int64_t fh = ph * s1 + d[1];
            const T* xrow = X + (ft * F[1] + fh) * F[2] + d[2] + rw.lo * s2;
            const T* yrow = Y + (pt * C[1] + ph) * C[2] + rw.lo;
            dot_into_lanes(xrow, s2, yrow, rw.hi - rw.lo, lanes);
          }
        }
      }
      double acc = 0.0;
      for (double v : lanes) acc += v;
      grad[k * lay.tap_stride + cf * lay.fine_stride + cc * lay.coarse_stride] = static_cast<T>(acc);
    }
  }
}

}  // namespace parallel

#define T4C_INSTANTIATE(T)                                                                         \
  template void serial::gather<T>(const GridPair&, std::span<const T>, std::span<const T>,         \
                                  WeightLayout, std::span<T>);                                     \
  template void serial::scatter<T>(const GridPair&, std::span<const T>, std::span<const T>,        \
                                   WeightLayout, std::span<T>);                                    \
  template void serial::weight_grad<T>(const GridPair&, std::span<const T>, std::span<const T>,    \
                                       WeightLayout, std::span<T>);                                \
  template void parallel::gather<T>(const GridPair&, std::span<const T>, std::span<const T>,       \
                                    WeightLayout, std::span<T>);                                   \
  template void parallel::scatter<T>(const GridPair&, std::span<const T>, std::span<const T>,      \
                                     WeightLayout, std::span<T>);                                  \
  template void parallel::weight_grad<T>(const GridPair&, std::span<const T>, std::span<const T>,  \
                                         WeightLayout, std::span<T>);

T4C_INSTANTIATE(float)
T4C_INSTANTIATE(double)
#undef T4C_INSTANTIATE

}  // namespace t4c::kernels
