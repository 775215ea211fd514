#include "t4c/tensor.hpp"

#include <atomic>
#include <cmath>

#include "t4c/backend.hpp"
#include "t4c/conv_spec.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace t4c {

std::int64_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

void require_rank(const Shape& s, std::int64_t rank, const char* what) {
  if (static_cast<std::int64_t>(s.size()) != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(s));
  }
}

namespace {
std::atomic<Backend> g_backend{Backend::Parallel};
}

Backend kernel_backend() noexcept { return g_backend.load(std::memory_order_relaxed); }
void set_kernel_backend(Backend b) noexcept { g_backend.store(b, std::memory_order_relaxed); }

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) noexcept {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

void ConvSpec::validate() const {
  static const char* kAxis[] = {"t", "h", "w"};
  for (int a = 0; a < 3; ++a) {
    if (kernel[a] < 1 || stride[a] < 1 || padding[a] < 0) {
      throw ShapeError(std::string("conv spec: invalid kernel/stride/padding on axis ") + kAxis[a]);
    }
  }
  if (in_channels <= 0 || out_channels <= 0) {
    throw ShapeError("conv spec: channel counts must be positive");
  }
}

template <class T>
void KernelWeights<T>::check(const ConvSpec& spec) const {
  const Shape expect{spec.volume(), spec.in_channels, spec.out_channels};
  if (weight.shape() != expect) {
    throw ShapeError("kernel weights " + shape_str(weight.shape()) + " do not match spec " +
                     shape_str(expect) + " [taps, in_channels, out_channels]");
  }
  if (spec.has_bias != bias.has_value()) {
    throw ShapeError(spec.has_bias ? "conv spec expects a bias" : "conv spec has no bias");
  }
  if (bias && bias->shape() != Shape{spec.out_channels}) {
    throw ShapeError("bias " + shape_str(bias->shape()) + " does not match out_channels " +
                     std::to_string(spec.out_channels));
  }
}

template <class T>
double KernelWeights<T>::fan_in_bound(const ConvSpec& spec) {
  return std::sqrt(1.0 / (static_cast<double>(spec.volume()) * spec.in_channels));
}

template struct KernelWeights<float>;
template struct KernelWeights<double>;

}  // namespace t4c
