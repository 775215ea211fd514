#include "t4c/dense_ops.hpp"

#include <algorithm>
#include <string>

#include "t4c/backend.hpp"
#include "t4c/kernels/dense_conv.hpp"

namespace t4c {
namespace {

using kernels::Dims3;

const char* kAxisNames[] = {"batch", "channel", "t", "h", "w"};

Dims3 spatial(const Shape& s) { return {s[2], s[3], s[4]}; }

void check_conv_input(const Shape& in, const ConvSpec& spec, const char* op) {
  spec.validate();
  require_rank(in, 5, op);
  if (in[1] != spec.in_channels) {
    throw ShapeError(std::string(op) + ": input axis " + kAxisNames[1] + " has " +
                     std::to_string(in[1]) + " entries but spec.in_channels is " +
                     std::to_string(spec.in_channels));
  }
  for (int a = 0; a < 3; ++a) {
    if (spec.out_extent(a, in[2 + a]) <= 0) {
      throw ShapeError(std::string(op) + ": input axis " + kAxisNames[2 + a] + " (" +
                       std::to_string(in[2 + a]) + ") is smaller than the kernel");
    }
  }
}

template <class T>
void fill_bias(Tensor<T>& out, const std::optional<Tensor<T>>& bias) {
  if (!bias) return;
  const auto B = out.dim(0);
  const auto C = out.dim(1);
  const auto vol = out.numel() / (B * C);
  auto o = out.mutable_data();
  auto bv = bias->data();
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      std::fill_n(o.data() + (b * C + c) * vol, vol, bv[c]);
    }
  }
}

template <class T>
Tensor<T> bias_grad(const Tensor<T>& grad_out) {
  const auto B = grad_out.dim(0);
  const auto C = grad_out.dim(1);
  const auto vol = grad_out.numel() / (B * C);
  Tensor<T> g({C});
  auto go = grad_out.data();
  for (std::int64_t c = 0; c < C; ++c) {
    double acc = 0.0;
    for (std::int64_t b = 0; b < B; ++b) {
      const T* row = go.data() + (b * C + c) * vol;
      for (std::int64_t i = 0; i < vol; ++i) acc += row[i];
    }
    g[c] = static_cast<T>(acc);
  }
  return g;
}

template <class T>
void run_gather(const kernels::GridPair& g, std::span<const T> src, std::span<const T> w,
                kernels::WeightLayout lay, std::span<T> dst) {
  if (kernel_backend() == Backend::Serial) {
    kernels::serial::gather<T>(g, src, w, lay, dst);
  } else {
    kernels::parallel::gather<T>(g, src, w, lay, dst);
  }
}

template <class T>
void run_scatter(const kernels::GridPair& g, std::span<const T> src, std::span<const T> w,
                 kernels::WeightLayout lay, std::span<T> dst) {
  if (kernel_backend() == Backend::Serial) {
    kernels::serial::scatter<T>(g, src, w, lay, dst);
  } else {
    kernels::parallel::scatter<T>(g, src, w, lay, dst);
  }
}

template <class T>
void run_weight_grad(const kernels::GridPair& g, std::span<const T> fine, std::span<const T> coarse,
                     kernels::WeightLayout lay, std::span<T> grad) {
  if (kernel_backend() == Backend::Serial) {
    kernels::serial::weight_grad<T>(g, fine, coarse, lay, grad);
  } else {
    kernels::parallel::weight_grad<T>(g, fine, coarse, lay, grad);
  }
}

ConvSpec as_3d(const ConvSpec& spec, const char* op) {
  if (spec.kernel[0] != 1 || spec.padding[0] != 0 || spec.stride[0] != 1) {
    throw ShapeError(std::string(op) + ": a 2D spec needs kernel/stride 1 and padding 0 on the t axis");
  }
  return spec;
}

Shape lift_2d(const Shape& s, const char* op) {
  require_rank(s, 4, op);
  return {s[0], s[1], 1, s[2], s[3]};
}

Shape drop_t(const Shape& s) { return {s[0], s[1], s[3], s[4]}; }

}  // namespace

template <class T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const ConvSpec& spec, const KernelWeights<T>& w) {
  check_conv_input(input.shape(), spec, "conv3d_forward");
  w.check(spec);
  const auto g = kernels::conv_grids(spec, input.dim(0), spatial(input.shape()));
  Tensor<T> out({input.dim(0), spec.out_channels, g.coarse[0], g.coarse[1], g.coarse[2]});
  fill_bias(out, w.bias);
  run_gather<T>(g, input.data(), w.weight.data(), kernels::conv_layout(spec), out.mutable_data());
  return out;
}

template <class T>
ConvGrads<T> conv3d_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input,
                             const ConvSpec& spec, const KernelWeights<T>& w, bool need_input) {
  check_conv_input(cached_input.shape(), spec, "conv3d_backward");
  w.check(spec);
  const auto g = kernels::conv_grids(spec, cached_input.dim(0), spatial(cached_input.shape()));
  const Shape expect{cached_input.dim(0), spec.out_channels, g.coarse[0], g.coarse[1], g.coarse[2]};
  require_same_shape(grad_out.shape(), expect, "conv3d_backward grad_out");
  const auto lay = kernels::conv_layout(spec);

  ConvGrads<T> grads{Tensor<T>(), Tensor<T>(w.weight.shape()), std::nullopt};
  if (need_input) {
    grads.input = Tensor<T>(cached_input.shape());
    run_scatter<T>(g, grad_out.data(), w.weight.data(), lay, grads.input.mutable_data());
  }
  run_weight_grad<T>(g, cached_input.data(), grad_out.data(), lay, grads.weight.mutable_data());
  if (w.bias) grads.bias = bias_grad(grad_out);
  return grads;
}

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvSpec& spec, const KernelWeights<T>& w) {
  const auto lifted = input.reshape(lift_2d(input.shape(), "conv2d_forward"));
  const auto out = conv3d_forward(lifted, as_3d(spec, "conv2d_forward"), w);
  return out.reshape(drop_t(out.shape()));
}

template <class T>
ConvGrads<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input,
                             const ConvSpec& spec, const KernelWeights<T>& w, bool need_input) {
  const auto in = cached_input.reshape(lift_2d(cached_input.shape(), "conv2d_backward"));
  const auto go = grad_out.reshape(lift_2d(grad_out.shape(), "conv2d_backward"));
  auto grads = conv3d_backward(go, in, as_3d(spec, "conv2d_backward"), w, need_input);
  if (need_input) grads.input = grads.input.reshape(cached_input.shape());
  return grads;
}

template <class T>
Tensor<T> conv_transposed3d_forward(const Tensor<T>& input, const ConvSpec& spec,
                                    const KernelWeights<T>& w, const std::vector<std::int64_t>& out_dims) {
  spec.validate();
  require_rank(input.shape(), 5, "conv_transposed3d_forward");
  if (input.dim(1) != spec.in_channels) {
    throw ShapeError("conv_transposed3d_forward: input axis channel has " + std::to_string(input.dim(1)) +
                     " entries but spec.in_channels is " + std::to_string(spec.in_channels));
  }
  if (out_dims.size() != 3) throw ShapeError("conv_transposed3d_forward: out_dims must name (t, h, w)");
  w.check(spec);
  const Dims3 od{out_dims[0], out_dims[1], out_dims[2]};
  const auto g = kernels::transposed_grids(spec, input.dim(0), spatial(input.shape()), od);
  Tensor<T> out({input.dim(0), spec.out_channels, od[0], od[1], od[2]});
  fill_bias(out, w.bias);
  run_scatter<T>(g, input.data(), w.weight.data(), kernels::transposed_layout(spec), out.mutable_data());
  return out;
}

template <class T>
ConvGrads<T> conv_transposed3d_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input,
                                        const ConvSpec& spec, const KernelWeights<T>& w, bool need_input) {
  require_rank(grad_out.shape(), 5, "conv_transposed3d_backward");
  require_rank(cached_input.shape(), 5, "conv_transposed3d_backward");
  w.check(spec);
  if (grad_out.dim(1) != spec.out_channels || grad_out.dim(0) != cached_input.dim(0)) {
    throw ShapeError("conv_transposed3d_backward: grad_out " + shape_str(grad_out.shape()) +
                     " does not match the forward output");
  }
  const auto g = kernels::transposed_grids(spec, cached_input.dim(0), spatial(cached_input.shape()),
                                           spatial(grad_out.shape()));
  const auto lay = kernels::transposed_layout(spec);
  ConvGrads<T> grads{Tensor<T>(), Tensor<T>(w.weight.shape()), std::nullopt};
  if (need_input) {
    grads.input = Tensor<T>(cached_input.shape());
    run_gather<T>(g, grad_out.data(), w.weight.data(), lay, grads.input.mutable_data());
  }
  run_weight_grad<T>(g, grad_out.data(), cached_input.data(), lay, grads.weight.mutable_data());
  if (w.bias) grads.bias = bias_grad(grad_out);
  return grads;
}

template <class T>
PoolResult<T> maxpool3d_forward(const Tensor<T>& input) {
  require_rank(input.shape(), 5, "maxpool3d_forward");
  const auto& s = input.shape();
  const std::int64_t ot = (s[2] + 1) / 2, oh = (s[3] + 1) / 2, ow = (s[4] + 1) / 2;
  PoolResult<T> r{Tensor<T>({s[0], s[1], ot, oh, ow}), {}};
  r.argmax.resize(static_cast<std::size_t>(r.output.numel()));
  auto in = input.data();
  auto out = r.output.mutable_data();
  const std::int64_t planes = s[0] * s[1];
  const std::int64_t ivol = s[2] * s[3] * s[4];
  const std::int64_t ovol = ot * oh * ow;

#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) {
    for (std::int64_t t = 0; t < ot; ++t) {
      for (std::int64_t h = 0; h < oh; ++h) {
        for (std::int64_t w = 0; w < ow; ++w) {
          std::int64_t best = -1;
          for (std::int64_t dt = 0; dt < 2; ++dt) {
            for (std::int64_t dh = 0; dh < 2; ++dh) {
              for (std::int64_t dw = 0; dw < 2; ++dw) {
                const auto it = 2 * t + dt, ih = 2 * h + dh, iw = 2 * w + dw;
                if (it >= s[2] || ih >= s[3] || iw >= s[4]) continue;
                const auto idx = p * ivol + (it * s[3] + ih) * s[4] + iw;
                if (best < 0 || in[idx] > in[best]) best = idx;
              }
            }
          }
          const auto o = p * ovol + (t * oh + h) * ow + w;
          out[o] = in[best];
          r.argmax[o] = best;
        }
      }
    }
  }
  return r;
}

template <class T>
Tensor<T> maxpool3d_backward(const Tensor<T>& grad_out, const std::vector<std::int64_t>& argmax,
                             const Shape& input_shape) {
  if (static_cast<std::int64_t>(argmax.size()) != grad_out.numel()) {
    throw ShapeError("maxpool3d_backward: argmax does not match grad_out");
  }
  Tensor<T> gi(input_shape);
  auto g = gi.mutable_data();
  auto go = grad_out.data();
  for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += go[i];
  return gi;
}

template <class T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  auto in = x.data();
  auto out = y.mutable_data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
  return y;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input) {
  require_same_shape(grad_out.shape(), cached_input.shape(), "relu_backward");
  Tensor<T> g(grad_out.shape());
  auto go = grad_out.data();
  auto in = cached_input.data();
  auto out = g.mutable_data();
  for (std::size_t i = 0; i < go.size(); ++i) out[i] = in[i] > T(0) ? go[i] : T(0);
  return g;
}

template <class T>
Tensor<T> add_forward(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add_forward");
  Tensor<T> y(a.shape());
  auto x = a.data();
  auto z = b.data();
  auto out = y.mutable_data();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + z[i];
  return y;
}

template <class T>
MseResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred.shape(), target.shape(), "mse_loss");
  MseResult<T> r{0.0, Tensor<T>(pred.shape())};
  auto p = pred.data();
  auto t = target.data();
  auto g = r.grad.mutable_data();
  const double n = static_cast<double>(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    acc += d * d;
    g[i] = static_cast<T>(2.0 * d / n);
  }
  r.loss = acc / n;
  return r;
}

template <class T>
Tensor<T> stack_time_channels(const Tensor<T>& x) {
  require_rank(x.shape(), 5, "stack_time_channels");
  const auto& s = x.shape();
  return x.reshape({s[0], s[1] * s[2], s[3], s[4]});
}

template <class T>
Tensor<T> unstack_time_channels(const Tensor<T>& x, std::int64_t time) {
  require_rank(x.shape(), 4, "unstack_time_channels");
  const auto& s = x.shape();
  if (time <= 0 || s[1] % time != 0) {
    throw ShapeError("unstack_time_channels: channel axis " + std::to_string(s[1]) +
                     " is not a multiple of time " + std::to_string(time));
  }
  return x.reshape({s[0], s[1] / time, time, s[2], s[3]});
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::int64_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape shape = parts.front().shape();
  if (axis < 0 || axis >= static_cast<std::int64_t>(shape.size())) throw ShapeError("concat: bad axis");
  std::int64_t total = 0;
  for (const auto& p : parts) {
    Shape a = p.shape();
    if (a.size() != shape.size()) throw ShapeError("concat: rank mismatch");
    total += a[axis];
    a[axis] = shape[axis];
    require_same_shape(a, shape, "concat");
  }
  shape[axis] = total;
  const std::int64_t outer = shape_numel(Shape(shape.begin(), shape.begin() + axis));
  const std::int64_t inner = shape_numel(Shape(shape.begin() + axis + 1, shape.end()));
  Tensor<T> out(shape);
  auto o = out.mutable_data();
  std::int64_t offset = 0;
  for (const auto& p : parts) {
    const auto len = p.dim(axis) * inner;
    auto src = p.data();
    for (std::int64_t i = 0; i < outer; ++i) {
      std::copy_n(src.data() + i * len, len, o.data() + i * total * inner + offset);
    }
    offset += len;
  }
  return out;
}

template <class T>
std::vector<Tensor<T>> split(const Tensor<T>& whole, const std::vector<std::int64_t>& sizes,
                             std::int64_t axis) {
  std::vector<Tensor<T>> parts;
  std::int64_t start = 0;
  for (auto n : sizes) {
    parts.push_back(slice(whole, axis, start, n));
    start += n;
  }
  if (start != whole.dim(axis)) throw ShapeError("split: sizes do not cover the axis");
  return parts;
}

template <class T>
Tensor<T> slice(const Tensor<T>& x, std::int64_t axis, std::int64_t start, std::int64_t len) {
  const Shape& s = x.shape();
  if (axis < 0 || axis >= x.rank() || start < 0 || len <= 0 || start + len > s[axis]) {
    throw ShapeError("slice: range out of bounds on axis " + std::to_string(axis));
  }
  Shape out_shape = s;
  out_shape[axis] = len;
  const std::int64_t outer = shape_numel(Shape(s.begin(), s.begin() + axis));
  const std::int64_t inner = shape_numel(Shape(s.begin() + axis + 1, s.end()));
  Tensor<T> out(out_shape);
  auto o = out.mutable_data();
  auto in = x.data();
  for (std::int64_t i = 0; i < outer; ++i) {
    std::copy_n(in.data() + (i * s[axis] + start) * inner, len * inner, o.data() + i * len * inner);
  }
  return out;
}

template <class T>
Tensor<T> broadcast_axis(const Tensor<T>& x, std::int64_t axis, std::int64_t n) {
  if (axis < 0 || axis >= x.rank() || x.dim(axis) != 1) {
    throw ShapeError("broadcast_axis: axis " + std::to_string(axis) + " of " + shape_str(x.shape()) +
                     " must have extent 1");
  }
  return concat(std::vector<Tensor<T>>(static_cast<std::size_t>(n), x), axis);
}

template <class T>
Tensor<T> sum_axis(const Tensor<T>& x, std::int64_t axis) {
  const Shape& s = x.shape();
  if (axis < 0 || axis >= x.rank()) throw ShapeError("sum_axis: bad axis");
  Shape out_shape = s;
  out_shape[axis] = 1;
  const std::int64_t outer = shape_numel(Shape(s.begin(), s.begin() + axis));
  const std::int64_t inner = shape_numel(Shape(s.begin() + axis + 1, s.end()));
  Tensor<T> out(out_shape);
  auto o = out.mutable_data();
  auto in = x.data();
  for (std::int64_t i = 0; i < outer; ++i) {
    for (std::int64_t a = 0; a < s[axis]; ++a) {
      const T* row = in.data() + (i * s[axis] + a) * inner;
      T* dst = o.data() + i * inner;
      for (std::int64_t j = 0; j < inner; ++j) dst[j] += row[j];
    }
  }
  return out;
}

#define T4C_INSTANTIATE(T)                                                                        \
  template Tensor<T> conv3d_forward(const Tensor<T>&, const ConvSpec&, const KernelWeights<T>&);  \
  template ConvGrads<T> conv3d_backward(const Tensor<T>&, const Tensor<T>&, const ConvSpec&,      \
                                        const KernelWeights<T>&, bool);                                 \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const ConvSpec&, const KernelWeights<T>&);  \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const ConvSpec&,      \
                                        const KernelWeights<T>&, bool);                                 \
  template Tensor<T> conv_transposed3d_forward(const Tensor<T>&, const ConvSpec&,                 \
                                               const KernelWeights<T>&,                           \
                                               const std::vector<std::int64_t>&);                 \
  template ConvGrads<T> conv_transposed3d_backward(const Tensor<T>&, const Tensor<T>&,            \
                                                   const ConvSpec&, const KernelWeights<T>&, bool); \
  template PoolResult<T> maxpool3d_forward(const Tensor<T>&);                                     \
  template Tensor<T> maxpool3d_backward(const Tensor<T>&, const std::vector<std::int64_t>&,       \
                                        const Shape&);                                            \
  template Tensor<T> relu_forward(const Tensor<T>&);                                              \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> add_forward(const Tensor<T>&, const Tensor<T>&);                             \
  template MseResult<T> mse_loss(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> stack_time_channels(const Tensor<T>&);                                       \
  template Tensor<T> unstack_time_channels(const Tensor<T>&, std::int64_t);                       \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::int64_t);                         \
  template std::vector<Tensor<T>> split(const Tensor<T>&, const std::vector<std::int64_t>&,       \
                                        std::int64_t);                                            \
  template Tensor<T> broadcast_axis(const Tensor<T>&, std::int64_t, std::int64_t);                \
  template Tensor<T> sum_axis(const Tensor<T>&, std::int64_t);                                    \
  template Tensor<T> slice(const Tensor<T>&, std::int64_t, std::int64_t, std::int64_t);

T4C_INSTANTIATE(float)
T4C_INSTANTIATE(double)
#undef T4C_INSTANTIATE

}  // namespace t4c
