#include "t4c/autograd.hpp"

#include <string>

namespace t4c::autograd {

template <class T>
std::size_t Tape<T>::value_size(const Value& v) {
  if (const auto* d = std::get_if<Tensor<T>>(&v)) return static_cast<std::size_t>(d->numel());
  return std::get<SparseTensor<T>>(v).feats.size();
}

template <class T>
Var Tape<T>::constant(Value v) {
  nodes_.push_back(Node{std::move(v), {}, {}, false, {}});
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <class T>
Var Tape<T>::parameter(const std::string& name, Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true, name});
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <class T>
Var Tape<T>::variable(Value v) {
  nodes_.push_back(Node{std::move(v), {}, {}, true, {}});
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <class T>
Var Tape<T>::record(Value v, const std::vector<Var>& inputs, Backward fn) {
  bool needs = false;
  for (const auto& in : inputs) needs = needs || (in.valid() && node(in).needs_grad);
  nodes_.push_back(Node{std::move(v), {}, needs ? std::move(fn) : Backward{}, needs, {}});
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <class T>
void Tape<T>::accumulate(Var v, std::span<const T> g) {
  if (!v.valid()) return;
  Node& n = node(v);
  if (!n.needs_grad) return;
  const std::size_t size = value_size(n.value);
  if (g.size() != size) {
    throw ShapeError("autograd: gradient of length " + std::to_string(g.size()) +
                     " for a value of length " + std::to_string(size));
  }
  if (n.grad.empty()) {
    n.grad.assign(g.begin(), g.end());
    return;
  }
  for (std::size_t i = 0; i < size; ++i) n.grad[i] += g[i];
}

template <class T>
void Tape<T>::backward(Var root, std::span<const T> seed) {
  for (auto& n : nodes_) n.grad.clear();
  accumulate(root, seed);
  for (std::int32_t id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, std::span<const T>(n.grad));
  }
}

template <class T>
void Tape<T>::backward(Var scalar_root) {
  if (value_size(node(scalar_root).value) != 1) throw ShapeError("autograd: backward() needs a scalar root");
  const T one = T(1);
  backward(scalar_root, std::span<const T>(&one, 1));
}

template <class T>
std::map<std::string, Tensor<T>> Tape<T>::parameter_grads() const {
  std::map<std::string, Tensor<T>> out;
  for (const auto& n : nodes_) {
    if (n.param.empty()) continue;
    const auto& value = std::get<Tensor<T>>(n.value);
    out.emplace(n.param, n.grad.empty() ? Tensor<T>(value.shape()) : Tensor<T>(value.shape(), n.grad));
  }
  return out;
}

namespace {

template <class T>
KernelWeights<T> weights_of(const Tape<T>& tape, ConvVars w) {
  KernelWeights<T> kw{tape.dense(w.weight), std::nullopt};
  if (w.bias.valid()) kw.bias = tape.dense(w.bias);
  return kw;
}

template <class T>
Tensor<T> as_tensor(const Shape& shape, std::span<const T> g) {
  return Tensor<T>(shape, std::vector<T>(g.begin(), g.end()));
}

template <class T>
void push_conv_grads(Tape<T>& tape, Var x, ConvVars w, const ConvGrads<T>& g) {
  if (tape.needs_grad(x)) tape.accumulate(x, g.input.data());
  tape.accumulate(w.weight, g.weight.data());
  if (w.bias.valid() && g.bias) tape.accumulate(w.bias, g.bias->data());
}

}  // namespace

template <class T>
Var conv3d(Tape<T>& tape, Var x, ConvVars w, const ConvSpec& spec) {
  auto y = conv3d_forward(tape.dense(x), spec, weights_of(tape, w));
  const Shape shape = y.shape();
  return tape.record(std::move(y), {x, w.weight, w.bias}, [=](Tape<T>& t, std::span<const T> g) {
    auto grads = conv3d_backward(as_tensor(shape, g), t.dense(x), spec, weights_of(t, w), t.needs_grad(x));
    push_conv_grads(t, x, w, grads);
  });
}

template <class T>
Var conv2d(Tape<T>& tape, Var x, ConvVars w, const ConvSpec& spec) {
  auto y = conv2d_forward(tape.dense(x), spec, weights_of(tape, w));
  const Shape shape = y.shape();
  return tape.record(std::move(y), {x, w.weight, w.bias}, [=](Tape<T>& t, std::span<const T> g) {
    auto grads = conv2d_backward(as_tensor(shape, g), t.dense(x), spec, weights_of(t, w), t.needs_grad(x));
    push_conv_grads(t, x, w, grads);
  });
}

template <class T>
Var conv_transposed3d(Tape<T>& tape, Var x, ConvVars w, const ConvSpec& spec,
                      const std::vector<std::int64_t>& out_dims) {
  auto y = conv_transposed3d_forward(tape.dense(x), spec, weights_of(tape, w), out_dims);
  const Shape shape = y.shape();
  return tape.record(std::move(y), {x, w.weight, w.bias}, [=](Tape<T>& t, std::span<const T> g) {
    auto grads = conv_transposed3d_backward(as_tensor(shape, g), t.dense(x), spec, weights_of(t, w),
                                            t.needs_grad(x));
    push_conv_grads(t, x, w, grads);
  });
}

template <class T>
Var relu(Tape<T>& tape, Var x) {
  auto y = relu_forward(tape.dense(x));
  return tape.record(std::move(y), {x}, [=](Tape<T>& t, std::span<const T> g) {
    const auto in = t.dense(x).data();
    std::vector<T> gi(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] = in[i] > T(0) ? g[i] : T(0);
    t.accumulate(x, gi);
  });
}

template <class T>
Var add(Tape<T>& tape, Var a, Var b) {
  auto y = add_forward(tape.dense(a), tape.dense(b));
  return tape.record(std::move(y), {a, b}, [=](Tape<T>& t, std::span<const T> g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <class T>
Var maxpool3d(Tape<T>& tape, Var x) {
  auto pooled = maxpool3d_forward(tape.dense(x));
  const Shape in_shape = tape.dense(x).shape();
  const Shape out_shape = pooled.output.shape();
  auto argmax = std::make_shared<const std::vector<std::int64_t>>(std::move(pooled.argmax));
  return tape.record(std::move(pooled.output), {x}, [=](Tape<T>& t, std::span<const T> g) {
    t.accumulate(x, maxpool3d_backward(as_tensor(out_shape, g), *argmax, in_shape).data());
  });
}

template <class T>
Var concat(Tape<T>& tape, const std::vector<Var>& parts, std::int64_t axis) {
  std::vector<Tensor<T>> values;
  std::vector<std::int64_t> sizes;
  for (auto p : parts) {
    values.push_back(tape.dense(p));
    sizes.push_back(values.back().dim(axis));
  }
  auto y = t4c::concat(values, axis);
  const Shape shape = y.shape();
  return tape.record(std::move(y), parts, [=](Tape<T>& t, std::span<const T> g) {
    auto pieces = split(as_tensor(shape, g), sizes, axis);
    for (std::size_t i = 0; i < parts.size(); ++i) t.accumulate(parts[i], pieces[i].data());
  });
}

template <class T>
Var broadcast_axis(Tape<T>& tape, Var x, std::int64_t axis, std::int64_t n) {
  auto y = t4c::broadcast_axis(tape.dense(x), axis, n);
  const Shape shape = y.shape();
  return tape.record(std::move(y), {x}, [=](Tape<T>& t, std::span<const T> g) {
    t.accumulate(x, sum_axis(as_tensor(shape, g), axis).data());
  });
}

template <class T>
Var reshape(Tape<T>& tape, Var x, Shape shape) {
  auto y = tape.dense(x).reshape(std::move(shape));
  return tape.record(std::move(y), {x}, [=](Tape<T>& t, std::span<const T> g) { t.accumulate(x, g); });
}

template <class T>
Var mse(Tape<T>& tape, Var pred, const Tensor<T>& target) {
  auto r = mse_loss(tape.dense(pred), target);
  Tensor<T> loss({1});
  loss[0] = static_cast<T>(r.loss);
  auto dl = r.grad;
  return tape.record(std::move(loss), {pred}, [=](Tape<T>& t, std::span<const T> g) {
    const auto d = dl.data();
    std::vector<T> gi(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) gi[i] = d[i] * g[0];
    t.accumulate(pred, gi);
  });
}

template <class T>
Var sparse_conv(Tape<T>& tape, Var x, ConvVars w, std::shared_ptr<const Rulebook> rb) {
  auto y = sparse_conv_forward(tape.sparse(x), weights_of(tape, w), *rb);
  return tape.record(std::move(y), {x, w.weight, w.bias}, [=](Tape<T>& t, std::span<const T> g) {
    auto grads = sparse_conv_backward(std::vector<T>(g.begin(), g.end()), t.sparse(x), weights_of(t, w), *rb,
                                      t.needs_grad(x));
    if (t.needs_grad(x)) t.accumulate(x, grads.input);
    t.accumulate(w.weight, grads.weight.data());
    if (w.bias.valid() && grads.bias) t.accumulate(w.bias, grads.bias->data());
  });
}

template <class T>
Var sparse_relu(Tape<T>& tape, Var x) {
  auto y = t4c::sparse_relu(tape.sparse(x));
  return tape.record(std::move(y), {x}, [=](Tape<T>& t, std::span<const T> g) {
    t.accumulate(x, sparse_relu_backward(std::vector<T>(g.begin(), g.end()), t.sparse(x)));
  });
}

template <class T>
Var sparse_maxpool(Tape<T>& tape, Var x) {
  auto pooled = t4c::sparse_maxpool(tape.sparse(x));
  const int channels = tape.sparse(x).channels;
  const std::int64_t rows = tape.sparse(x).rows();
  auto argmax = std::make_shared<const std::vector<std::int32_t>>(std::move(pooled.argmax));
  return tape.record(std::move(pooled.output), {x}, [=](Tape<T>& t, std::span<const T> g) {
    t.accumulate(x, sparse_maxpool_backward(std::vector<T>(g.begin(), g.end()), *argmax, channels, rows));
  });
}

template <class T>
Var sparse_concat(Tape<T>& tape, Var a, Var b) {
  auto cat = t4c::sparse_concat(tape.sparse(a), tape.sparse(b));
  const int ca = tape.sparse(a).channels;
  const int cb = tape.sparse(b).channels;
  auto a_rows = std::make_shared<const std::vector<std::int32_t>>(std::move(cat.a_rows));
  auto b_rows = std::make_shared<const std::vector<std::int32_t>>(std::move(cat.b_rows));
  return tape.record(std::move(cat.output), {a, b}, [=](Tape<T>& t, std::span<const T> g) {
    const std::size_t width = static_cast<std::size_t>(ca + cb);
    if (t.needs_grad(a)) {
      std::vector<T> ga(a_rows->size() * ca);
      for (std::size_t i = 0; i < a_rows->size(); ++i) {
        const T* src = g.data() + static_cast<std::size_t>((*a_rows)[i]) * width;
        std::copy_n(src, ca, ga.data() + i * ca);
      }
      t.accumulate(a, ga);
    }
    if (t.needs_grad(b)) {
      std::vector<T> gb(b_rows->size() * cb);
      for (std::size_t i = 0; i < b_rows->size(); ++i) {
        const T* src = g.data() + static_cast<std::size_t>((*b_rows)[i]) * width + ca;
        std::copy_n(src, cb, gb.data() + i * cb);
      }
      t.accumulate(b, gb);
    }
  });
}

template <class T>
Var sparse_to_dense(Tape<T>& tape, Var x) {
  auto y = t4c::sparse_to_dense(tape.sparse(x));
  return tape.record(std::move(y), {x}, [=](Tape<T>& t, std::span<const T> g) {
    const auto& s = t.sparse(x);
    const std::int64_t C = s.channels;
    const std::int64_t T_ = s.shape[1], H = s.shape[2], W = s.shape[3];
    const std::int64_t plane = T_ * H * W;
    std::vector<T> gi(s.feats.size());
    for (std::int64_t i = 0; i < s.rows(); ++i) {
      const auto& c = s.coords[static_cast<std::size_t>(i)];
      const std::int64_t site = (static_cast<std::int64_t>(c[1]) * H + c[2]) * W + c[3];
      for (std::int64_t ch = 0; ch < C; ++ch) {
        gi[static_cast<std::size_t>(i * C + ch)] = g[static_cast<std::size_t>((c[0] * C + ch) * plane + site)];
      }
    }
    t.accumulate(x, gi);
  });
}

#define T4C_INSTANTIATE(T)                                                                             \
  template class Tape<T>;                                                                              \
  template Var conv3d(Tape<T>&, Var, ConvVars, const ConvSpec&);                                       \
  template Var conv2d(Tape<T>&, Var, ConvVars, const ConvSpec&);                                       \
  template Var conv_transposed3d(Tape<T>&, Var, ConvVars, const ConvSpec&,                             \
                                 const std::vector<std::int64_t>&);                                    \
  template Var relu(Tape<T>&, Var);                                                                    \
  template Var add(Tape<T>&, Var, Var);                                                                \
  template Var maxpool3d(Tape<T>&, Var);                                                               \
  template Var concat(Tape<T>&, const std::vector<Var>&, std::int64_t);                                \
  template Var broadcast_axis(Tape<T>&, Var, std::int64_t, std::int64_t);                              \
  template Var reshape(Tape<T>&, Var, Shape);                                                          \
  template Var mse(Tape<T>&, Var, const Tensor<T>&);                                                   \
  template Var sparse_conv(Tape<T>&, Var, ConvVars, std::shared_ptr<const Rulebook>);                  \
  template Var sparse_relu(Tape<T>&, Var);                                                             \
  template Var sparse_maxpool(Tape<T>&, Var);                                                          \
  template Var sparse_concat(Tape<T>&, Var, Var);                                                      \
  template Var sparse_to_dense(Tape<T>&, Var);

T4C_INSTANTIATE(float)
T4C_INSTANTIATE(double)
#undef T4C_INSTANTIATE

}  // namespace t4c::autograd
