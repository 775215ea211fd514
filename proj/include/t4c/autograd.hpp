#pragma once

// A recording tape for the fixed model graphs: every op stores its result
// and a closure that pushes the output gradient back to its inputs. Values
// are dense tensors or COO sparse tensors; gradients of either are flat
// buffers shaped like the value (dense elements or [N, C] feature rows).

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "t4c/dense_ops.hpp"
#include "t4c/rulebook.hpp"
#include "t4c/sparse_ops.hpp"

namespace t4c::autograd {

struct Var {
  std::int32_t id = -1;
  bool valid() const noexcept { return id >= 0; }
};

template <class T>
class Tape {
 public:
  using Value = std::variant<Tensor<T>, SparseTensor<T>>;
  using Backward = std::function<void(Tape&, std::span<const T> grad_out)>;

  /// Data leaf; no gradient flows into it.
  Var constant(Value v);
  /// Named trainable leaf.
  Var parameter(const std::string& name, Tensor<T> value);
  /// Unnamed leaf whose gradient is kept (read it with grad()).
  Var variable(Value v);
  /// Result of an op. `fn` runs only if some input carries a gradient.
  Var record(Value v, const std::vector<Var>& inputs, Backward fn);

  const Tensor<T>& dense(Var v) const { return std::get<Tensor<T>>(node(v).value); }
  const SparseTensor<T>& sparse(Var v) const { return std::get<SparseTensor<T>>(node(v).value); }
  bool is_sparse(Var v) const { return std::holds_alternative<SparseTensor<T>>(node(v).value); }
  bool needs_grad(Var v) const { return node(v).needs_grad; }

  /// Adds `g` into the gradient buffer of `v` (no-op for constants).
  void accumulate(Var v, std::span<const T> g);

  /// Reverse sweep from `root` seeded with `seed` (same length as root's value).
  void backward(Var root, std::span<const T> seed);
  /// Reverse sweep from a scalar root with seed 1.
  void backward(Var scalar_root);

  /// Gradient of a recorded value (empty if none reached it).
  const std::vector<T>& grad(Var v) const { return node(v).grad; }
  std::map<std::string, Tensor<T>> parameter_grads() const;

 private:
  struct Node {
    Value value;
    std::vector<T> grad;
    Backward backward;
    bool needs_grad = false;
    std::string param;
  };
  const Node& node(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }
  Node& node(Var v) { return nodes_.at(static_cast<std::size_t>(v.id)); }
  static std::size_t value_size(const Value& v);

  std::vector<Node> nodes_;
};

/// Parameter pair of one convolution layer.
struct ConvVars {
  Var weight;
  Var bias;  // invalid when the layer has no bias
};

// Dense ops.
template <class T>
Var conv3d(Tape<T>& tape, Var x, ConvVars w, const ConvSpec& spec);
template <class T>
Var conv2d(Tape<T>& tape, Var x, ConvVars w, const ConvSpec& spec);
template <class T>
Var conv_transposed3d(Tape<T>& tape, Var x, ConvVars w, const ConvSpec& spec,
                      const std::vector<std::int64_t>& out_dims);
template <class T>
Var relu(Tape<T>& tape, Var x);
template <class T>
Var add(Tape<T>& tape, Var a, Var b);
template <class T>
Var maxpool3d(Tape<T>& tape, Var x);
template <class T>
Var concat(Tape<T>& tape, const std::vector<Var>& parts, std::int64_t axis);
template <class T>
Var broadcast_axis(Tape<T>& tape, Var x, std::int64_t axis, std::int64_t n);
template <class T>
Var reshape(Tape<T>& tape, Var x, Shape shape);
/// Scalar mean squared error against a fixed target.
template <class T>
Var mse(Tape<T>& tape, Var pred, const Tensor<T>& target);

// Sparse ops.
template <class T>
Var sparse_conv(Tape<T>& tape, Var x, ConvVars w, std::shared_ptr<const Rulebook> rb);
template <class T>
Var sparse_relu(Tape<T>& tape, Var x);
template <class T>
Var sparse_maxpool(Tape<T>& tape, Var x);
template <class T>
Var sparse_concat(Tape<T>& tape, Var a, Var b);
template <class T>
Var sparse_to_dense(Tape<T>& tape, Var x);

}  // namespace t4c::autograd
