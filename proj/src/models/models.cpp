#include "t4c/models.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>
#include <utility>

namespace t4c {

using autograd::ConvVars;
using autograd::Tape;
using autograd::Var;

void ModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v <= 0) throw ConfigError(std::string("model config: ") + what + " must be positive");
  };
  positive(in_channels, "in_channels");
  positive(history, "history");
  positive(horizon, "horizon");
  if (horizon != 6) throw ConfigError("model config: horizon must be 6 future frames");
  if (kind == ModelKind::ResNet) {
    positive(hidden, "hidden");
    if (residual_blocks < 0) throw ConfigError("model config: residual_blocks must be >= 0");
  } else {
    if (levels < 1) throw ConfigError("model config: levels must be >= 1");
    positive(base_channels, "base_channels");
    if (generalized && kind != ModelKind::SparseUNet) {
      throw ConfigError("model config: generalized mode applies to the sparse UNet only");
    }
  }
}

namespace {

const char* kind_key(ModelKind k) {
  switch (k) {
    case ModelKind::ResNet: return "resnet";
    case ModelKind::SparseUNet: return "sparse-unet";
    case ModelKind::Conv3DUNet: return "conv3d-unet";
  }
  return "?";
}

int parse_int(const std::map<std::string, std::string>& kv, const std::string& key, int fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t used = 0;
    const int v = std::stoi(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("model config: " + key + " is not an integer: '" + it->second + "'");
  }
}

}  // namespace

std::map<std::string, std::string> ModelConfig::to_map() const {
  std::map<std::string, std::string> kv;
  kv["kind"] = kind_key(kind);
  kv["in_channels"] = std::to_string(in_channels);
  kv["history"] = std::to_string(history);
  kv["horizon"] = std::to_string(horizon);
  if (kind == ModelKind::ResNet) {
    kv["hidden"] = std::to_string(hidden);
    kv["residual_blocks"] = std::to_string(residual_blocks);
    kv["output_mode"] = output_mode == OutputMode::Sequential ? "sequential" : "conv";
    kv["conv_dim"] = conv_dim == ConvDim::D3 ? "3" : "2";
    kv["prior_last_frame"] = prior_last_frame ? "1" : "0";
  } else {
    kv["levels"] = std::to_string(levels);
    kv["base_channels"] = std::to_string(base_channels);
    kv["generalized"] = generalized ? "1" : "0";
  }
  return kv;
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  static const std::vector<std::string> known = {
      "kind", "in_channels", "history", "horizon", "hidden", "residual_blocks", "output_mode",
      "conv_dim", "prior_last_frame", "levels", "base_channels", "generalized"};
  for (const auto& [k, v] : kv) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw ConfigError("model config: unknown key '" + k + "'");
    }
  }
  ModelConfig c;
  auto it = kv.find("kind");
  if (it == kv.end()) throw ConfigError("model config: missing 'kind'");
  if (it->second == "resnet") {
    c.kind = ModelKind::ResNet;
  } else if (it->second == "sparse-unet") {
    c.kind = ModelKind::SparseUNet;
  } else if (it->second == "conv3d-unet") {
    c.kind = ModelKind::Conv3DUNet;
  } else {
    throw ConfigError("model config: unknown kind '" + it->second + "'");
  }
  c.in_channels = parse_int(kv, "in_channels", c.in_channels);
  c.history = parse_int(kv, "history", c.history);
  c.horizon = parse_int(kv, "horizon", c.horizon);
  c.hidden = parse_int(kv, "hidden", c.hidden);
  c.residual_blocks = parse_int(kv, "residual_blocks", c.residual_blocks);
  if (auto m = kv.find("output_mode"); m != kv.end()) {
    if (m->second != "sequential" && m->second != "conv") throw ConfigError("model config: bad output_mode");
    c.output_mode = m->second == "sequential" ? OutputMode::Sequential : OutputMode::ConvOutput;
  }
  const int dim = parse_int(kv, "conv_dim", 3);
  if (dim != 2 && dim != 3) throw ConfigError("model config: conv_dim must be 2 or 3");
  c.conv_dim = dim == 3 ? ConvDim::D3 : ConvDim::D2;
  c.prior_last_frame = parse_int(kv, "prior_last_frame", 0) != 0;
  c.levels = parse_int(kv, "levels", c.levels);
  c.base_channels = parse_int(kv, "base_channels", c.base_channels);
  c.generalized = parse_int(kv, "generalized", 0) != 0;
  c.validate();
  return c;
}

const std::vector<std::string>& model_names() {
  static const std::vector<std::string> names = {"3dresnet", "3dresnet-convout", "2dresnet", "sparse-unet",
                                                 "conv3d-unet"};
  return names;
}

ModelConfig model_config(const std::string& name) {
  ModelConfig c;
  if (name == "3dresnet") {
    c.output_mode = OutputMode::Sequential;
  } else if (name == "3dresnet-convout") {
    c.output_mode = OutputMode::ConvOutput;
  } else if (name == "2dresnet") {
    c.output_mode = OutputMode::ConvOutput;
    c.conv_dim = ConvDim::D2;
  } else if (name == "sparse-unet") {
    c.kind = ModelKind::SparseUNet;
  } else if (name == "conv3d-unet") {
    c.kind = ModelKind::Conv3DUNet;
  } else {
    throw ConfigError("unknown model '" + name + "'");
  }
  return c;
}

std::string model_name(const ModelConfig& cfg) {
  switch (cfg.kind) {
    case ModelKind::SparseUNet: return "sparse-unet";
    case ModelKind::Conv3DUNet: return "conv3d-unet";
    case ModelKind::ResNet: break;
  }
  const bool seq = cfg.output_mode == OutputMode::Sequential;
  if (cfg.conv_dim == ConvDim::D3) return seq ? "3dresnet" : "3dresnet-convout";
  return seq ? "2dresnet-seq" : "2dresnet";
}

namespace {

ConvSpec temporal_collapse(int history, int in, int out) {
  return ConvSpec{{history, 3, 3}, {1, 1, 1}, {0, 1, 1}, in, out, true};
}

ConvSpec upsample_spec(int in, int out) { return ConvSpec{{1, 2, 2}, {1, 2, 2}, {0, 0, 0}, in, out, true}; }

int unet_width(const ModelConfig& c, int level) { return c.base_channels << level; }

/// Every convolution layer of a model, in forward order.
std::vector<std::pair<std::string, ConvSpec>> layer_specs(const ModelConfig& c) {
  c.validate();
  std::vector<std::pair<std::string, ConvSpec>> layers;
  if (c.kind == ModelKind::ResNet) {
    const bool d3 = c.conv_dim == ConvDim::D3;
    auto same = [&](int in, int out) { return d3 ? ConvSpec::same3d(in, out) : ConvSpec::same2d(in, out); };
    layers.emplace_back("stem", same(d3 ? c.in_channels : c.in_channels * c.history, c.hidden));
    for (int i = 0; i < c.residual_blocks; ++i) {
      layers.emplace_back("res" + std::to_string(i) + ".conv1", same(c.hidden, c.hidden));
      layers.emplace_back("res" + std::to_string(i) + ".conv2", same(c.hidden, c.hidden));
    }
    if (c.output_mode == OutputMode::ConvOutput) {
      const int out = c.in_channels * c.horizon;
      layers.emplace_back("head", d3 ? temporal_collapse(c.history, c.hidden, out) : same(c.hidden, out));
    } else {
      for (int k = 1; k <= c.horizon; ++k) {
        const int in = c.hidden + c.in_channels;
        layers.emplace_back("seq" + std::to_string(k),
                            d3 ? temporal_collapse(c.history, in, c.in_channels) : same(in, c.in_channels));
      }
    }
    return layers;
  }
  const int L = c.levels;
  for (int l = 0; l < L; ++l) {
    const int in = l == 0 ? c.in_channels * c.history : unet_width(c, l - 1);
    const std::string p = "enc" + std::to_string(l);
    layers.emplace_back(p + ".conv1", ConvSpec::same2d(in, unet_width(c, l)));
    layers.emplace_back(p + ".conv2", ConvSpec::same2d(unet_width(c, l), unet_width(c, l)));
  }
  layers.emplace_back("bott.conv1", ConvSpec::same2d(unet_width(c, L - 1), unet_width(c, L)));
  layers.emplace_back("bott.conv2", ConvSpec::same2d(unet_width(c, L), unet_width(c, L)));
  for (int l = L - 1; l >= 0; --l) {
    const std::string s = std::to_string(l);
    layers.emplace_back("up" + s, upsample_spec(unet_width(c, l + 1), unet_width(c, l)));
    layers.emplace_back("dec" + s + ".conv1", ConvSpec::same2d(2 * unet_width(c, l), unet_width(c, l)));
    layers.emplace_back("dec" + s + ".conv2", ConvSpec::same2d(unet_width(c, l), unet_width(c, l)));
  }
  layers.emplace_back("head", ConvSpec::same2d(unet_width(c, 0), c.in_channels * c.horizon));
  return layers;
}

const ConvSpec& spec_of(const std::vector<std::pair<std::string, ConvSpec>>& layers, const std::string& name) {
  for (const auto& [n, s] : layers) {
    if (n == name) return s;
  }
  throw ConfigError("model has no layer '" + name + "'");
}

std::uint64_t layer_seed(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::uint64_t z = seed ^ h;
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

template <class T>
void init_layer(ModelState<T>& st, const std::string& name, const ConvSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(layer_seed(seed, name));
  auto w = KernelWeights<T>::uniform(spec, rng);
  st.params[name + ".weight"] = std::move(w.weight);
  if (w.bias) st.params[name + ".bias"] = std::move(*w.bias);
}

}  // namespace

std::map<std::string, Shape> parameter_shapes(const ModelConfig& cfg) {
  std::map<std::string, Shape> shapes;
  for (const auto& [name, spec] : layer_specs(cfg)) {
    shapes[name + ".weight"] = {spec.volume(), spec.in_channels, spec.out_channels};
    if (spec.has_bias) shapes[name + ".bias"] = {spec.out_channels};
  }
  return shapes;
}

template <class T>
ModelState<T> init_model(const ModelConfig& cfg, std::uint64_t seed) {
  ModelState<T> st{cfg, {}, 0};
  for (const auto& [name, spec] : layer_specs(cfg)) init_layer(st, name, spec, seed);
  return st;
}

template <class T>
std::int64_t param_count(const ModelState<T>& state, const std::string& prefix) {
  std::int64_t n = 0;
  for (const auto& [name, t] : state.params) {
    if (name.compare(0, prefix.size(), prefix) == 0) n += t.numel();
  }
  return n;
}

template <class T>
ModelState<T> warm_up_swap(const ModelState<T>& state) {
  if (state.config.kind != ModelKind::ResNet || state.config.output_mode != OutputMode::ConvOutput) {
    throw ConfigError("warm_up_swap needs a ConvOutput ResNet, got " + model_name(state.config));
  }
  const auto& c = state.config;
  ModelState<T> out{c, {}, state.step};
  out.config.output_mode = OutputMode::Sequential;
  for (const auto& [name, t] : state.params) {
    if (name.rfind("head.", 0) != 0) out.params.emplace(name, t.clone());
  }
  // Layer k starts as the head's frame-k slice with zero weight on the previous frame.
  const auto& hw = state.params.at("head.weight");
  const auto& hb = state.params.at("head.bias");
  const std::int64_t K = hw.dim(0), out_ch = hw.dim(2);
  for (int k = 0; k < c.horizon; ++k) {
    Tensor<T> w({K, c.hidden + c.in_channels, c.in_channels});
    Tensor<T> b({c.in_channels});
    for (std::int64_t kk = 0; kk < K; ++kk) {
      for (std::int64_t i = 0; i < c.hidden; ++i) {
        for (int ch = 0; ch < c.in_channels; ++ch) {
          w[(kk * (c.hidden + c.in_channels) + i) * c.in_channels + ch] = hw[(kk * c.hidden + i) * out_ch + ch * c.horizon + k];
        }
      }
    }
    for (int ch = 0; ch < c.in_channels; ++ch) b[ch] = hb[ch * c.horizon + k];
    out.params["seq" + std::to_string(k + 1) + ".weight"] = std::move(w);
    out.params["seq" + std::to_string(k + 1) + ".bias"] = std::move(b);
  }
  return out;
}

template <class T>
Tensor<T> fold_time(const Tensor<T>& x) {
  require_rank(x.shape(), 5, "fold_time input");
  return x.reshape({x.dim(0), x.dim(1) * x.dim(2), 1, x.dim(3), x.dim(4)});
}

template <class T>
Tensor<T> unfold_time(const Tensor<T>& x, std::int64_t time) {
  require_rank(x.shape(), 5, "unfold_time input");
  if (x.dim(2) != 1 || x.dim(1) % time != 0) {
    throw ShapeError("unfold_time: expected [B, C*" + std::to_string(time) + ", 1, H, W], got " +
                     shape_str(x.shape()));
  }
  return x.reshape({x.dim(0), x.dim(1) / time, time, x.dim(3), x.dim(4)});
}

namespace {

template <class T>
class Builder {
 public:
  Builder(Tape<T>& tape, const ModelState<T>& st, ForwardTrace& trace)
      : tape_(tape), st_(st), trace_(trace), layers_(layer_specs(st.config)) {}

  const ConvSpec& spec(const std::string& layer) const { return spec_of(layers_, layer); }

  ConvVars vars(const std::string& layer) {
    const auto& s = spec(layer);
    ConvVars v{param(layer + ".weight", {s.volume(), s.in_channels, s.out_channels}), Var{}};
    if (s.has_bias) v.bias = param(layer + ".bias", {s.out_channels});
    return v;
  }

  Var conv3d(Var x, const std::string& layer) { return autograd::conv3d(tape_, x, vars(layer), spec(layer)); }
  Var conv2d(Var x, const std::string& layer) { return autograd::conv2d(tape_, x, vars(layer), spec(layer)); }

 private:
  Var param(const std::string& name, const Shape& shape) {
    if (auto it = trace_.params.find(name); it != trace_.params.end()) return it->second;
    auto p = st_.params.find(name);
    if (p == st_.params.end()) throw ConfigError("model state is missing parameter '" + name + "'");
    if (p->second.shape() != shape) {
      throw ShapeError("parameter '" + name + "' has shape " + shape_str(p->second.shape()) + ", expected " +
                       shape_str(shape));
    }
    const Var v = tape_.parameter(name, p->second);
    trace_.params.emplace(name, v);
    return v;
  }

  Tape<T>& tape_;
  const ModelState<T>& st_;
  ForwardTrace& trace_;
  std::vector<std::pair<std::string, ConvSpec>> layers_;
};

template <class T>
void check_history(const ModelConfig& c, const Tensor<T>& x) {
  require_rank(x.shape(), 5, "model input");
  if (x.dim(1) != c.in_channels || x.dim(2) != c.history) {
    throw ShapeError("model input must be [B, " + std::to_string(c.in_channels) + ", " +
                     std::to_string(c.history) + ", H, W], got " + shape_str(x.shape()));
  }
}

template <class T>
ForwardTrace resnet_forward(Tape<T>& tape, const ModelState<T>& st, const Tensor<T>& x) {
  const auto& c = st.config;
  ForwardTrace tr;
  Builder<T> b(tape, st, tr);
  const bool d3 = c.conv_dim == ConvDim::D3;
  const std::int64_t B = x.dim(0), H = x.dim(3), W = x.dim(4);
  auto conv = [&](Var v, const std::string& layer) { return d3 ? b.conv3d(v, layer) : b.conv2d(v, layer); };

  Var in = tape.constant(d3 ? x : x.reshape({B, c.in_channels * c.history, H, W}));
  Var h = autograd::relu(tape, conv(in, "stem"));
  tr.stem = h;
  for (int i = 0; i < c.residual_blocks; ++i) {
    const std::string p = "res" + std::to_string(i);
    Var r = autograd::relu(tape, conv(h, p + ".conv1"));
    r = conv(r, p + ".conv2");
    h = autograd::relu(tape, autograd::add(tape, r, h));
  }

  const Shape out_shape{B, c.in_channels, c.horizon, H, W};
  if (c.output_mode == OutputMode::ConvOutput) {
    tr.output = autograd::reshape(tape, conv(h, "head"), out_shape);
    return tr;
  }

  const Shape frame3{B, c.in_channels, 1, H, W};
  Tensor<T> first = c.prior_last_frame ? slice(x, 2, c.history - 1, 1) : Tensor<T>(frame3);
  Var prior = tape.constant(d3 ? first : first.reshape({B, c.in_channels, H, W}));
  // The previous frame enters as the newest time slot; older slots are zero.
  Var older = tape.constant(Tensor<T>({B, c.in_channels, c.history - 1, H, W}));
  std::vector<Var> frames;
  for (int k = 1; k <= c.horizon; ++k) {
    Var ctx = d3 ? autograd::concat(tape, {older, prior}, 2) : prior;
    Var f = conv(autograd::concat(tape, {h, ctx}, 1), "seq" + std::to_string(k));
    frames.push_back(d3 ? f : autograd::reshape(tape, f, frame3));
    prior = f;
  }
  tr.output = autograd::concat(tape, frames, 2);
  return tr;
}

}  // namespace

template <class T>
ForwardTrace sparse_unet_forward(Tape<T>& tape, const ModelState<T>& st, const SparseTensor<T>& folded) {
  const auto& c = st.config;
  if (c.kind != ModelKind::SparseUNet) throw ConfigError("sparse_unet_forward on a " + model_name(c));
  if (folded.channels != c.in_channels * c.history) {
    throw ShapeError("sparse UNet input must have " + std::to_string(c.in_channels * c.history) +
                     " channels, got " + std::to_string(folded.channels));
  }
  ForwardTrace tr;
  Builder<T> b(tape, st, tr);
  const auto mode = c.generalized ? SparseConvMode::Generalized : SparseConvMode::Submanifold;

  // Submanifold convs keep coordinates per level, so one rulebook serves the level.
  std::shared_ptr<const Rulebook> level_rb;
  auto conv = [&](Var v, const std::string& layer) {
    const auto& s = tape.sparse(v);
    std::shared_ptr<const Rulebook> rb = level_rb;
    if (!rb || c.generalized) rb = std::make_shared<const Rulebook>(build_rulebook(s, b.spec(layer), mode));
    if (!c.generalized) level_rb = rb;
    return autograd::sparse_conv(tape, v, b.vars(layer), rb);
  };
  auto block = [&](Var v, const std::string& p) {
    v = autograd::sparse_relu(tape, conv(v, p + ".conv1"));
    return autograd::sparse_relu(tape, conv(v, p + ".conv2"));
  };

  Var h = tape.constant(folded);
  std::vector<Var> skips;
  std::vector<std::shared_ptr<const Rulebook>> level_rbs;
  for (int l = 0; l < c.levels; ++l) {
    level_rb.reset();
    h = block(h, "enc" + std::to_string(l));
    skips.push_back(h);
    level_rbs.push_back(level_rb);
    h = autograd::sparse_maxpool(tape, h);
  }
  level_rb.reset();
  h = block(h, "bott");
  for (int l = c.levels - 1; l >= 0; --l) {
    const std::string s = std::to_string(l);
    const auto& lo = tape.sparse(h);
    const auto& skip = tape.sparse(skips[l]);
    const ConvSpec& up = b.spec("up" + s);
    auto rb = std::make_shared<const Rulebook>(
        c.generalized ? build_transposed_rulebook_generalized(lo.coords, lo.shape, up, skip.shape)
                      : build_transposed_rulebook(lo.coords, lo.shape, up, skip.coords, skip.shape));
    Var u = autograd::sparse_conv(tape, h, b.vars("up" + s), rb);
    h = autograd::sparse_concat(tape, skips[l], u);
    level_rb = level_rbs[l];
    h = block(h, "dec" + s);
  }
  level_rb = level_rbs[0];
  tr.sparse_head = conv(h, "head");
  return tr;
}

template <class T>
ForwardTrace conv3d_unet_forward(Tape<T>& tape, const ModelState<T>& st, const Tensor<T>& folded) {
  const auto& c = st.config;
  if (c.kind != ModelKind::Conv3DUNet) throw ConfigError("conv3d_unet_forward on a " + model_name(c));
  require_rank(folded.shape(), 5, "dense UNet input");
  if (folded.dim(1) != c.in_channels * c.history || folded.dim(2) != 1) {
    throw ShapeError("dense UNet input must be [B, " + std::to_string(c.in_channels * c.history) +
                     ", 1, H, W], got " + shape_str(folded.shape()));
  }
  ForwardTrace tr;
  Builder<T> b(tape, st, tr);
  auto block = [&](Var v, const std::string& p) {
    v = autograd::relu(tape, b.conv3d(v, p + ".conv1"));
    return autograd::relu(tape, b.conv3d(v, p + ".conv2"));
  };
  Var h = tape.constant(folded);
  std::vector<Var> skips;
  for (int l = 0; l < c.levels; ++l) {
    h = block(h, "enc" + std::to_string(l));
    skips.push_back(h);
    h = autograd::maxpool3d(tape, h);
  }
  h = block(h, "bott");
  for (int l = c.levels - 1; l >= 0; --l) {
    const std::string s = std::to_string(l);
    const auto& shape = tape.dense(skips[l]).shape();
    Var u = autograd::conv_transposed3d(tape, h, b.vars("up" + s), b.spec("up" + s),
                                        {shape[2], shape[3], shape[4]});
    h = block(autograd::concat(tape, {skips[l], u}, 1), "dec" + s);
  }
  tr.output = b.conv3d(h, "head");
  return tr;
}

template <class T>
ForwardTrace forward(Tape<T>& tape, const ModelState<T>& state, const Tensor<T>& x) {
  const auto& c = state.config;
  check_history(c, x);
  if (c.kind == ModelKind::ResNet) return resnet_forward(tape, state, x);
  const Shape out_shape{x.dim(0), c.in_channels, c.horizon, x.dim(3), x.dim(4)};
  const Tensor<T> folded = fold_time(x);
  if (c.kind == ModelKind::Conv3DUNet) {
    auto tr = conv3d_unet_forward(tape, state, folded);
    tr.output = autograd::reshape(tape, tr.output, out_shape);
    return tr;
  }
  auto tr = sparse_unet_forward(tape, state, dense_to_sparse(folded));
  tr.output = autograd::reshape(tape, autograd::sparse_to_dense(tape, tr.sparse_head), out_shape);
  return tr;
}

template <class T>
Tensor<T> predict(const ModelState<T>& state, const Tensor<T>& x) {
  Tape<T> tape;
  const auto tr = forward(tape, state, x);
  return tape.dense(tr.output);
}

template <class T>
LossGrads<T> loss_and_grads(const ModelState<T>& state, const Tensor<T>& x, const Tensor<T>& target) {
  Tape<T> tape;
  const auto tr = forward(tape, state, x);
  const Var loss = autograd::mse(tape, tr.output, target);
  tape.backward(loss);
  LossGrads<T> out;
  out.loss = static_cast<double>(tape.dense(loss)[0]);
  out.grads = tape.parameter_grads();
  for (const auto& [name, p] : state.params) {
    if (!out.grads.count(name)) out.grads.emplace(name, Tensor<T>(p.shape()));
  }
  return out;
}

#define T4C_INSTANTIATE(T)                                                                        \
  template ModelState<T> init_model<T>(const ModelConfig&, std::uint64_t);                        \
  template std::int64_t param_count(const ModelState<T>&, const std::string&);                    \
  template ModelState<T> warm_up_swap(const ModelState<T>&);                                             \
  template ForwardTrace forward(Tape<T>&, const ModelState<T>&, const Tensor<T>&);                \
  template ForwardTrace sparse_unet_forward(Tape<T>&, const ModelState<T>&, const SparseTensor<T>&); \
  template ForwardTrace conv3d_unet_forward(Tape<T>&, const ModelState<T>&, const Tensor<T>&);    \
  template Tensor<T> fold_time(const Tensor<T>&);                                                 \
  template Tensor<T> unfold_time(const Tensor<T>&, std::int64_t);                                 \
  template Tensor<T> predict(const ModelState<T>&, const Tensor<T>&);                             \
  template LossGrads<T> loss_and_grads(const ModelState<T>&, const Tensor<T>&, const Tensor<T>&);

T4C_INSTANTIATE(float)
T4C_INSTANTIATE(double)
#undef T4C_INSTANTIATE

}  // namespace t4c
