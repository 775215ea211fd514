#pragma once

// Forecasting networks. Every model maps a history [B, 8, 12, H, W] to a
// prediction [B, 8, 6, H, W]; parameters live in a flat name -> tensor map
// ("stem.weight", "res0.conv1.bias", ...).

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "t4c/autograd.hpp"

namespace t4c {

enum class ModelKind { ResNet, SparseUNet, Conv3DUNet };
enum class OutputMode { Sequential, ConvOutput };
enum class ConvDim { D3, D2 };

struct ModelConfig {
  ModelKind kind = ModelKind::ResNet;
  int in_channels = 8;
  int history = 12;
  int horizon = 6;

  // ResNet family.
  int hidden = 16;
  int residual_blocks = 4;
  OutputMode output_mode = OutputMode::Sequential;
  ConvDim conv_dim = ConvDim::D3;
  bool prior_last_frame = false;  // sequential layer 1 sees x_12 instead of a zero frame

  // UNet family.
  int levels = 3;
  int base_channels = 16;
  bool generalized = false;  // sparse UNet with generalized convs instead of submanifold

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);
};

/// Preset for a command-line model name: 3dresnet, 3dresnet-convout,
/// 2dresnet, sparse-unet, conv3d-unet.
ModelConfig model_config(const std::string& name);
std::string model_name(const ModelConfig& cfg);
const std::vector<std::string>& model_names();

template <class T>
struct ModelState {
  ModelConfig config;
  std::map<std::string, Tensor<T>> params;
  std::int64_t step = 0;

  template <class U>
  ModelState<U> cast() const {
    ModelState<U> out{config, {}, step};
    for (const auto& [name, t] : params) out.params.emplace(name, t.template cast<U>());
    return out;
  }
};

/// Name -> shape of every parameter the forward pass reads.
std::map<std::string, Shape> parameter_shapes(const ModelConfig& cfg);

/// Fresh parameters; each tensor is drawn from its own stream seeded by
/// (seed, name), so re-initializing one layer never disturbs the others.
template <class T>
ModelState<T> init_model(const ModelConfig& cfg, std::uint64_t seed);

/// Total element count of parameters whose name starts with `prefix`.
template <class T>
std::int64_t param_count(const ModelState<T>& state, const std::string& prefix = "");

/// Replaces the ConvOutput head by the sequential head. Stem and residual
/// parameters are copied; sequential layer k takes the head's weights for
/// frame k and zero weights on the previous frame, so predictions carry over.
template <class T>
ModelState<T> warm_up_swap(const ModelState<T>& state);

struct ForwardTrace {
  autograd::Var output;       // dense [B, 8, 6, H, W]
  autograd::Var stem;         // ResNet stem activation
  autograd::Var sparse_head;  // sparse UNet head output (48 channels)
  std::map<std::string, autograd::Var> params;
};

/// Records the forward pass of `state` on `x` [B, 8, 12, H, W] into `tape`.
template <class T>
ForwardTrace forward(autograd::Tape<T>& tape, const ModelState<T>& state, const Tensor<T>& x);

/// Sparse UNet on an already folded sparse input (C = 8 * 12). The result
/// has 8 * 6 channels; in submanifold mode its coordinates equal the input's.
template <class T>
ForwardTrace sparse_unet_forward(autograd::Tape<T>& tape, const ModelState<T>& state,
                                 const SparseTensor<T>& folded);

/// Dense UNet on a folded input [B, 96, 1, H, W]; output [B, 48, 1, H, W].
template <class T>
ForwardTrace conv3d_unet_forward(autograd::Tape<T>& tape, const ModelState<T>& state,
                                 const Tensor<T>& folded);

/// [B, C, T, H, W] -> [B, C*T, 1, H, W] (channel c*T + t) and back.
template <class T>
Tensor<T> fold_time(const Tensor<T>& x);
template <class T>
Tensor<T> unfold_time(const Tensor<T>& x, std::int64_t time);

template <class T>
Tensor<T> predict(const ModelState<T>& state, const Tensor<T>& x);

template <class T>
struct LossGrads {
  double loss = 0.0;
  std::map<std::string, Tensor<T>> grads;
};
template <class T>
LossGrads<T> loss_and_grads(const ModelState<T>& state, const Tensor<T>& x, const Tensor<T>& target);

/// Binary checkpoint (float32 payload).
void save_checkpoint(const std::string& path, const ModelState<float>& state);
ModelState<float> load_checkpoint(const std::string& path);
std::vector<std::uint8_t> encode_checkpoint(const ModelState<float>& state);
ModelState<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

}  // namespace t4c
