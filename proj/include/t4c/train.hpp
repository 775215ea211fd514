#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "t4c/loader.hpp"
#include "t4c/models.hpp"

namespace t4c {

enum class OptimizerKind { Adam, SGD };

struct TrainConfig {
  int epochs = 1;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;  // SGD
  std::uint64_t seed = 0;
  int warm_up_epochs = 0;
  /// Timing columns are written as 0 so repeated runs produce identical bytes.
  bool deterministic = true;

  void validate() const;
};

/// Raised when a loss or gradient stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::int64_t step)
      : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

template <class T>
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  std::map<std::string, Tensor<T>> first;   // Adam m / SGD velocity
  std::map<std::string, Tensor<T>> second;  // Adam v
  std::int64_t step = 0;
};

template <class T>
OptimizerState<T> make_optimizer(OptimizerKind kind, const std::map<std::string, Tensor<T>>& params);

/// Bias-corrected Adam update. Returns fresh parameter tensors; the inputs
/// are left untouched so earlier snapshots stay valid.
template <class T>
std::map<std::string, Tensor<T>> adam_step(const std::map<std::string, Tensor<T>>& params,
                                           const std::map<std::string, Tensor<T>>& grads, OptimizerState<T>& opt,
                                           double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

/// SGD with classical momentum: v = mu v + g; p -= lr v.
template <class T>
std::map<std::string, Tensor<T>> sgd_step(const std::map<std::string, Tensor<T>>& params,
                                          const std::map<std::string, Tensor<T>>& grads, OptimizerState<T>& opt,
                                          double lr, double momentum);

struct MetricsRecord {
  int epoch = 0;
  std::int64_t step = 0;
  std::string city;  // "all" for the epoch aggregate
  double train_mse = 0.0;
  double wall_seconds = 0.0;
  double batches_per_second = 0.0;
  double nnz_rate = 0.0;
};

/// CSV with header, one row per record and a trailing "# seed=..., mode=..." line.
std::string metrics_csv(const std::vector<MetricsRecord>& rows, std::uint64_t seed, const std::string& mode);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& rows, std::uint64_t seed,
                       const std::string& mode);

using BatchFeed = std::function<std::optional<Batch>()>;
/// Produces the batch stream of one epoch.
using EpochSource = std::function<BatchFeed(int epoch)>;

/// Two-stage epochs over a manifest: epoch e uses plan_epoch with a seed derived from (seed, e).
EpochSource manifest_source(std::shared_ptr<const Manifest> manifest, SamplerConfig sampler, LoaderOptions loader,
                            std::uint64_t seed, std::size_t max_batches_per_epoch = 0);
/// The same batches every epoch.
EpochSource fixed_source(std::vector<Batch> batches);

struct TrainResult {
  ModelState<float> best;  // lowest epoch-mean training MSE
  ModelState<float> last;
  double best_mse = 0.0;
  std::vector<MetricsRecord> metrics;
  std::vector<double> step_losses;
};

/// Plain training from `init` (or a fresh model seeded by cfg.seed).
TrainResult train(const ModelConfig& model, const TrainConfig& cfg, const EpochSource& source,
                  std::optional<ModelState<float>> init = std::nullopt, int first_epoch = 0);

struct WarmUpResult {
  TrainResult phase1;         // ConvOutput head
  ModelState<float> swapped;  // state at the start of phase 2
  TrainResult phase2;         // sequential head
  TrainResult combined;       // metrics of both phases, best over both
};

/// ConvOutput training for cfg.warm_up_epochs, head swap, then cfg.epochs
/// of sequential training. With zero warm-up epochs this is train().
WarmUpResult warm_up_train(const ModelConfig& model, const TrainConfig& cfg, const EpochSource& source);

struct EvalResult {
  double mse = 0.0;
  std::vector<double> per_frame;  // horizon entries
  std::map<std::string, double> per_city;
  std::size_t batches = 0;
};

EvalResult evaluate(const ModelState<float>& state, const BatchFeed& feed);

}  // namespace t4c
