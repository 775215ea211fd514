#pragma once

// Benchmarks and training experiments behind the command-line tool:
// sparse-vs-dense UNet step timing per city, loader throughput for the
// two sampling schemes, and the ResNet / UNet comparison runs.

#include <cstdint>
#include <string>
#include <vector>

#include "t4c/train.hpp"

namespace t4c {

double median(std::vector<double> v);
/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);
double geometric_mean(const std::vector<double>& v);

/// Files of one city, in manifest order.
Manifest city_manifest(const Manifest& m, const std::string& city);

struct ConvBenchOptions {
  int warmup = 3;     // untimed rounds
  int timed = 20;     // timed rounds; the reported figure is the median
  int batch_size = 2;
  int distinct = 4;   // batches cycled per city
  int sparse_repeats = 5;  // sparse passes averaged per round
  std::uint64_t seed = 0;
};

struct ConvBenchRow {
  std::string city;
  double nnz_rate = 0.0;  // mean non-zero rate of the timed batches
  double dense_batches_per_second = 0.0;
  double sparse_batches_per_second = 0.0;
  double speedup = 0.0;
  double profile_rate = 0.0;     // reference rate of the city, 0 when unknown
  double corpus_nnz_rate = 0.0;  // over every frame of the city's files
};

/// Times one forward + backward pass per batch for both models. Cities are
/// visited round-robin within every round so slow phases of the host hit all
/// cities alike.
std::vector<ConvBenchRow> bench_conv(const Manifest& manifest, const ModelState<float>& sparse,
                                     const ModelState<float>& dense, const ConvBenchOptions& opts);
std::string conv_bench_csv(const std::vector<ConvBenchRow>& rows, bool report_nnz, std::uint64_t seed,
                           const std::string& mode);

struct LoaderBenchOptions {
  std::string scheme = "two-stage";  // or "global"
  int workers = 2;
  int batch_size = 2;
  int warmup = 3;
  int timed = 20;
  bool cold_reads = true;
  std::uint64_t seed = 0;
  SamplerConfig sampler;
};

struct LoaderBenchResult {
  std::string scheme;
  int workers = 0;
  int batch_size = 0;
  std::size_t batches = 0;  // timed batches
  double seconds = 0.0;
  double batches_per_second = 0.0;
  std::size_t file_loads = 0;
  std::uint64_t order_hash = 0;  // FNV-1a over the (file, start) stream
};

/// Batches per second over `timed` consecutive batches after `warmup`.
LoaderBenchResult bench_loader(const Manifest& manifest, const LoaderBenchOptions& opts);
std::string loader_bench_csv(const std::vector<LoaderBenchResult>& rows, std::uint64_t seed, const std::string& mode);

struct ExperimentOptions {
  int epochs = 30;          // total, warm-up included
  int warm_up_epochs = 0;   // sequential ResNets only
  std::uint64_t seed = 0;
  double learning_rate = 1e-3;
  std::size_t max_batches_per_epoch = 0;
  SamplerConfig sampler;
  LoaderOptions loader;
  bool deterministic = true;
};

struct RunRecord {
  std::string model;
  std::string city;  // empty for whole-corpus runs
  TrainResult result;
};

/// Trains one model on the manifest. With `out_dir` set, writes
/// <tag>.csv, <tag>.ckpt (best) and <tag>.last.ckpt, tag = model[_city].
RunRecord run_training(const std::string& model, const Manifest& manifest, const ExperimentOptions& opts,
                       const std::string& out_dir = "", const std::string& city = "");

/// The three ResNet variants on one corpus with a shared seed.
std::vector<RunRecord> experiment_fig3(const Manifest& manifest, const ExperimentOptions& opts,
                                       const std::string& out_dir = "");
/// Both UNets, trained separately on every city of the manifest.
std::vector<RunRecord> experiment_fig4(const Manifest& manifest, const ExperimentOptions& opts,
                                       const std::string& out_dir = "");

/// Epoch-aggregate ("all") training MSE, one entry per epoch.
std::vector<double> epoch_curve(const TrainResult& r);

}  // namespace t4c
