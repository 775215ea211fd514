#pragma once

// Corpus manifest, two-stage epoch planning (stratified file draw, then a
// local shuffle of window starts inside each file) and the prefetching
// batch stream.

#include <condition_variable>
#include <cstdint>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "t4c/tensor.hpp"

namespace t4c {

struct ManifestEntry {
  std::string path;  // relative to the manifest directory
  std::string city;
  std::uint16_t city_id = 0;
  int year = 0;
  int weekday = 0;
  int timesteps = 0;
  int height = 0;
  int width = 0;
};

struct Manifest {
  std::string base_dir;
  std::vector<ManifestEntry> files;

  /// Parses `path<TAB>city<TAB>year<TAB>weekday` lines and checks every file
  /// header against its line.
  static Manifest load(const std::string& manifest_path);
  void save(const std::string& manifest_path) const;
  std::string resolve(std::size_t file) const;
  std::set<std::string> cities() const;
  std::set<int> years() const;
  std::set<int> weekdays() const;
};

struct SamplerConfig {
  int history = 12;
  int horizon = 6;
  int valid_indices = 240;   // window starts 0 .. valid_indices - 1 (clipped to fit the day)
  int files_per_epoch = 0;   // 0 draws every file
  std::vector<std::string> required_cities;
  std::vector<int> required_years;
  std::vector<int> required_weekdays;
};

struct FilePlan {
  std::size_t file = 0;
  std::vector<int> starts;  // permutation of the file's valid window starts
};

struct EpochPlan {
  std::vector<FilePlan> files;
  std::size_t samples() const;
};

/// Window starts admitted for a file with `timesteps` frames.
std::vector<int> valid_starts(const SamplerConfig& cfg, int timesteps);

/// Stage 1 draws files without replacement so that every city, year and
/// weekday of the manifest appears; stage 2 permutes each file's starts.
EpochPlan plan_epoch(const Manifest& manifest, const SamplerConfig& cfg, std::uint64_t seed);

struct SampleRef {
  std::size_t file = 0;
  int start = 0;
  bool operator==(const SampleRef&) const = default;
};

/// Plan order, flattened.
std::vector<SampleRef> plan_order(const EpochPlan& plan);
/// Every (file, start) of the manifest shuffled uniformly.
std::vector<SampleRef> global_shuffle_order(const Manifest& manifest, const SamplerConfig& cfg, std::uint64_t seed);

struct Batch {
  Tensor<float> input;   // [B, 8, history, H, W], raw 0..255 values
  Tensor<float> target;  // [B, 8, horizon, H, W]
  std::vector<SampleRef> samples;
  std::vector<std::string> cities;
};

/// Fraction of (b, t, h, w) sites of x [B, C, T, H, W] with any non-zero channel.
double batch_nnz_rate(const Tensor<float>& x);

struct LoaderOptions {
  int batch_size = 2;
  int workers = 2;
  std::size_t prefetch = 8;  // batches buffered ahead of the consumer
  bool cold_reads = false;   // evict a file from the page cache before loading it
  std::size_t max_batches = 0;  // 0 streams the whole order
};

/// Ordered, bounded, multi-worker batch stream. Worker w assembles batches
/// w, w + workers, ...; each worker keeps the last day file it loaded in
/// memory, so consecutive samples from one file cost one read.
class BatchStream {
 public:
  BatchStream(const Manifest& manifest, const SamplerConfig& cfg, std::vector<SampleRef> order,
              const LoaderOptions& opts);
  ~BatchStream();
  BatchStream(const BatchStream&) = delete;
  BatchStream& operator=(const BatchStream&) = delete;

  /// Next batch in order; nullopt at the end. Rethrows loader failures.
  std::optional<Batch> next();
  std::size_t batch_count() const noexcept { return batches_; }
  /// Day files read from storage so far.
  std::size_t file_loads() const;

 private:
  void work(int worker);
  Batch assemble(std::size_t index, std::size_t& cached_file, std::vector<std::uint8_t>& cached_payload);

  const Manifest& manifest_;
  SamplerConfig cfg_;
  std::vector<SampleRef> order_;
  LoaderOptions opts_;
  std::size_t batches_ = 0;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::size_t, Batch> ready_;
  std::map<std::size_t, std::exception_ptr> failed_;
  std::size_t consumed_ = 0;
  std::size_t loads_ = 0;
  bool stop_ = false;
  std::vector<std::thread> threads_;
};

std::unique_ptr<BatchStream> iterate_batches(const Manifest& manifest, const SamplerConfig& cfg,
                                             const EpochPlan& plan, const LoaderOptions& opts);
std::unique_ptr<BatchStream> global_shuffle_baseline(const Manifest& manifest, const SamplerConfig& cfg,
                                                     std::uint64_t seed, const LoaderOptions& opts);

}  // namespace t4c
