#include "t4c/loader.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "t4c/dayfile.hpp"
#include "t4c/error.hpp"

namespace t4c {

namespace fs = std::filesystem;

Manifest Manifest::load(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open manifest " + manifest_path);
  Manifest m;
  m.base_dir = fs::path(manifest_path).parent_path().string();
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string part; std::getline(ss, part, '\t');) f.push_back(part);
    auto bad = [&](const std::string& why) {
      return ConfigError(manifest_path + ":" + std::to_string(lineno) + ": " + why);
    };
    if (f.size() != 4) throw bad("expected 4 tab-separated fields, got " + std::to_string(f.size()));
    ManifestEntry e;
    e.path = f[0];
    e.city = f[1];
    try {
      e.year = std::stoi(f[2]);
      e.weekday = std::stoi(f[3]);
    } catch (const std::exception&) {
      throw bad("year and weekday must be integers");
    }
    if (e.weekday < 0 || e.weekday > 6) throw bad("weekday must be 0..6");
    m.files.push_back(e);
    DayReader reader(m.resolve(m.files.size() - 1));
    const auto& h = reader.header();
    if (h.year != e.year || h.weekday != e.weekday) {
      throw bad("year/weekday disagree with the header of " + e.path);
    }
    auto& back = m.files.back();
    back.city_id = h.city;
    back.timesteps = h.timesteps;
    back.height = h.height;
    back.width = h.width;
  }
  return m;
}

void Manifest::save(const std::string& manifest_path) const {
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create manifest " + manifest_path);
  for (const auto& e : files) out << e.path << '\t' << e.city << '\t' << e.year << '\t' << e.weekday << '\n';
  if (!out) throw std::runtime_error("write failed on " + manifest_path);
}

std::string Manifest::resolve(std::size_t file) const {
  const fs::path p(files.at(file).path);
  return p.is_absolute() ? p.string() : (fs::path(base_dir) / p).string();
}

std::set<std::string> Manifest::cities() const {
  std::set<std::string> s;
  for (const auto& e : files) s.insert(e.city);
  return s;
}
std::set<int> Manifest::years() const {
  std::set<int> s;
  for (const auto& e : files) s.insert(e.year);
  return s;
}
std::set<int> Manifest::weekdays() const {
  std::set<int> s;
  for (const auto& e : files) s.insert(e.weekday);
  return s;
}

std::size_t EpochPlan::samples() const {
  std::size_t n = 0;
  for (const auto& f : files) n += f.starts.size();
  return n;
}

std::vector<int> valid_starts(const SamplerConfig& cfg, int timesteps) {
  const int window = cfg.history + cfg.horizon;
  const int admitted = timesteps - window + 1;
  if (admitted < 1) {
    throw ConfigError("a day of " + std::to_string(timesteps) + " frames has no window of " + std::to_string(window));
  }
  if (cfg.valid_indices < 1) throw ConfigError("valid_indices must be positive");
  std::vector<int> s(static_cast<std::size_t>(std::min(cfg.valid_indices, admitted)));
  std::iota(s.begin(), s.end(), 0);
  return s;
}

namespace {

struct Coverage {
  std::map<std::string, int> city;
  std::map<int, int> year, weekday;

  void add(const ManifestEntry& e, int d) {
    city[e.city] += d;
    year[e.year] += d;
    weekday[e.weekday] += d;
  }
  /// True when swapping `out` for `in` leaves every value `out` covers still covered.
  bool swappable(const ManifestEntry& out, const ManifestEntry& in) const {
    return (city.at(out.city) > 1 || in.city == out.city) && (year.at(out.year) > 1 || in.year == out.year) &&
           (weekday.at(out.weekday) > 1 || in.weekday == out.weekday);
  }
};

}  // namespace

EpochPlan plan_epoch(const Manifest& manifest, const SamplerConfig& cfg, std::uint64_t seed) {
  for (const auto& c : cfg.required_cities) {
    if (!manifest.cities().count(c)) throw ConfigError("epoch coverage impossible: no file for city " + c);
  }
  for (int y : cfg.required_years) {
    if (!manifest.years().count(y)) throw ConfigError("epoch coverage impossible: no file for year " + std::to_string(y));
  }
  for (int w : cfg.required_weekdays) {
    if (!manifest.weekdays().count(w)) {
      throw ConfigError("epoch coverage impossible: no file for weekday " + std::to_string(w));
    }
  }

  std::mt19937_64 rng(seed);
  const std::size_t n = manifest.files.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t k = cfg.files_per_epoch <= 0 ? n : std::min<std::size_t>(n, cfg.files_per_epoch);

  Coverage cov;
  for (const auto& e : manifest.files) cov.add(e, 0);
  for (std::size_t i = 0; i < k; ++i) cov.add(manifest.files[order[i]], 1);

  // Greedy repair: for each uncovered value, swap an undrawn file carrying it
  // for a drawn one whose values stay covered.
  auto repair = [&](auto missing_in, const std::string& what) {
    for (std::size_t j = k; j < n; ++j) {
      const auto& cand = manifest.files[order[j]];
      if (!missing_in(cand)) continue;
      for (std::size_t i = k; i-- > 0;) {
        const auto& out = manifest.files[order[i]];
        if (!cov.swappable(out, cand)) continue;
        cov.add(out, -1);
        cov.add(cand, 1);
        std::swap(order[i], order[j]);
        return;
      }
    }
    throw ConfigError("epoch coverage impossible with " + std::to_string(k) + " files: cannot cover " + what);
  };
  for (const auto& c : manifest.cities()) {
    if (cov.city[c] == 0) repair([&](const ManifestEntry& e) { return e.city == c; }, "city " + c);
  }
  for (int y : manifest.years()) {
    if (cov.year[y] == 0) repair([&](const ManifestEntry& e) { return e.year == y; }, "year " + std::to_string(y));
  }
  for (int w : manifest.weekdays()) {
    if (cov.weekday[w] == 0) {
      repair([&](const ManifestEntry& e) { return e.weekday == w; }, "weekday " + std::to_string(w));
    }
  }

  EpochPlan plan;
  for (std::size_t i = 0; i < k; ++i) {
    FilePlan fp{order[i], valid_starts(cfg, manifest.files[order[i]].timesteps)};
    std::shuffle(fp.starts.begin(), fp.starts.end(), rng);
    plan.files.push_back(std::move(fp));
  }
  return plan;
}

std::vector<SampleRef> plan_order(const EpochPlan& plan) {
  std::vector<SampleRef> out;
  out.reserve(plan.samples());
  for (const auto& f : plan.files) {
    for (int s : f.starts) out.push_back({f.file, s});
  }
  return out;
}

std::vector<SampleRef> global_shuffle_order(const Manifest& manifest, const SamplerConfig& cfg, std::uint64_t seed) {
  std::vector<SampleRef> out;
  for (std::size_t f = 0; f < manifest.files.size(); ++f) {
    for (int s : valid_starts(cfg, manifest.files[f].timesteps)) out.push_back({f, s});
  }
  std::mt19937_64 rng(seed);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

double batch_nnz_rate(const Tensor<float>& x) {
  require_rank(x.shape(), 5, "batch_nnz_rate input");
  const std::int64_t B = x.dim(0), C = x.dim(1), sites = x.dim(2) * x.dim(3) * x.dim(4);
  const auto v = x.data();
  std::int64_t nz = 0;
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t s = 0; s < sites; ++s) {
      for (std::int64_t c = 0; c < C; ++c) {
        if (v[(b * C + c) * sites + s] != 0.0f) {
          ++nz;
          break;
        }
      }
    }
  }
  return static_cast<double>(nz) / static_cast<double>(B * sites);
}

BatchStream::BatchStream(const Manifest& manifest, const SamplerConfig& cfg, std::vector<SampleRef> order,
                         const LoaderOptions& opts)
    : manifest_(manifest), cfg_(cfg), order_(std::move(order)), opts_(opts) {
  if (opts_.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (opts_.workers < 1) throw ConfigError("workers must be >= 1");
  if (opts_.prefetch < 1) throw ConfigError("prefetch must be >= 1");
  batches_ = (order_.size() + opts_.batch_size - 1) / opts_.batch_size;
  if (opts_.max_batches > 0) batches_ = std::min(batches_, opts_.max_batches);
  for (int w = 0; w < opts_.workers; ++w) threads_.emplace_back([this, w] { work(w); });
}

BatchStream::~BatchStream() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) t.join();
}

std::size_t BatchStream::file_loads() const {
  std::lock_guard lock(mu_);
  return loads_;
}

void BatchStream::work(int worker) {
  std::size_t cached_file = static_cast<std::size_t>(-1);
  std::vector<std::uint8_t> cached_payload;
  for (std::size_t idx = static_cast<std::size_t>(worker); idx < batches_; idx += opts_.workers) {
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stop_ || idx < consumed_ + opts_.prefetch; });
      if (stop_) return;
    }
    try {
      Batch b = assemble(idx, cached_file, cached_payload);
      std::lock_guard lock(mu_);
      ready_.emplace(idx, std::move(b));
    } catch (...) {
      std::lock_guard lock(mu_);
      failed_.emplace(idx, std::current_exception());
      cv_.notify_all();
      return;
    }
    cv_.notify_all();
  }
}

Batch BatchStream::assemble(std::size_t index, std::size_t& cached_file, std::vector<std::uint8_t>& cached_payload) {
  const std::size_t first = index * opts_.batch_size;
  const std::size_t last = std::min(order_.size(), first + opts_.batch_size);
  const auto B = static_cast<std::int64_t>(last - first);
  const auto& e0 = manifest_.files.at(order_[first].file);
  const std::int64_t H = e0.height, W = e0.width, C = 8, Th = cfg_.history, Tf = cfg_.horizon;
  const std::int64_t plane = H * W;

  Batch batch;
  batch.input = Tensor<float>({B, C, Th, H, W});
  batch.target = Tensor<float>({B, C, Tf, H, W});
  auto in = batch.input.mutable_data();
  auto tg = batch.target.mutable_data();
  for (std::int64_t b = 0; b < B; ++b) {
    const SampleRef ref = order_[first + static_cast<std::size_t>(b)];
    const auto& entry = manifest_.files.at(ref.file);
    const std::string path = manifest_.resolve(ref.file);
    try {
      if (ref.file != cached_file) {
        cached_file = static_cast<std::size_t>(-1);
        DayReader reader(path);
        const auto& h = reader.header();
        if (h.height != H || h.width != W || h.channels != C) {
          throw ShapeError("grid " + std::to_string(h.height) + "x" + std::to_string(h.width) + "x" +
                           std::to_string(h.channels) + " differs from the batch grid");
        }
        cached_payload = reader.read_all(opts_.cold_reads);
        cached_file = ref.file;
        std::lock_guard lock(mu_);
        ++loads_;
      }
      if (ref.start < 0 || ref.start + Th + Tf > entry.timesteps) throw std::out_of_range("window outside the day");
      for (std::int64_t t = 0; t < Th + Tf; ++t) {
        const std::uint8_t* frame = cached_payload.data() + static_cast<std::size_t>((ref.start + t) * plane * C);
        const bool is_in = t < Th;
        float* dst = is_in ? in.data() + b * C * Th * plane + t * plane : tg.data() + b * C * Tf * plane + (t - Th) * plane;
        const std::int64_t tstride = (is_in ? Th : Tf) * plane;
        for (std::int64_t s = 0; s < plane; ++s) {
          const std::uint8_t* px = frame + s * C;
          for (std::int64_t c = 0; c < C; ++c) dst[c * tstride + s] = static_cast<float>(px[c]);
        }
      }
    } catch (const std::exception& ex) {
      throw std::runtime_error("loader: " + path + " window " + std::to_string(ref.start) + ": " + ex.what());
    }
    batch.samples.push_back(ref);
    batch.cities.push_back(entry.city);
  }
  return batch;
}

std::optional<Batch> BatchStream::next() {
  std::unique_lock lock(mu_);
  if (consumed_ >= batches_) return std::nullopt;
  const std::size_t idx = consumed_;
  cv_.wait(lock, [&] { return ready_.count(idx) || failed_.count(idx); });
  if (auto f = failed_.find(idx); f != failed_.end()) std::rethrow_exception(f->second);
  auto node = ready_.extract(idx);
  ++consumed_;
  lock.unlock();
  cv_.notify_all();
  return std::move(node.mapped());
}

std::unique_ptr<BatchStream> iterate_batches(const Manifest& manifest, const SamplerConfig& cfg,
                                             const EpochPlan& plan, const LoaderOptions& opts) {
  return std::make_unique<BatchStream>(manifest, cfg, plan_order(plan), opts);
}

std::unique_ptr<BatchStream> global_shuffle_baseline(const Manifest& manifest, const SamplerConfig& cfg,
                                                     std::uint64_t seed, const LoaderOptions& opts) {
  return std::make_unique<BatchStream>(manifest, cfg, global_shuffle_order(manifest, cfg, seed), opts);
}

}  // namespace t4c
