#include "t4c/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "t4c/generator.hpp"

namespace t4c {

namespace fs = std::filesystem;

double median(std::vector<double> v) {
  if (v.empty()) throw ConfigError("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
    i = j + 1;
  }
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 0x100000001b3ull;
  }
  return h;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw ConfigError("spearman: need two samples of equal size >= 2");
  return pearson(ranks(a), ranks(b));
}

double geometric_mean(const std::vector<double>& v) {
  if (v.empty()) throw ConfigError("geometric mean of an empty sample");
  double s = 0.0;
  for (double x : v) s += std::log(x);
  return std::exp(s / static_cast<double>(v.size()));
}

Manifest city_manifest(const Manifest& m, const std::string& city) {
  Manifest out;
  out.base_dir = m.base_dir;
  for (const auto& f : m.files) {
    if (f.city == city) out.files.push_back(f);
  }
  return out;
}

std::vector<ConvBenchRow> bench_conv(const Manifest& manifest, const ModelState<float>& sparse,
                                     const ModelState<float>& dense, const ConvBenchOptions& opts) {
  if (opts.timed < 1 || opts.warmup < 0 || opts.distinct < 1 || opts.sparse_repeats < 1) throw ConfigError("bench-conv: bad round counts");
  if (sparse.config.kind != ModelKind::SparseUNet || dense.config.kind != ModelKind::Conv3DUNet) {
    throw ConfigError("bench-conv compares a sparse-unet with a conv3d-unet");
  }
  if (manifest.files.empty()) throw ConfigError("bench-conv: empty manifest");

  struct City {
    ConvBenchRow row;
    std::vector<Batch> batches;
    std::vector<double> t_sparse, t_dense;
  };
  std::vector<City> cities;
  SamplerConfig sampler;
  LoaderOptions lo;
  lo.batch_size = opts.batch_size;
  lo.workers = 1;
  lo.max_batches = static_cast<std::size_t>(opts.distinct);
  for (const auto& name : manifest.cities()) {
    City c;
    c.row.city = name;
    const Manifest sub = city_manifest(manifest, name);
    auto stream = iterate_batches(sub, sampler, plan_epoch(sub, sampler, opts.seed), lo);
    while (auto b = stream->next()) c.batches.push_back(std::move(*b));
    if (c.batches.empty()) throw ConfigError("bench-conv: no batches for " + name);
    for (const auto& b : c.batches) c.row.nnz_rate += batch_nnz_rate(b.input);
    c.row.nnz_rate /= static_cast<double>(c.batches.size());
    for (const auto& p : city_profiles()) {
      if (p.name == name) c.row.profile_rate = p.rate;
    }
    double frames = 0.0;
    for (std::size_t i = 0; i < sub.files.size(); ++i) {
      const auto day = read_day_file(sub.resolve(i));
      frames += day.header.timesteps;
      c.row.corpus_nnz_rate += payload_nnz_rate(day.header, day.payload) * day.header.timesteps;
    }
    c.row.corpus_nnz_rate /= frames;
    cities.push_back(std::move(c));
  }

  for (int round = 0; round < opts.warmup + opts.timed; ++round) {
    for (auto& c : cities) {
      const Batch& b = c.batches[static_cast<std::size_t>(round) % c.batches.size()];
      auto t0 = Clock::now();
      for (int r = 0; r < opts.sparse_repeats; ++r) loss_and_grads(sparse, b.input, b.target);
      const double ts = seconds_since(t0) / opts.sparse_repeats;
      t0 = Clock::now();
      loss_and_grads(dense, b.input, b.target);
      const double td = seconds_since(t0);
      if (round >= opts.warmup) {
        c.t_sparse.push_back(ts);
        c.t_dense.push_back(td);
      }
    }
  }
  std::vector<ConvBenchRow> rows;
  for (auto& c : cities) {
    c.row.sparse_batches_per_second = 1.0 / median(c.t_sparse);
    c.row.dense_batches_per_second = 1.0 / median(c.t_dense);
    c.row.speedup = c.row.sparse_batches_per_second / c.row.dense_batches_per_second;
    rows.push_back(c.row);
  }
  return rows;
}

std::string conv_bench_csv(const std::vector<ConvBenchRow>& rows, bool report_nnz, std::uint64_t seed,
                           const std::string& mode) {
  std::ostringstream os;
  os << "city,nnz_rate,dense_batches_per_second,sparse_batches_per_second,speedup";
  if (report_nnz) os << ",profile_rate,corpus_nnz_rate";
  os << '\n' << std::setprecision(6);
  for (const auto& r : rows) {
    os << r.city << ',' << r.nnz_rate << ',' << r.dense_batches_per_second << ',' << r.sparse_batches_per_second
       << ',' << r.speedup;
    if (report_nnz) os << ',' << r.profile_rate << ',' << r.corpus_nnz_rate;
    os << '\n';
  }
  os << "# seed=" << seed << ", mode=" << mode << '\n';
  return os.str();
}

LoaderBenchResult bench_loader(const Manifest& manifest, const LoaderBenchOptions& opts) {
  if (opts.scheme != "two-stage" && opts.scheme != "global") {
    throw ConfigError("bench-loader: scheme must be two-stage or global, got '" + opts.scheme + "'");
  }
  if (opts.timed < 1 || opts.warmup < 0) throw ConfigError("bench-loader: bad batch counts");
  LoaderOptions lo;
  lo.batch_size = opts.batch_size;
  lo.workers = opts.workers;
  lo.cold_reads = opts.cold_reads;
  lo.max_batches = static_cast<std::size_t>(opts.warmup + opts.timed);
  auto stream = opts.scheme == "global"
                    ? global_shuffle_baseline(manifest, opts.sampler, opts.seed, lo)
                    : iterate_batches(manifest, opts.sampler, plan_epoch(manifest, opts.sampler, opts.seed), lo);
  LoaderBenchResult r;
  r.scheme = opts.scheme;
  r.workers = opts.workers;
  r.batch_size = opts.batch_size;
  r.order_hash = 0xcbf29ce484222325ull;
  int seen = 0;
  auto t0 = Clock::now();
  while (auto b = stream->next()) {
    for (const auto& s : b->samples) {
      r.order_hash = fnv1a(fnv1a(r.order_hash, s.file), static_cast<std::uint64_t>(s.start));
    }
    if (++seen == opts.warmup) t0 = Clock::now();
  }
  r.seconds = seconds_since(t0);
  r.batches = static_cast<std::size_t>(std::max(0, seen - opts.warmup));
  if (r.batches == 0) throw ConfigError("bench-loader: the epoch has no batches past the warm-up");
  r.batches_per_second = static_cast<double>(r.batches) / r.seconds;
  r.file_loads = stream->file_loads();
  return r;
}

std::string loader_bench_csv(const std::vector<LoaderBenchResult>& rows, std::uint64_t seed, const std::string& mode) {
  std::ostringstream os;
  os << "scheme,workers,batch_size,batches,seconds,batches_per_second,file_loads,order_hash\n" << std::setprecision(6);
  for (const auto& r : rows) {
    os << r.scheme << ',' << r.workers << ',' << r.batch_size << ',' << r.batches << ',' << r.seconds << ','
       << r.batches_per_second << ',' << r.file_loads << ',' << std::hex << r.order_hash << std::dec << '\n';
  }
  os << "# seed=" << seed << ", mode=" << mode << '\n';
  return os.str();
}

RunRecord run_training(const std::string& model, const Manifest& manifest, const ExperimentOptions& opts,
                       const std::string& out_dir, const std::string& city) {
  const ModelConfig mc = model_config(model);
  if (opts.warm_up_epochs > opts.epochs) throw ConfigError("warm-up epochs exceed the epoch count");
  TrainConfig cfg;
  cfg.epochs = opts.epochs - opts.warm_up_epochs;
  cfg.warm_up_epochs = opts.warm_up_epochs;
  cfg.seed = opts.seed;
  cfg.learning_rate = opts.learning_rate;
  cfg.deterministic = opts.deterministic;
  auto shared = std::make_shared<const Manifest>(manifest);
  const auto source = manifest_source(shared, opts.sampler, opts.loader, opts.seed, opts.max_batches_per_epoch);
  RunRecord rec{model, city, warm_up_train(mc, cfg, source).combined};
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const std::string tag = city.empty() ? model : model + "_" + city;
    const fs::path base = fs::path(out_dir) / tag;
    write_metrics_csv(base.string() + ".csv", rec.result.metrics, opts.seed,
                      opts.deterministic ? "deterministic" : "timed");
    save_checkpoint(base.string() + ".ckpt", rec.result.best);
    save_checkpoint(base.string() + ".last.ckpt", rec.result.last);
  }
  return rec;
}

std::vector<RunRecord> experiment_fig3(const Manifest& manifest, const ExperimentOptions& opts,
                                       const std::string& out_dir) {
  std::vector<RunRecord> runs;
  for (const std::string model : {"3dresnet", "3dresnet-convout", "2dresnet"}) {
    ExperimentOptions o = opts;
    if (model != "3dresnet") o.warm_up_epochs = 0;
    runs.push_back(run_training(model, manifest, o, out_dir));
  }
  return runs;
}

std::vector<RunRecord> experiment_fig4(const Manifest& manifest, const ExperimentOptions& opts,
                                       const std::string& out_dir) {
  ExperimentOptions o = opts;
  o.warm_up_epochs = 0;
  o.sampler.required_cities.clear();
  std::vector<RunRecord> runs;
  for (const auto& city : manifest.cities()) {
    const Manifest sub = city_manifest(manifest, city);
    for (const std::string model : {"sparse-unet", "conv3d-unet"}) {
      runs.push_back(run_training(model, sub, o, out_dir, city));
    }
  }
  return runs;
}

std::vector<double> epoch_curve(const TrainResult& r) {
  std::vector<double> out;
  for (const auto& m : r.metrics) {
    if (m.city == "all") out.push_back(m.train_mse);
  }
  return out;
}

}  // namespace t4c
