// t4c: corpus generation, benchmarks, training experiments and evaluation.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "t4c/dump.hpp"
#include "t4c/experiments.hpp"
#include "t4c/generator.hpp"

namespace fs = std::filesystem;
using namespace t4c;

namespace {

/// Bad flag values detected after parsing; mapped to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, ',');) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed on " + path.string());
}

std::vector<CityProfile> read_profile_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open profile table " + path);
  std::vector<CityProfile> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    CityProfile p;
    if (!(ls >> p.name >> p.rate >> p.ocean)) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected 'name rate ocean'");
    }
    out.push_back(p);
  }
  return out;
}

/// Known city names, NAME=rate custom profiles, or names from the table.
std::vector<CityProfile> resolve_cities(const std::string& list, const std::string& table) {
  std::vector<CityProfile> custom = table.empty() ? std::vector<CityProfile>{} : read_profile_table(table);
  std::vector<CityProfile> out;
  std::uint16_t next_id = static_cast<std::uint16_t>(city_profiles().size());
  auto add = [&](CityProfile p, bool known) {
    if (!known) p.id = next_id++;
    out.push_back(p);
  };
  std::vector<std::string> names = split_list(list);
  if (names.empty()) {
    for (const auto& p : custom) names.push_back(p.name);
  }
  for (const auto& n : names) {
    const auto eq = n.find('=');
    if (eq != std::string::npos) {
      CityProfile p;
      p.name = n.substr(0, eq);
      try {
        p.rate = std::stod(n.substr(eq + 1));
      } catch (const std::exception&) {
        throw UsageError("bad rate in '" + n + "'");
      }
      add(p, false);
      continue;
    }
    auto it = std::find_if(custom.begin(), custom.end(), [&](const CityProfile& p) { return p.name == n; });
    if (it != custom.end()) {
      bool known = false;
      CityProfile p = *it;
      for (const auto& k : city_profiles()) {
        if (k.name == n) p.id = k.id, known = true;
      }
      add(p, known);
      continue;
    }
    try {
      add(city_profile(n), true);
    } catch (const ConfigError&) {
      throw UsageError("unknown city '" + n + "' (known: ANT BAN BAR BER CHI IST MEL MOS, or NAME=rate)");
    }
  }
  return out;
}

std::pair<int, int> parse_size(const std::string& s) {
  int h = 0, w = 0;
  char x = 0;
  std::istringstream in(s);
  if (!(in >> h >> x >> w) || (x != 'x' && x != 'X') || h < 2 || w < 2) {
    throw UsageError("--size must look like 64x64");
  }
  return {h, w};
}

Manifest load_manifest(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("manifest " + path + " does not exist");
  return Manifest::load(path);
}

struct Common {
  std::string manifest;
  std::string out = ".";
  std::uint64_t seed = 0;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse and dense traffic forecasting toolkit"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic corpus and its manifest");
  std::string g_cities = "ANT,BAN,BAR,BER,CHI,IST,MEL,MOS", g_table, g_size = "64x64", g_out = "data";
  int g_days = 3, g_timesteps = 288;
  std::uint64_t g_seed = 0;
  gen->add_option("--cities", g_cities, "Comma-separated city names or NAME=rate");
  gen->add_option("--profile-table", g_table, "Whitespace table: name rate ocean");
  gen->add_option("--days", g_days, "Days per city")->check(CLI::NonNegativeNumber);
  gen->add_option("--size", g_size, "Grid HxW");
  gen->add_option("--timesteps", g_timesteps, "Frames per day")->check(CLI::Range(18, 65535));
  gen->add_option("--seed", g_seed);
  gen->add_option("--out", g_out);

  // bench-conv
  auto* bconv = app.add_subcommand("bench-conv", "Sparse vs dense UNet training-step throughput per city");
  Common bc;
  std::string bc_models = "sparse-unet,conv3d-unet", bc_trained;
  int bc_batches = 20, bc_batch_size = 2, bc_warmup = 3;
  bool bc_report = false;
  std::string bc_csv = "bench_conv.csv";
  bconv->add_option("--manifest", bc.manifest)->required();
  bconv->add_option("--models", bc_models, "sparse and dense model, comma-separated");
  bconv->add_option("--batches", bc_batches, "Timed rounds (median reported)")->check(CLI::PositiveNumber);
  bconv->add_option("--warmup", bc_warmup, "Untimed rounds")->check(CLI::NonNegativeNumber);
  bconv->add_option("--batch-size", bc_batch_size)->check(CLI::PositiveNumber);
  bconv->add_option("--out", bc_csv, "CSV path");
  bconv->add_option("--seed", bc.seed);
  bconv->add_flag("--report-nnz", bc_report, "Add reference and realized non-zero rates");
  bconv->add_option("--trained", bc_trained, "Directory with <model>.ckpt files to time instead of fresh weights");

  // bench-loader
  auto* bload = app.add_subcommand("bench-loader", "Cold-read loader throughput");
  Common bl;
  std::string bl_scheme = "two-stage", bl_csv = "bench_loader.csv";
  int bl_workers = 2, bl_batch_size = 2, bl_batches = 20, bl_warmup = 3;
  bool bl_warm_cache = false;
  bload->add_option("--manifest", bl.manifest)->required();
  bload->add_option("--scheme", bl_scheme)->check(CLI::IsMember({"two-stage", "global", "both"}));
  bload->add_option("--workers", bl_workers)->check(CLI::PositiveNumber);
  bload->add_option("--batch-size", bl_batch_size)->check(CLI::PositiveNumber);
  bload->add_option("--batches", bl_batches, "Timed batches")->check(CLI::PositiveNumber);
  bload->add_option("--warmup", bl_warmup)->check(CLI::NonNegativeNumber);
  bload->add_option("--seed", bl.seed);
  bload->add_option("--out", bl_csv, "CSV path");
  bload->add_flag("--warm-cache", bl_warm_cache, "Keep the page cache (default evicts before each read)");

  // train
  auto* tr = app.add_subcommand("train", "Train a model or run a comparison experiment");
  Common tc;
  tc.out = "runs";
  std::string t_model, t_experiment;
  ExperimentOptions t_opts;
  int t_windows = 240, t_batch_size = 2, t_workers = 2, t_files = 0;
  std::size_t t_max_batches = 0;
  bool t_timed = false;
  auto* t_model_opt = tr->add_option("--model", t_model)->check(CLI::IsMember(model_names()));
  auto* t_exp_opt = tr->add_option("--experiment", t_experiment)->check(CLI::IsMember({"fig3", "fig4"}));
  t_model_opt->excludes(t_exp_opt);
  tr->add_option("--manifest", tc.manifest)->required();
  tr->add_option("--epochs", t_opts.epochs, "Total epochs, warm-up included")->check(CLI::NonNegativeNumber);
  auto* t_wu = tr->add_option("--warm-up-epochs", t_opts.warm_up_epochs, "ConvOutput epochs before the sequential head")
                   ->check(CLI::NonNegativeNumber);
  tr->add_option("--seed", tc.seed);
  tr->add_option("--out", tc.out, "Output directory");
  tr->add_option("--lr", t_opts.learning_rate)->check(CLI::NonNegativeNumber);
  tr->add_option("--batch-size", t_batch_size)->check(CLI::PositiveNumber);
  tr->add_option("--workers", t_workers)->check(CLI::PositiveNumber);
  tr->add_option("--windows-per-file", t_windows, "Window starts admitted per file")->check(CLI::PositiveNumber);
  tr->add_option("--files-per-epoch", t_files, "0 draws every file")->check(CLI::NonNegativeNumber);
  tr->add_option("--batches-per-epoch", t_max_batches, "0 streams the whole epoch");
  tr->add_flag("--timed", t_timed, "Record wall-clock columns (output is then not reproducible)");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  Common ec;
  ec.out = "eval";
  std::string e_ckpt;
  int e_dump = 0, e_windows = 240, e_batch_size = 2;
  std::size_t e_max_batches = 0;
  ev->add_option("--checkpoint", e_ckpt)->required();
  ev->add_option("--manifest", ec.manifest)->required();
  ev->add_option("--dump-frames", e_dump, "Dump the first k predicted windows")->check(CLI::NonNegativeNumber);
  ev->add_option("--windows-per-file", e_windows)->check(CLI::PositiveNumber);
  ev->add_option("--batch-size", e_batch_size)->check(CLI::PositiveNumber);
  ev->add_option("--batches", e_max_batches, "0 evaluates every window");
  ev->add_option("--out", ec.out, "Directory for dumps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      GeneratorConfig cfg;
      cfg.cities = resolve_cities(g_cities, g_table);
      std::tie(cfg.height, cfg.width) = parse_size(g_size);
      cfg.days = g_days;
      cfg.timesteps = g_timesteps;
      cfg.seed = g_seed;
      try {
        cfg.validate();
      } catch (const ConfigError& e) {
        throw UsageError(e.what());
      }
      std::cout << write_corpus(g_out, cfg) << '\n';
    } else if (*bconv) {
      const auto names = split_list(bc_models);
      if (names.size() != 2) throw UsageError("--models takes a sparse and a dense model");
      std::map<ModelKind, ModelState<float>> models;
      for (const auto& n : names) {
        ModelConfig mc;
        try {
          mc = model_config(n);
        } catch (const ConfigError& e) {
          throw UsageError(e.what());
        }
        if (!bc_trained.empty()) {
          const auto path = fs::path(bc_trained) / (n + ".ckpt");
          if (!fs::exists(path)) throw std::runtime_error("missing checkpoint " + path.string());
          models[mc.kind] = load_checkpoint(path.string());
        } else {
          models[mc.kind] = init_model<float>(mc, bc.seed);
        }
      }
      if (!models.count(ModelKind::SparseUNet) || !models.count(ModelKind::Conv3DUNet)) {
        throw UsageError("--models must name sparse-unet and conv3d-unet");
      }
      ConvBenchOptions o;
      o.timed = bc_batches;
      o.warmup = bc_warmup;
      o.batch_size = bc_batch_size;
      o.seed = bc.seed;
      const auto rows = bench_conv(load_manifest(bc.manifest), models.at(ModelKind::SparseUNet),
                                   models.at(ModelKind::Conv3DUNet), o);
      const auto csv = conv_bench_csv(rows, bc_report, bc.seed, bc_trained.empty() ? "init" : "trained");
      write_text(bc_csv, csv);
      std::cout << csv;
    } else if (*bload) {
      const auto manifest = load_manifest(bl.manifest);
      std::vector<LoaderBenchResult> rows;
      const std::vector<std::string> schemes =
          bl_scheme == "both" ? std::vector<std::string>{"two-stage", "global"} : std::vector<std::string>{bl_scheme};
      for (const auto& s : schemes) {
        LoaderBenchOptions o;
        o.scheme = s;
        o.workers = bl_workers;
        o.batch_size = bl_batch_size;
        o.timed = bl_batches;
        o.warmup = bl_warmup;
        o.cold_reads = !bl_warm_cache;
        o.seed = bl.seed;
        rows.push_back(bench_loader(manifest, o));
      }
      const auto csv = loader_bench_csv(rows, bl.seed, bl_warm_cache ? "warm" : "cold");
      write_text(bl_csv, csv);
      std::cout << csv;
    } else if (*tr) {
      if (t_model.empty() && t_experiment.empty()) throw UsageError("train needs --model or --experiment");
      t_opts.seed = tc.seed;
      t_opts.deterministic = !t_timed;
      t_opts.sampler.valid_indices = t_windows;
      t_opts.sampler.files_per_epoch = t_files;
      t_opts.loader.batch_size = t_batch_size;
      t_opts.loader.workers = t_workers;
      t_opts.max_batches_per_epoch = t_max_batches;
      if (t_experiment == "fig3" && t_wu->count() == 0) t_opts.warm_up_epochs = t_opts.epochs / 3;
      if (t_opts.warm_up_epochs > t_opts.epochs) throw UsageError("--warm-up-epochs exceeds --epochs");
      if (!t_model.empty() && t_opts.warm_up_epochs > 0 && t_model != "3dresnet") {
        throw UsageError("--warm-up-epochs applies to 3dresnet only");
      }
      const auto manifest = load_manifest(tc.manifest);
      std::vector<RunRecord> runs;
      if (t_experiment == "fig3") {
        runs = experiment_fig3(manifest, t_opts, (fs::path(tc.out) / "fig3").string());
      } else if (t_experiment == "fig4") {
        runs = experiment_fig4(manifest, t_opts, (fs::path(tc.out) / "fig4").string());
      } else {
        runs.push_back(run_training(t_model, manifest, t_opts, tc.out));
      }
      for (const auto& r : runs) {
        const auto curve = epoch_curve(r.result);
        std::cout << r.model << (r.city.empty() ? "" : " " + r.city) << ": " << curve.size() << " epochs";
        if (!curve.empty()) std::cout << ", final train MSE " << curve.back();
        std::cout << '\n';
      }
    } else if (*ev) {
      const auto state = load_checkpoint(e_ckpt);
      const auto manifest = load_manifest(ec.manifest);
      SamplerConfig sampler;
      sampler.valid_indices = e_windows;
      std::vector<SampleRef> order;
      for (std::size_t f = 0; f < manifest.files.size(); ++f) {
        const auto& e = manifest.files[f];
        if (e.height == 0 || e.timesteps < sampler.history + sampler.horizon) continue;
        for (int s : valid_starts(sampler, e.timesteps)) order.push_back({f, s});
      }
      LoaderOptions lo;
      lo.batch_size = e_batch_size;
      lo.workers = 1;
      lo.max_batches = e_max_batches;
      BatchStream stream(manifest, sampler, order, lo);
      int dumped = 0;
      std::ostringstream dump_log;
      BatchFeed feed = [&]() -> std::optional<Batch> {
        auto b = stream.next();
        if (!b || dumped >= e_dump) return b;
        const auto pred = predict(state, b->input);
        const std::int64_t per = pred.numel() / pred.dim(0);
        const std::int64_t F = pred.dim(2), plane = pred.dim(3) * pred.dim(4);
        for (std::int64_t i = 0; i < pred.dim(0) && dumped < e_dump; ++i, ++dumped) {
          Tensor<float> one({pred.dim(1), F, pred.dim(3), pred.dim(4)});
          std::copy_n(pred.data().begin() + i * per, per, one.mutable_data().begin());
          const auto name = "pred_" + std::to_string(dumped) + ".t4cdump";
          fs::create_directories(ec.out);
          write_dense_dump((fs::path(ec.out) / name).string(), one);
          for (std::int64_t f = 0; f < F; ++f) {
            std::int64_t nz = 0;
            for (std::int64_t p = 0; p < plane; ++p) {
              bool any = false;
              for (std::int64_t c = 0; c < pred.dim(1); ++c) any = any || one[(c * F + f) * plane + p] != 0.0f;
              nz += any;
            }
            dump_log << name << " frame " << f + 1 << " non_zero " << nz << '\n';
          }
        }
        return b;
      };
      const auto r = evaluate(state, feed);
      std::cout << "mse " << r.mse << '\n';
      for (std::size_t f = 0; f < r.per_frame.size(); ++f) std::cout << "frame " << f + 1 << " mse " << r.per_frame[f] << '\n';
      for (const auto& [city, m] : r.per_city) std::cout << "city " << city << " mse " << m << '\n';
      std::cout << dump_log.str();
      if (e_dump > 0) write_text(fs::path(ec.out) / "frames.txt", dump_log.str());
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
