// Acceptance run: one PASS/FAIL line per criterion. With arguments, only the
// listed criteria run (e.g. `acceptance 1 3 10`).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <unistd.h>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "t4c/backend.hpp"
#include "t4c/dense_ops.hpp"
#include "t4c/dump.hpp"
#include "t4c/experiments.hpp"
#include "t4c/generator.hpp"
#include "t4c/sparse_ops.hpp"

namespace fs = std::filesystem;
using namespace t4c;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path scratch_root() {
  static const fs::path root = fs::temp_directory_path() / ("t4c_acceptance_" + std::to_string(::getpid()));
  return root;
}

fs::path scratch(const std::string& name) {
  const auto p = scratch_root() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 1. Generalized sparse conv densified equals dense conv3d; submanifold equals
// dense conv read at the input coordinates.
Outcome dense_equivalence() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> ext(1, 8), ch(1, 4), st(1, 2), batch(1, 2);
  std::uniform_real_distribution<double> logd(std::log(0.001), std::log(0.5));
  double worst = 0.0;
  int cases = 0;
  for (int trial = 0; trial < 200; ++trial) {
    ConvSpec s = ConvSpec::same3d(ch(rng), ch(rng), false);
    if (trial % 3 == 0) s.kernel = {1, 3, 3}, s.padding = {0, 1, 1};
    const bool sub = trial % 2 == 0;
    if (!sub) s.stride = {st(rng), st(rng), st(rng)};
    const GridShape shape{batch(rng), ext(rng), ext(rng), ext(rng)};
    const auto x = oracle::random_sparse(shape, s.in_channels, std::exp(logd(rng)), rng);
    const auto w = oracle::random_weights(s, rng);
    const auto dense = conv3d_forward(sparse_to_dense(x), s, w);
    const auto rb = build_rulebook(x, s, sub ? SparseConvMode::Submanifold : SparseConvMode::Generalized);
    for (auto be : {Backend::Serial, Backend::Parallel}) {
      ScopedBackend scope(be);
      const auto y = sparse_conv_forward(x, w, rb);
      double err = 0.0;
      if (sub) {
        if (y.coords != x.coords) return {false, "submanifold output coordinates differ, case " + std::to_string(trial)};
        std::vector<double> want;
        for (const auto& c : y.coords) {
          for (int o = 0; o < s.out_channels; ++o) want.push_back(dense[oracle::at5(dense.shape(), c[0], o, c[1], c[2], c[3])]);
        }
        err = oracle::rel_error(y.feats, want);
      } else {
        const auto yd = sparse_to_dense(y);
        if (yd.shape() != dense.shape()) return {false, "generalized output shape differs, case " + std::to_string(trial)};
        err = oracle::rel_error(yd.data(), dense.data());
      }
      worst = std::max(worst, err);
    }
    ++cases;
  }
  return {worst <= 1e-9, std::to_string(cases) + " cases, worst relative error " + fmt(worst)};
}

// 2. Every differentiable op and every model at toy size against central differences.
Outcome gradient_suite() {
  const std::vector<std::pair<std::string, std::function<double(std::uint64_t)>>> ops{
      {"conv3d", gradcheck::conv3d},
      {"conv2d", gradcheck::conv2d},
      {"conv_transposed3d", gradcheck::conv_transposed3d},
      {"sparse_conv_submanifold", [](std::uint64_t s) { return gradcheck::sparse_conv(s, false); }},
      {"sparse_conv_generalized", [](std::uint64_t s) { return gradcheck::sparse_conv(s, true); }},
      {"sparse_transposed", gradcheck::sparse_transposed},
      {"maxpool3d", gradcheck::maxpool3d},
      {"sparse_maxpool", gradcheck::sparse_maxpool},
      {"relu", gradcheck::relu},
      {"mse", gradcheck::mse},
      {"concat_broadcast_reshape", gradcheck::plumbing},
      {"model 3dresnet", [](std::uint64_t s) { return gradcheck::model("3dresnet", s); }},
      {"model 3dresnet-convout", [](std::uint64_t s) { return gradcheck::model("3dresnet-convout", s); }},
      {"model 2dresnet", [](std::uint64_t s) { return gradcheck::model("2dresnet", s); }},
      {"model sparse-unet", [](std::uint64_t s) { return gradcheck::model("sparse-unet", s); }},
      {"model sparse-unet-generalized", [](std::uint64_t s) { return gradcheck::model("sparse-unet-generalized", s); }},
      {"model conv3d-unet", [](std::uint64_t s) { return gradcheck::model("conv3d-unet", s); }},
  };
  double worst = 0.0;
  std::string worst_op, failures;
  for (const auto& [name, fn] : ops) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const double e = fn(seed);
      if (!(e <= 1e-6)) failures += " " + name + "@" + std::to_string(seed);
      if (e > worst) worst = e, worst_op = name;
    }
  }
  return {failures.empty(), std::to_string(ops.size()) + " ops x 20 seeds, worst " + fmt(worst) + " (" + worst_op + ")" +
                                (failures.empty() ? "" : ", failing:" + failures)};
}

// 3. Rulebooks equal the brute-force (voxel x offset) enumeration.
Outcome rulebook_brute_force() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> ext(1, 8), st(1, 2);
  std::uniform_real_distribution<double> dens(0.01, 0.6);
  for (int trial = 0; trial < 500; ++trial) {
    const GridShape shape{1 + trial % 2, ext(rng), ext(rng), ext(rng)};
    const auto x = oracle::random_sparse(shape, 1, dens(rng), rng);
    ConvSpec s = ConvSpec::same3d(1, 1);
    if (trial % 4 == 1) s.kernel = {1, 3, 3}, s.padding = {0, 1, 1};
    if (trial % 8 == 3) s.kernel = {3, 1, 1}, s.padding = {1, 0, 0};
    const bool sub = trial % 2 == 0;
    if (!sub) s.stride = {st(rng), st(rng), st(rng)};
    std::set<Coord> want_out;
    const auto want = oracle::brute_rulebook(x.coords, shape, s, sub, &want_out);
    const auto rb = build_rulebook(x, s, sub ? SparseConvMode::Submanifold : SparseConvMode::Generalized);
    if (oracle::triples_of(rb, x.coords) != want ||
        std::set<Coord>(rb.out_coords.begin(), rb.out_coords.end()) != want_out) {
      return {false, "pattern " + std::to_string(trial) + " differs"};
    }
  }
  return {true, "500 patterns identical"};
}

// 4. Throughput patterns at 64x64 over the eight reference rates.
Outcome throughput_patterns() {
  const auto dir = scratch("throughput");
  GeneratorConfig g;
  g.cities = city_profiles();
  g.days = 1;
  g.seed = 9;
  const auto manifest = Manifest::load(write_corpus(dir.string(), g));
  ConvBenchOptions o;
  o.timed = 40;
  const auto rows = bench_conv(manifest, init_model<float>(model_config("sparse-unet"), 0),
                               init_model<float>(model_config("conv3d-unet"), 0), o);
  std::vector<double> nnz, sparse, speedups;
  double dense_mean = 0.0;
  for (const auto& r : rows) dense_mean += r.dense_batches_per_second / static_cast<double>(rows.size());
  double dense_dev = 0.0;
  for (const auto& r : rows) {
    nnz.push_back(r.nnz_rate);
    sparse.push_back(r.sparse_batches_per_second);
    speedups.push_back(r.speedup);
    dense_dev = std::max(dense_dev, std::abs(r.dense_batches_per_second / dense_mean - 1.0));
  }
  const double rho = spearman(nnz, sparse);
  const double gm = geometric_mean(speedups);
  const bool a = dense_dev <= 0.10, b = rho <= -0.9, c = gm > 2.0;
  return {a && b && c, "(a) dense max deviation " + fmt(100 * dense_dev, 3) + "% of mean " + fmt(dense_mean) +
                           " batches/s " + (a ? "ok" : "FAIL") + "; (b) Spearman " + fmt(rho) + (b ? " ok" : " FAIL") +
                           "; (c) geometric-mean speedup " + fmt(gm) + "x" + (c ? " ok" : " FAIL")};
}

// 5. Two-stage loading against the global shuffle on cold reads, plus coverage.
Outcome loader_direction() {
  const auto dir = scratch("loader");
  GeneratorConfig g;
  g.cities = city_profiles();
  g.days = 3;
  g.seed = 5;
  const auto manifest = Manifest::load(write_corpus(dir.string(), g));
  LoaderBenchOptions o;
  o.timed = 300;
  o.scheme = "two-stage";
  const auto two = bench_loader(manifest, o);
  o.scheme = "global";
  const auto global = bench_loader(manifest, o);
  const double ratio = two.batches_per_second / global.batches_per_second;

  // Coverage with the fewest files that can hold every city.
  SamplerConfig cfg;
  cfg.files_per_epoch = static_cast<int>(manifest.cities().size());
  int covered = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto plan = plan_epoch(manifest, cfg, seed);
    std::set<std::string> cities;
    std::set<int> years, weekdays;
    bool exact = true;
    for (const auto& f : plan.files) {
      cities.insert(manifest.files[f.file].city);
      years.insert(manifest.files[f.file].year);
      weekdays.insert(manifest.files[f.file].weekday);
      auto sorted = f.starts;
      std::sort(sorted.begin(), sorted.end());
      exact = exact && sorted == valid_starts(cfg, manifest.files[f.file].timesteps);
    }
    covered += exact && cities == manifest.cities() && years == manifest.years() && weekdays == manifest.weekdays();
  }

  // The streamed epoch delivers each planned (file, start) exactly once.
  const auto plan = plan_epoch(manifest, cfg, 77);
  std::multiset<std::pair<std::size_t, int>> planned, streamed;
  for (const auto& f : plan.files) {
    for (int s : f.starts) planned.insert({f.file, s});
  }
  LoaderOptions lo;
  auto stream = iterate_batches(manifest, cfg, plan, lo);
  while (auto b = stream->next()) {
    for (const auto& s : b->samples) streamed.insert({s.file, s.start});
  }
  const bool multisets = planned == streamed;
  const bool pass = ratio >= 5.0 && covered == 200 && multisets;
  return {pass, "two-stage " + fmt(two.batches_per_second) + " vs global " + fmt(global.batches_per_second) +
                    " batches/s (" + fmt(ratio, 3) + "x); coverage " + std::to_string(covered) + "/200 epochs; index multisets " +
                    (multisets ? "exact" : "DIFFER")};
}

ExperimentOptions small_run(int epochs, std::uint64_t seed, int windows) {
  ExperimentOptions o;
  o.epochs = epochs;
  o.seed = seed;
  o.sampler.valid_indices = windows;
  return o;
}

// 6. ResNet variant ordering over three seeds.
Outcome resnet_ordering() {
  int ordered = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto dir = scratch("fig3_" + std::to_string(seed));
    GeneratorConfig g;
    g.cities = {city_profile("BER"), city_profile("MOS")};
    g.height = g.width = 8;
    g.days = 2;
    g.seed = seed;
    const auto manifest = Manifest::load(write_corpus(dir.string(), g));
    auto o = small_run(30, seed, 12);
    o.warm_up_epochs = 10;
    const auto runs = experiment_fig3(manifest, o);
    const auto seq = epoch_curve(runs[0].result), conv = epoch_curve(runs[1].result), d2 = epoch_curve(runs[2].result);
    const bool lower = seq.back() <= conv.back();
    const bool slower = d2[9] > seq[9] && d2[9] > conv[9];
    ordered += lower && slower;
    detail += " seed " + std::to_string(seed) + ": final " + fmt(seq.back()) + "/" + fmt(conv.back()) + ", epoch-10 2D " +
              fmt(d2[9]) + " vs " + fmt(std::min(seq[9], conv[9])) + (lower && slower ? " ok;" : " no;");
  }
  return {ordered >= 2, std::to_string(ordered) + "/3 seeds ordered (Seq/ConvOut final MSE)" + detail};
}

// 7. Per-city UNet curves.
Outcome unet_curves() {
  const auto dir = scratch("fig4");
  GeneratorConfig g;
  g.cities = city_profiles();
  g.height = g.width = 16;
  g.days = 3;
  g.seed = 4;
  const auto manifest = Manifest::load(write_corpus(dir.string(), g));
  const auto runs = experiment_fig4(manifest, small_run(5, 4, 12));
  std::map<std::string, int> decreasing;
  bool finite = true;
  for (const auto& r : runs) {
    const auto c = epoch_curve(r.result);
    for (double v : c) finite = finite && std::isfinite(v);
    decreasing[r.model] += c.size() == 5 && c[4] < c[0];
  }
  const bool pass = finite && decreasing["sparse-unet"] >= 6 && decreasing["conv3d-unet"] >= 6;
  return {pass, "decreasing epoch 1 -> 5 in " + std::to_string(decreasing["sparse-unet"]) + "/8 cities (sparse-unet), " +
                    std::to_string(decreasing["conv3d-unet"]) + "/8 (conv3d-unet); all finite: " + (finite ? "yes" : "no")};
}

// 8. Single-batch overfit below 1% of the initial MSE within 200 steps.
Outcome overfit() {
  const int hw = 8;
  const auto world = build_city_world(city_profile("MOS"), hw, hw, 1);
  const auto day = generate_day(world, 288, 0, 1);
  Batch b;
  b.input = Tensor<float>({2, 8, 12, hw, hw});
  b.target = Tensor<float>({2, 8, 6, hw, hw});
  const int starts[2] = {100, 150};
  for (int s = 0; s < 2; ++s)
    for (int t = 0; t < 18; ++t)
      for (int y = 0; y < hw; ++y)
        for (int x = 0; x < hw; ++x)
          for (int c = 0; c < 8; ++c) {
            const float v = day.payload[(((starts[s] + t) * hw + y) * hw + x) * 8 + c];
            if (t < 12) {
              b.input[(((s * 8 + c) * 12 + t) * hw + y) * hw + x] = v;
            } else {
              b.target[(((s * 8 + c) * 6 + t - 12) * hw + y) * hw + x] = v;
            }
          }
  b.cities = {"MOS", "MOS"};
  const std::vector<std::pair<std::string, double>> kinds{
      {"3dresnet", 1e-3}, {"3dresnet-convout", 1e-3}, {"2dresnet", 1e-3}, {"sparse-unet", 5e-3}, {"conv3d-unet", 3e-3}};
  bool pass = true;
  std::string detail;
  for (const auto& [name, lr] : kinds) {
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.learning_rate = lr;
    cfg.seed = 1;
    const auto r = train(model_config(name), cfg, fixed_source({b}));
    const double ratio = r.step_losses.back() / r.step_losses.front();
    pass = pass && ratio < 0.01;
    detail += " " + name + " " + fmt(ratio, 3) + ";";
  }
  return {pass, "final/initial MSE after 200 steps:" + detail};
}

// 9. Two identical fig3 runs through the command-line tool are byte-identical.
Outcome determinism() {
  const auto dir = scratch("determinism");
  const std::string tool = T4C_CLI_PATH;
  auto run = [&](const std::string& cmd) { return std::system((cmd + " > /dev/null").c_str()); };
  if (run(tool + " gen-data --cities BER,MOS --days 1 --size 8x8 --seed 7 --out " + (dir / "corpus").string()) != 0) {
    return {false, "gen-data failed"};
  }
  const std::string train = tool + " train --experiment fig3 --seed 7 --epochs 3 --warm-up-epochs 1 --windows-per-file 6" +
                            " --manifest " + (dir / "corpus" / "manifest.tsv").string() + " --out ";
  if (run(train + (dir / "a").string()) != 0 || run(train + (dir / "b").string()) != 0) return {false, "train failed"};
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(dir / "a" / "fig3")) {
    const auto other = dir / "b" / "fig3" / e.path().filename();
    if (!fs::exists(other) || file_bytes(e.path()) != file_bytes(other)) {
      return {false, e.path().filename().string() + " differs"};
    }
    ++compared;
  }
  return {compared == 9, std::to_string(compared) + " files byte-identical (3 metrics CSVs, 6 checkpoints)"};
}

// 10. Round trips of the binary formats.
Outcome round_trips() {
  std::mt19937_64 rng(1010);
  std::uniform_int_distribution<int> small(1, 9), byte(0, 255);
  int ok = 0;
  for (int i = 0; i < 100; ++i) {
    DayHeader h;
    h.city = static_cast<std::uint16_t>(small(rng));
    h.year = static_cast<std::uint16_t>(2019 + i % 2);
    h.weekday = static_cast<std::uint8_t>(i % 7);
    h.timesteps = static_cast<std::uint16_t>(small(rng));
    h.height = static_cast<std::uint16_t>(small(rng));
    h.width = static_cast<std::uint16_t>(small(rng));
    std::vector<std::uint8_t> payload(h.payload_bytes());
    for (auto& v : payload) v = static_cast<std::uint8_t>(byte(rng));
    const auto back = decode_day_file(encode_day_file(h, payload));
    ok += back.header == h && back.payload == payload;
  }
  const int day_ok = ok;
  ok = 0;
  const auto names = model_names();
  for (int i = 0; i < 100; ++i) {
    auto cfg = gradcheck::toy_config(names[static_cast<std::size_t>(i) % names.size()]);
    auto st = init_model<float>(cfg, static_cast<std::uint64_t>(i));
    st.step = i * 17;
    const auto bytes = encode_checkpoint(st);
    const auto back = decode_checkpoint(bytes);
    bool same = back.step == st.step && back.config.to_map() == st.config.to_map() && back.params.size() == st.params.size();
    for (const auto& [name, t] : st.params) same = same && back.params.count(name) && bit_equal(back.params.at(name), t);
    ok += same && encode_checkpoint(back) == bytes;
  }
  const int ckpt_ok = ok;
  ok = 0;
  for (int i = 0; i < 100; ++i) {
    const Shape s{small(rng), small(rng), small(rng)};
    const auto d = oracle::random_tensor(s, rng, -1e6, 1e6).cast<float>();
    const bool dense_same = bit_equal(decode_dense_dump(encode_dense_dump(d)), d);
    const auto sd = oracle::random_sparse({small(rng), small(rng), small(rng), small(rng)}, small(rng), 0.3, rng);
    SparseTensor<float> sp{sd.coords, {sd.feats.begin(), sd.feats.end()}, sd.channels, sd.shape};
    const auto back = decode_sparse_dump(encode_sparse_dump(sp));
    ok += dense_same && back.coords == sp.coords && back.feats == sp.feats && back.channels == sp.channels &&
          back.shape == sp.shape;
  }
  const bool pass = day_ok == 100 && ckpt_ok == 100 && ok == 100;
  return {pass, "day files " + std::to_string(day_ok) + "/100, checkpoints " + std::to_string(ckpt_ok) +
                    "/100, dense+sparse dumps " + std::to_string(ok) + "/100"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"dense-oracle equivalence", dense_equivalence},
      {"gradient suite", gradient_suite},
      {"rulebook brute force", rulebook_brute_force},
      {"sparse vs dense throughput patterns", throughput_patterns},
      {"two-stage loader direction and coverage", loader_direction},
      {"ResNet variant ordering", resnet_ordering},
      {"per-city UNet curves", unet_curves},
      {"single-batch overfit", overfit},
      {"deterministic fig3 runs", determinism},
      {"format round trips", round_trips},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << n << " " << (o.pass ? "PASS" : "FAIL") << ": " << criteria[i].first << "; " << o.detail
              << " [" << fmt(secs, 3) << " s]" << std::endl;
    failed += !o.pass;
  }
  fs::remove_all(scratch_root());
  return failed == 0 ? 0 : 1;
}
