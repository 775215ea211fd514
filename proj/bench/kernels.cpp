// Serial reference vs OpenMP kernels: dense conv3d forward/backward and
// sparse gather-scatter convolution.

#include <benchmark/benchmark.h>

#include <random>

#include "t4c/backend.hpp"
#include "t4c/dense_ops.hpp"
#include "t4c/rulebook.hpp"
#include "t4c/sparse_ops.hpp"

using namespace t4c;

namespace {

Tensor<float> random_input(const Shape& s, double density, std::mt19937_64& rng) {
  Tensor<float> x(s);
  std::bernoulli_distribution on(density);
  std::uniform_real_distribution<float> val(0.0f, 1.0f);
  for (auto& v : x.mutable_data()) v = on(rng) ? val(rng) : 0.0f;
  return x;
}

Backend backend_of(const benchmark::State& st) { return st.range(0) ? Backend::Parallel : Backend::Serial; }

void label(benchmark::State& st) {
  st.SetLabel(st.range(0) ? "openmp x" + std::to_string(max_threads()) : "serial");
}

void BM_DenseConv3dForward(benchmark::State& st) {
  std::mt19937_64 rng(1);
  const ConvSpec s = ConvSpec::same3d(16, 16);
  const auto x = random_input({2, 16, 12, st.range(1), st.range(1)}, 1.0, rng);
  const auto w = KernelWeights<float>::uniform(s, rng);
  ScopedBackend scope(backend_of(st));
  for (auto _ : st) benchmark::DoNotOptimize(conv3d_forward(x, s, w));
  st.SetItemsProcessed(st.iterations() * x.numel() / 16 * s.volume() * 16 * 16);
  label(st);
}

void BM_DenseConv3dBackward(benchmark::State& st) {
  std::mt19937_64 rng(2);
  const ConvSpec s = ConvSpec::same3d(16, 16);
  const auto x = random_input({2, 16, 12, st.range(1), st.range(1)}, 1.0, rng);
  const auto gy = random_input(x.shape(), 1.0, rng);
  const auto w = KernelWeights<float>::uniform(s, rng);
  ScopedBackend scope(backend_of(st));
  for (auto _ : st) benchmark::DoNotOptimize(conv3d_backward(gy, x, s, w));
  label(st);
}

void BM_SparseConv(benchmark::State& st) {
  std::mt19937_64 rng(3);
  const ConvSpec s = ConvSpec::same3d(16, 16);
  const double density = static_cast<double>(st.range(2)) / 1000.0;
  const auto x = dense_to_sparse(random_input({2, 16, 12, st.range(1), st.range(1)}, density, rng));
  const auto w = KernelWeights<float>::uniform(s, rng);
  const auto rb = build_rulebook(x, s, SparseConvMode::Submanifold);
  ScopedBackend scope(backend_of(st));
  for (auto _ : st) benchmark::DoNotOptimize(sparse_conv_forward(x, w, rb));
  st.counters["pairs"] = static_cast<double>(rb.total_pairs());
  label(st);
}

void BM_Rulebook(benchmark::State& st) {
  std::mt19937_64 rng(4);
  const double density = static_cast<double>(st.range(1)) / 1000.0;
  const auto x = dense_to_sparse(random_input({2, 1, 12, st.range(0), st.range(0)}, density, rng));
  const ConvSpec s = ConvSpec::same3d(1, 1);
  for (auto _ : st) benchmark::DoNotOptimize(build_rulebook(x, s, SparseConvMode::Submanifold));
}

}  // namespace

BENCHMARK(BM_DenseConv3dForward)->ArgsProduct({{0, 1}, {32, 64}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DenseConv3dBackward)->ArgsProduct({{0, 1}, {32, 64}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SparseConv)->ArgsProduct({{0, 1}, {64}, {10, 50, 200}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Rulebook)->ArgsProduct({{64}, {10, 50}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
