#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "t4c/backend.hpp"
#include "t4c/dense_ops.hpp"
#include "t4c/dump.hpp"
#include "t4c/error.hpp"
#include "t4c/sparse_ops.hpp"

using namespace t4c;

namespace {

SparseTensor<double> single(const Coord& c, std::vector<double> f, GridShape shape) {
  SparseTensor<double> s;
  s.shape = shape;
  s.channels = static_cast<int>(f.size());
  s.coords = {c};
  s.feats = std::move(f);
  return s;
}

Tensor<double> dense_of(const SparseTensor<double>& s) { return sparse_to_dense(s); }

}  // namespace

TEST(SparseTensor, DenseRoundTripIsBitExact) {
  std::mt19937_64 rng(1);
  auto x = oracle::random_tensor({2, 3, 4, 5, 6}, rng);
  std::bernoulli_distribution off(0.7);
  for (std::int64_t b = 0; b < 2; ++b)
    for (std::int64_t t = 0; t < 4; ++t)
      for (std::int64_t h = 0; h < 5; ++h)
        for (std::int64_t w = 0; w < 6; ++w)
          if (off(rng))
            for (std::int64_t c = 0; c < 3; ++c) x[oracle::at5(x.shape(), b, c, t, h, w)] = 0.0;
  const auto s = dense_to_sparse(x);
  s.validate();
  EXPECT_TRUE(bit_equal(sparse_to_dense(s), x));
  EXPECT_EQ(dense_to_sparse(Tensor<double>({1, 2, 3, 3, 3})).rows(), 0);
}

TEST(SparseTensor, ThresholdAndChannels) {
  Tensor<double> x({1, 2, 1, 1, 3});
  x[1] = 0.5;    // channel 0, w=1
  x[3 + 2] = 2;  // channel 1, w=2
  const auto s = dense_to_sparse(x, 1.0);
  ASSERT_EQ(s.rows(), 1);
  EXPECT_EQ(s.coords[0], (Coord{0, 0, 0, 2}));
  EXPECT_EQ(s.feats, (std::vector<double>{0.0, 2.0}));
}

TEST(SparseTensor, ValidateRejectsBrokenInvariants) {
  auto s = single({0, 0, 1, 1}, {1.0}, {1, 1, 2, 2});
  s.coords.push_back({0, 0, 0, 0});
  s.feats.push_back(2.0);
  EXPECT_THROW(s.validate(), ShapeError);
  auto out = single({0, 0, 2, 0}, {1.0}, {1, 1, 2, 2});
  EXPECT_THROW(out.validate(), ShapeError);
  EXPECT_THROW(sparse_to_dense(out), ShapeError);
}

TEST(SparseTensor, NnzRateBounds) {
  SparseTensor<double> e;
  e.channels = 1;
  e.shape = {1, 2, 2, 2};
  EXPECT_EQ(nnz_rate(e), 0.0);
  const auto full = dense_to_sparse(Tensor<double>::full({1, 1, 2, 2, 2}, 1.0));
  EXPECT_EQ(nnz_rate(full), 1.0);
}

TEST(Rulebook, SingleVoxelCounts) {
  const auto s = ConvSpec::same3d(1, 1);
  const auto v = single({0, 2, 2, 2}, {1.0}, {1, 5, 5, 5});
  const auto sub = build_rulebook(v, s, SparseConvMode::Submanifold);
  EXPECT_EQ(sub.out_coords.size(), 1u);
  EXPECT_EQ(sub.total_pairs(), 1u);
  EXPECT_EQ(sub.taps[13].size(), 1u);
  const auto gen = build_rulebook(v, s, SparseConvMode::Generalized);
  EXPECT_EQ(gen.out_coords.size(), 27u);
  EXPECT_EQ(gen.total_pairs(), 27u);
  for (const auto& tap : gen.taps) EXPECT_EQ(tap.size(), 1u);
}

TEST(Rulebook, SubmanifoldRequiresStrideOne) {
  auto s = ConvSpec::same3d(1, 1);
  s.stride = {1, 2, 2};
  EXPECT_THROW(build_rulebook(single({0, 0, 0, 0}, {1.0}, {1, 2, 2, 2}), s, SparseConvMode::Submanifold), ShapeError);
}

TEST(Rulebook, MatchesBruteForceEnumeration) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> ext(1, 8), st(1, 2);
  for (int trial = 0; trial < 60; ++trial) {
    const GridShape shape{1 + trial % 2, ext(rng), ext(rng), ext(rng)};
    auto x = oracle::random_sparse(shape, 1, trial < 10 ? 0.05 : 0.3, rng);
    ConvSpec s = ConvSpec::same3d(1, 1);
    if (trial % 4 == 1) s.kernel = {1, 3, 3}, s.padding = {0, 1, 1};
    const bool sub = trial % 2 == 0;
    if (!sub) s.stride = {st(rng), st(rng), st(rng)};
    std::set<Coord> want_out;
    const auto want = oracle::brute_rulebook(x.coords, shape, s, sub, &want_out);
    const auto rb = build_rulebook(x, s, sub ? SparseConvMode::Submanifold : SparseConvMode::Generalized);
    EXPECT_EQ(oracle::triples_of(rb, x.coords), want) << "trial " << trial;
    EXPECT_EQ(std::set<Coord>(rb.out_coords.begin(), rb.out_coords.end()), want_out) << "trial " << trial;
    EXPECT_TRUE(std::is_sorted(rb.out_coords.begin(), rb.out_coords.end(),
                               [](const Coord& a, const Coord& b) { return pack_coord(a) < pack_coord(b); }));
    if (sub) {
      const auto& centre = rb.taps[s.volume() / 2];
      ASSERT_EQ(centre.size(), x.coords.size());
      for (std::size_t j = 0; j < centre.size(); ++j) EXPECT_EQ(centre.in_rows[j], centre.out_rows[j]);
    }
    std::size_t total = 0;
    for (const auto& tap : rb.taps) {
      EXPECT_TRUE(std::is_sorted(tap.out_rows.begin(), tap.out_rows.end()));
      EXPECT_EQ(std::adjacent_find(tap.out_rows.begin(), tap.out_rows.end()), tap.out_rows.end());
      total += tap.size();
    }
    EXPECT_LE(total, x.coords.size() * static_cast<std::size_t>(s.volume()));
  }
}

TEST(Rulebook, PairCountMonotoneInActiveSites) {
  std::mt19937_64 rng(4);
  const GridShape shape{1, 6, 8, 8};
  auto x = oracle::random_sparse(shape, 1, 1.0, rng);
  std::shuffle(x.coords.begin(), x.coords.end(), rng);
  const auto s = ConvSpec::same3d(1, 1);
  std::size_t prev = 0;
  for (std::size_t n = 1; n <= x.coords.size(); n += 17) {
    std::vector<Coord> sub(x.coords.begin(), x.coords.begin() + n);
    std::sort(sub.begin(), sub.end(), [](const Coord& a, const Coord& b) { return pack_coord(a) < pack_coord(b); });
    const auto total = build_rulebook(sub, shape, s, SparseConvMode::Submanifold).total_pairs();
    EXPECT_GE(total, prev);
    prev = total;
  }
}

TEST(SparseConv, MatchesDenseConvolution) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> ext(1, 8), ch(1, 4), st(1, 2);
  std::uniform_real_distribution<double> logd(std::log(0.001), std::log(0.5));
  for (int trial = 0; trial < 40; ++trial) {
    ConvSpec s = ConvSpec::same3d(ch(rng), ch(rng), false);
    if (trial % 3 == 0) s.kernel = {1, 3, 3}, s.padding = {0, 1, 1};
    const bool sub = trial % 2 == 0;
    if (!sub) s.stride = {st(rng), st(rng), st(rng)};
    const GridShape shape{1, ext(rng), ext(rng), ext(rng)};
    auto x = oracle::random_sparse(shape, s.in_channels, std::exp(logd(rng)), rng);
    const auto w = oracle::random_weights(s, rng);
    const auto rb = build_rulebook(x, s, sub ? SparseConvMode::Submanifold : SparseConvMode::Generalized);
    const auto dense = oracle::conv3d(dense_of(x), s, w);
    for (auto be : {Backend::Serial, Backend::Parallel}) {
      ScopedBackend scope(be);
      auto y = sparse_conv_forward(x, w, rb);
      y.validate();
      if (sub) {
        EXPECT_EQ(y.coords, x.coords);
        std::vector<double> want;
        for (const auto& c : y.coords)
          for (int o = 0; o < s.out_channels; ++o) want.push_back(dense[oracle::at5(dense.shape(), c[0], o, c[1], c[2], c[3])]);
        EXPECT_LE(oracle::rel_error(y.feats, want), 1e-9) << "trial " << trial;
      } else {
        const auto yd = sparse_to_dense(y);
        ASSERT_EQ(yd.shape(), dense.shape());
        EXPECT_LE(oracle::rel_error(yd.data(), dense.data()), 1e-9) << "trial " << trial;
      }
    }
  }
}

TEST(SparseConv, Float32MatchesDenseWithinTolerance) {
  std::mt19937_64 rng(8);
  const auto s = ConvSpec::same3d(3, 4, false);
  const auto x = oracle::random_sparse({1, 6, 7, 8}, 3, 0.3, rng);
  const auto wd = oracle::random_weights(s, rng);
  SparseTensor<float> xf{x.coords, {x.feats.begin(), x.feats.end()}, x.channels, x.shape};
  const KernelWeights<float> wf{wd.weight.cast<float>(), std::nullopt};
  const auto rb = build_rulebook(xf, s, SparseConvMode::Generalized);
  const auto y = sparse_to_dense(sparse_conv_forward(xf, wf, rb)).cast<double>();
  const auto want = oracle::conv3d(dense_of(x), s, KernelWeights<double>{wf.weight.cast<double>(), std::nullopt});
  EXPECT_LE(oracle::rel_error(y.data(), want.data()), 1e-5);
}

TEST(SparseConv, SerialAndParallelAreBitIdentical) {
  std::mt19937_64 rng(12);
  const auto s = ConvSpec::same3d(5, 6);
  const auto x = oracle::random_sparse({2, 6, 10, 10}, 5, 0.3, rng);
  const auto w = oracle::random_weights(s, rng);
  const auto rb = build_rulebook(x, s, SparseConvMode::Submanifold);
  std::vector<double> gy(rb.out_coords.size() * 6);
  std::uniform_real_distribution<double> d(-1, 1);
  for (auto& v : gy) v = d(rng);
  SparseTensor<double> y[2];
  SparseConvGrads<double> g[2];
  for (int i = 0; i < 2; ++i) {
    ScopedBackend scope(i == 0 ? Backend::Serial : Backend::Parallel);
    y[i] = sparse_conv_forward(x, w, rb);
    g[i] = sparse_conv_backward(gy, x, w, rb);
  }
  EXPECT_EQ(y[0].feats, y[1].feats);
  EXPECT_EQ(g[0].input, g[1].input);
  EXPECT_TRUE(bit_equal(g[0].weight, g[1].weight));
  EXPECT_TRUE(bit_equal(*g[0].bias, *g[1].bias));
  EXPECT_EQ(sparse_conv_forward(x, w, rb).feats, y[0].feats);
}

TEST(SparseConv, EmptyInputAndErrors) {
  const auto s = ConvSpec::same3d(2, 3);
  SparseTensor<double> e;
  e.channels = 2;
  e.shape = {1, 3, 3, 3};
  const auto w = KernelWeights<double>::zeros(s);
  const auto rb = build_rulebook(e, s, SparseConvMode::Submanifold);
  EXPECT_EQ(sparse_conv_forward(e, w, rb).rows(), 0);
  const auto bad = single({0, 0, 0, 0}, {1.0}, {1, 3, 3, 3});
  EXPECT_THROW(sparse_conv_forward(bad, w, build_rulebook(bad, ConvSpec::same3d(1, 3), SparseConvMode::Submanifold)),
               ShapeError);
  const auto x = single({0, 1, 1, 1}, {1.0, 2.0}, {1, 3, 3, 3});
  const auto rbx = build_rulebook(x, s, SparseConvMode::Submanifold);
  EXPECT_THROW(sparse_conv_backward(std::vector<double>(2), x, w, rbx), ShapeError);
}

TEST(SparseConv, SinglePairGradientsByHand) {
  ConvSpec s{{1, 1, 1}, {1, 1, 1}, {0, 0, 0}, 1, 1, true};
  const auto x = single({0, 0, 0, 0}, {3.0}, {1, 1, 1, 1});
  KernelWeights<double> w{Tensor<double>({1, 1, 1}, {2.0}), Tensor<double>({1}, {0.5})};
  const auto rb = build_rulebook(x, s, SparseConvMode::Submanifold);
  EXPECT_EQ(sparse_conv_forward(x, w, rb).feats[0], 6.5);
  const auto g = sparse_conv_backward({4.0}, x, w, rb);
  EXPECT_EQ(g.input[0], 8.0);
  EXPECT_EQ(g.weight[0], 12.0);
  EXPECT_EQ((*g.bias)[0], 4.0);
  const auto z = sparse_conv_backward({0.0}, x, w, rb);
  EXPECT_EQ(z.input[0], 0.0);
  EXPECT_EQ(z.weight[0], 0.0);
}

TEST(SparseTransposed, RestoresTargetCoordinates) {
  std::mt19937_64 rng(31);
  const ConvSpec s{{1, 2, 2}, {1, 2, 2}, {0, 0, 0}, 2, 3, true};
  const auto w = oracle::random_weights(s, rng);
  for (int trial = 0; trial < 10; ++trial) {
    const auto fine = oracle::random_sparse({1, 1, 7, 6}, 2, 0.3, rng);
    const auto coarse = sparse_maxpool(fine).output;
    const auto up = sparse_transposed_conv(coarse, s, w, fine.coords, fine.shape);
    EXPECT_EQ(up.coords, fine.coords);
    // Each fine site reads exactly its parent through the tap matching its parity.
    std::vector<double> want;
    CoordIndex parent(coarse.coords);
    for (const auto& c : fine.coords) {
      const auto p = parent.find({c[0], c[1], c[2] / 2, c[3] / 2});
      ASSERT_GE(p, 0);
      const int k = (c[2] % 2) * 2 + c[3] % 2;
      for (int o = 0; o < 3; ++o) {
        double acc = (*w.bias)[o];
        for (int i = 0; i < 2; ++i) acc += coarse.row(p)[i] * w.weight[(k * 2 + i) * 3 + o];
        want.push_back(acc);
      }
    }
    EXPECT_LE(oracle::rel_error(up.feats, want), 1e-12);
  }
}

TEST(SparseTransposed, EmptyInputAndEmptyTarget) {
  const ConvSpec s{{1, 2, 2}, {1, 2, 2}, {0, 0, 0}, 1, 2, true};
  auto w = KernelWeights<double>::zeros(s);
  (*w.bias)[0] = 1.5;
  SparseTensor<double> e;
  e.channels = 1;
  e.shape = {1, 1, 2, 2};
  const std::vector<Coord> target{{0, 0, 1, 3}};
  const auto y = sparse_transposed_conv(e, s, w, target, {1, 1, 4, 4});
  ASSERT_EQ(y.coords, target);
  EXPECT_EQ(y.feats, (std::vector<double>{1.5, 0.0}));
  const auto x = single({0, 0, 0, 0}, {1.0}, {1, 1, 2, 2});
  EXPECT_THROW(sparse_transposed_conv(x, s, w, {}, {1, 1, 4, 4}), ShapeError);
}

TEST(SparseTransposed, PairsMatchBruteForce) {
  std::mt19937_64 rng(2);
  const ConvSpec s{{1, 2, 2}, {1, 2, 2}, {0, 0, 0}, 1, 1, false};
  for (int trial = 0; trial < 20; ++trial) {
    const auto in = oracle::random_sparse({1, 1, 3, 3}, 1, 0.4, rng);
    const auto target = oracle::random_sparse({1, 1, 6, 6}, 1, 0.4, rng);
    const auto rb = build_transposed_rulebook(in.coords, in.shape, s, target.coords, target.shape);
    std::set<Coord> tset(target.coords.begin(), target.coords.end());
    oracle::Triples want;
    for (const auto& c : in.coords)
      for (int k = 0; k < s.volume(); ++k) {
        const auto d = oracle::tap_offset(s, k);
        const Coord f{c[0], c[1] + d[0], 2 * c[2] + d[1], 2 * c[3] + d[2]};
        if (tset.count(f)) want.insert({k, c, f});
      }
    EXPECT_EQ(oracle::triples_of(rb, in.coords), want);
    EXPECT_EQ(rb.out_coords, target.coords);
  }
}

TEST(SparseMaxPool, HandCases) {
  const auto y = sparse_maxpool(single({0, 3, 5, 7}, {1.0, -2.0}, {1, 4, 6, 8})).output;
  EXPECT_EQ(y.coords[0], (Coord{0, 1, 2, 3}));
  EXPECT_EQ(y.feats, (std::vector<double>{1.0, -2.0}));
  SparseTensor<double> two;
  two.shape = {1, 2, 2, 2};
  two.channels = 2;
  two.coords = {{0, 0, 0, 0}, {0, 1, 1, 1}};
  two.feats = {1, 5, 3, 2};
  const auto p = sparse_maxpool(two);
  EXPECT_EQ(p.output.feats, (std::vector<double>{3, 5}));
  EXPECT_EQ(p.argmax, (std::vector<std::int32_t>{1, 0}));
  two.feats = {4, 4, 4, 1};
  EXPECT_EQ(sparse_maxpool(two).argmax, (std::vector<std::int32_t>{0, 0}));
}

TEST(SparseMaxPool, MatchesDensePoolOnActiveSites) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = oracle::random_sparse({2, 3, 7, 5}, 3, 0.3, rng);
    for (auto& v : x.feats) v = std::abs(v) + 0.01;  // positive, so empty sites never win
    const auto y = sparse_maxpool(x).output;
    const auto want = oracle::maxpool3d(dense_of(x));
    EXPECT_TRUE(bit_equal(sparse_to_dense(y), want)) << "trial " << trial;
    EXPECT_EQ(dense_to_sparse(want).coords, y.coords);
  }
}

TEST(SparseConcat, UnionAlignsRows) {
  SparseTensor<double> a = single({0, 0, 0, 1}, {1.0}, {1, 1, 2, 2});
  SparseTensor<double> b = single({0, 0, 0, 0}, {7.0, 8.0}, {1, 1, 2, 2});
  const auto c = sparse_concat(a, b);
  EXPECT_EQ(c.output.channels, 3);
  EXPECT_EQ(c.output.coords, (std::vector<Coord>{{0, 0, 0, 0}, {0, 0, 0, 1}}));
  EXPECT_EQ(c.output.feats, (std::vector<double>{0, 7, 8, 1, 0, 0}));
  EXPECT_EQ(c.a_rows, (std::vector<std::int32_t>{1}));
  EXPECT_EQ(c.b_rows, (std::vector<std::int32_t>{0}));
}

TEST(SparseRelu, KeepsCoordinates) {
  SparseTensor<double> x = single({0, 0, 1, 1}, {-1.0, 2.0}, {1, 1, 2, 2});
  const auto y = sparse_relu(x);
  EXPECT_EQ(y.coords, x.coords);
  EXPECT_EQ(y.feats, (std::vector<double>{0.0, 2.0}));
  EXPECT_EQ(sparse_relu_backward({5.0, 6.0}, x), (std::vector<double>{0.0, 6.0}));
}

TEST(Dump, DenseAndSparseRoundTrip) {
  std::mt19937_64 rng(3);
  const auto t = oracle::random_tensor({2, 3, 4}, rng).cast<float>();
  EXPECT_TRUE(bit_equal(decode_dense_dump(encode_dense_dump(t)), t));
  const auto bytes = encode_dense_dump(t);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), std::string("DTNSR\0\0\0", 8));
  EXPECT_EQ(bytes.size(), 8u + 4u + 3 * 8u + 24 * 4u);
  const auto sd = oracle::random_sparse({1, 2, 3, 4}, 2, 0.5, rng);
  SparseTensor<float> s{sd.coords, {sd.feats.begin(), sd.feats.end()}, 2, sd.shape};
  const auto sb = encode_sparse_dump(s);
  EXPECT_EQ(std::string(sb.begin(), sb.begin() + 8), std::string("SPTNSR\0\0", 8));
  const auto back = decode_sparse_dump(sb);
  EXPECT_EQ(back.coords, s.coords);
  EXPECT_EQ(back.feats, s.feats);
  EXPECT_EQ(back.shape, s.shape);
  const auto path = std::filesystem::temp_directory_path() / "t4c_sparse_dump.bin";
  write_sparse_dump(path.string(), s);
  EXPECT_EQ(read_sparse_dump(path.string()).feats, s.feats);
  std::filesystem::remove(path);
}

TEST(Dump, TruncationIsFormatError) {
  const auto bytes = encode_dense_dump(Tensor<float>({3, 3}));
  for (std::size_t cut : {3ul, 10ul, bytes.size() - 1}) {
    EXPECT_THROW(decode_dense_dump({bytes.begin(), bytes.begin() + cut}), FormatError) << cut;
  }
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_dense_dump(bad), FormatError);
}

TEST(SparseConv, WallTimeScalesWithDensity) {
  std::mt19937_64 rng(77);
  // Folded-time grid and a level-0 layer of the sparse UNet at real-data densities.
  const GridShape shape{1, 1, 1024, 1024};
  const auto s = ConvSpec::same2d(16, 16);
  const auto w = oracle::random_weights(s, rng);
  auto time_at = [&](double density) {
    const auto xd = oracle::random_sparse(shape, 16, density, rng);
    SparseTensor<float> x{xd.coords, {xd.feats.begin(), xd.feats.end()}, 16, shape};
    EXPECT_GE(x.rows(), 10000);
    const KernelWeights<float> wf{w.weight.cast<float>(), w.bias->cast<float>()};
    const auto rb = build_rulebook(x, s, SparseConvMode::Submanifold);
    std::vector<double> times;
    for (int rep = 0; rep < 9; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto y = sparse_conv_forward(x, wf, rb);
      times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::nth_element(times.begin(), times.begin() + 4, times.end());
    return times[4];
  };
  const double ratio = time_at(0.02) / time_at(0.01);
  EXPECT_GE(ratio, 1.3);
  EXPECT_LE(ratio, 2.7);
}
