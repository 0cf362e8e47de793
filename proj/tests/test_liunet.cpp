#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace spectra;
using namespace spectra::liunet;

namespace {

// Parameter count straight from the per-layer formula.
std::size_t count_oracle(std::size_t L, std::size_t c, std::size_t depth, bool same) {
  const std::size_t widths[] = {6, 12, 18, 24};
  std::size_t n = 0, in = 1, len = L;
  for (std::size_t s = 0; s < depth; ++s) {
    n += widths[s] * in * 6 + widths[s];
    in = widths[s];
    len = (same ? len : len - 5) / 2;
  }
  return n + in * len * c + c;
}

double loss_of(const LiuNetParams& p, std::span<const double> x, std::size_t label) {
  return training::softmax_cross_entropy(forward<double>(p, x).logits, label).loss;
}

}  // namespace

TEST(LiuNet, AdaptDepth) {
  EXPECT_EQ(adapt_depth(112), 4u);
  EXPECT_EQ(adapt_depth(15), 3u);
  EXPECT_EQ(adapt_depth(2), 1u);
  EXPECT_EQ(adapt_depth(25), 4u);
  EXPECT_THROW(adapt_depth(1), ArgumentError);
  for (std::size_t L = 2; L < 200; ++L) {
    const auto a = Architecture::for_input(L, 3);
    EXPECT_GE(a.length_trace().back(), 1u);
  }
}

TEST(LiuNet, ShapeTrace) {
  const auto a = Architecture::for_input(112, 3);
  EXPECT_EQ(a.length_trace(), (std::vector<std::size_t>{112, 56, 28, 14, 7}));
  EXPECT_EQ(a.flat_dim(), 24u * 7);
  const auto h = Architecture::for_input(15, 10);
  EXPECT_EQ(h.length_trace(), (std::vector<std::size_t>{15, 7, 3, 1}));
}

TEST(LiuNet, ParameterCounts) {
  const auto a = Architecture::for_input(112, 3);
  std::size_t conv = 0;
  for (std::size_t s = 0; s < 4; ++s) conv += a.conv_weight_count(s) + a.out_channels(s);
  EXPECT_EQ(conv, 4416u);
  EXPECT_EQ(a.param_count(), 4923u);
  EXPECT_EQ(a.param_count(), count_oracle(112, 3, 4, true));
  EXPECT_EQ(init_params(a, 0).param_count(), 4923u);
  EXPECT_EQ(Architecture::for_input(15, 10).param_count(), 1990u);
  const auto v = Architecture::for_input(112, 3, Padding::valid);
  EXPECT_EQ(v.param_count(), 4563u);
  EXPECT_EQ(v.param_count(), count_oracle(112, 3, 4, false));
}

TEST(LiuNet, ZeroWeightsGiveZeroLogits) {
  auto p = init_params(Architecture::for_input(25, 4), 1);
  std::fill(p.values.begin(), p.values.end(), 0.0);
  const std::vector<double> x(25, 0.7);
  for (double l : forward<double>(p, x).logits) EXPECT_EQ(l, 0.0);
  EXPECT_THROW(forward<double>(p, std::vector<double>(24, 0.0)), ArgumentError);
}

TEST(LiuNet, DenseGradientIsOuterProduct) {
  const auto p = init_params(Architecture::for_input(25, 3), 2);
  std::vector<double> x(25);
  for (std::size_t i = 0; i < 25; ++i) x[i] = std::sin(0.3 * static_cast<double>(i)) * 0.5 + 0.5;
  const auto r = forward<double>(p, x);
  const std::vector<double> dl = {0.2, -0.5, 0.3};
  std::vector<double> g(p.values.size(), 0.0);
  backward(p, r, dl, g);
  const Layout lay(p.arch);
  for (std::size_t i = 0; i < r.flat.size(); ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(g[lay.dense_w + i * 3 + j], r.flat[i] * dl[j]);
  std::vector<double> z(p.values.size(), 0.0);
  backward(p, r, std::vector<double>(3, 0.0), z);
  for (double v : z) EXPECT_EQ(v, 0.0);
}

TEST(LiuNet, GradientMatchesFiniteDifferences) {
  for (Padding pad : {Padding::same, Padding::valid}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto arch = Architecture::for_input(pad == Padding::same ? 15 : 40, 3, pad);
      auto p = init_params(arch, seed);
      std::mt19937_64 gen(seed);
      std::uniform_real_distribution<double> u(0, 1);
      std::vector<double> x(arch.input_length);
      for (auto& v : x) v = u(gen);
      const std::size_t label = seed % 3;
      const auto r = forward<double>(p, x);
      const auto lg = training::softmax_cross_entropy(r.logits, label);
      std::vector<double> g(p.values.size(), 0.0);
      backward(p, r, lg.grad, g);
      const double eps = 1e-4;
      double worst = 0;
      for (std::size_t i = 0; i < p.values.size(); ++i) {
        const double orig = p.values[i];
        p.values[i] = orig + eps;
        const double up = loss_of(p, x, label);
        p.values[i] = orig - eps;
        const double dn = loss_of(p, x, label);
        p.values[i] = orig;
        const double fd = (up - dn) / (2 * eps);
        const double rel = std::abs(fd - g[i]) / std::max(1e-6, std::abs(fd) + std::abs(g[i]));
        worst = std::max(worst, rel);
      }
      EXPECT_LE(worst, 1e-3) << "seed " << seed;
    }
  }
}

TEST(LiuNet, CheckpointRoundTrip) {
  oracle::TempDir tmp("ckpt");
  const auto p = init_params(Architecture::for_input(25, 3, Padding::valid), 4);
  save(tmp.path / "m.bin", p);
  const auto q = load(tmp.path / "m.bin");
  EXPECT_EQ(q.values, p.values);
  EXPECT_EQ(q.arch.depth, p.arch.depth);
  EXPECT_EQ(q.arch.padding, Padding::valid);
  EXPECT_EQ(serialize(q), serialize(p));
  auto bytes = serialize(p);
  bytes.pop_back();
  EXPECT_THROW(deserialize(bytes), FormatError);
}

TEST(LiuNet, ArgmaxInvariance) {
  const auto p = init_params(Architecture::for_input(25, 5), 6);
  const auto batch = oracle::random_spectra(30, 25, 2);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto logits = forward<float>(p, batch.spectrum(i)).logits;
    const auto a = training::argmax(logits);
    for (auto& l : logits) l += 123.0;
    EXPECT_EQ(training::argmax(logits), a);
  }
}
