#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace spectra;
using namespace spectra::training;

namespace {

// Reference AdamW written element by element from the textbook update.
void adam_oracle(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m, std::vector<double>& v,
                 int t, double lr, double b1, double b2, double eps, double wd) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = p[i] - lr * wd * p[i];
    m[i] = b1 * m[i] + (1 - b1) * g[i];
    v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
    const double mhat = m[i] / (1 - std::pow(b1, t));
    const double vhat = v[i] / (1 - std::pow(b2, t));
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

// Two well separated classes in 6 bands.
data::SampleSet separable(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> noise(-0.05, 0.05);
  data::SampleSet s;
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 2);
    std::vector<float> x(6);
    for (std::size_t b = 0; b < 6; ++b)
      x[b] = static_cast<float>((c == 0 ? (b < 3 ? 0.9 : 0.1) : (b < 3 ? 0.1 : 0.9)) + noise(gen));
    s.push_back(x, c, "s");
  }
  return s;
}

}  // namespace

TEST(Training, SoftmaxCrossEntropy) {
  const std::vector<double> eq(3, 0.4);
  EXPECT_NEAR(softmax_cross_entropy(eq, 1).loss, std::log(3.0), 1e-15);
  const std::vector<double> big = {1000, 0};
  const auto r = softmax_cross_entropy(big, 0);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_NEAR(r.loss, 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(r.grad[0]) && std::isfinite(r.grad[1]));
  std::mt19937_64 gen(1);
  std::normal_distribution<double> n(0, 2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> z(2 + trial % 6);
    for (auto& v : z) v = n(gen);
    const std::size_t label = static_cast<std::size_t>(trial) % z.size();
    const auto lg = softmax_cross_entropy(z, label);
    for (std::size_t j = 0; j < z.size(); ++j) {
      auto up = z, dn = z;
      up[j] += 1e-5;
      dn[j] -= 1e-5;
      const double fd = (softmax_cross_entropy(up, label).loss - softmax_cross_entropy(dn, label).loss) / 2e-5;
      EXPECT_NEAR(lg.grad[j], fd, 1e-6);
    }
  }
  EXPECT_THROW(softmax_cross_entropy(eq, 3), ArgumentError);
}

TEST(Training, Argmax) {
  EXPECT_EQ(argmax(std::vector<double>{0.5, 0.5, 0.5}), 0u);
  EXPECT_EQ(argmax(std::vector<double>{0.1, 0.7, 0.7}), 1u);
}

TEST(Training, AdamZeroGradientIsNoop) {
  std::vector<double> p = {1.0, -2.0, 3.0}, g(3, 0.0);
  AdamState st(3);
  TrainConfig cfg;
  adamw_step(p, g, st, cfg);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
}

TEST(Training, AdamFirstStep) {
  std::vector<double> p = {0.0, 0.0, 0.0}, g = {0.5, -3.0, 1e-3};
  AdamState st(3);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  adamw_step(p, g, st, cfg);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(p[i], -0.01 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
    EXPECT_EQ(std::signbit(p[i]), !std::signbit(g[i]));
  }
}

TEST(Training, AdamMatchesOracle) {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> n(0, 1);
  for (double wd : {0.0, 0.01}) {
    std::vector<double> p(50), q, m(50, 0), v(50, 0);
    for (auto& x : p) x = n(gen);
    q = p;
    AdamState st(50);
    TrainConfig cfg;
    cfg.learning_rate = 3e-3;
    cfg.weight_decay = wd;
    for (int t = 1; t <= 25; ++t) {
      std::vector<double> g(50);
      for (auto& x : g) x = n(gen);
      adamw_step(p, g, st, cfg);
      adam_oracle(q, g, m, v, t, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon, wd);
    }
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
}

TEST(Training, LinearHeadGradient) {
  auto h = init_head(7, 3, 2);
  const std::vector<float> f = {0.1f, 0.0f, 0.5f, 0.9f, 0.2f, 0.3f, 1.0f};
  const auto lg = softmax_cross_entropy(h.logits(f), 2);
  std::vector<double> g(h.params.size(), 0.0);
  h.accumulate_gradient(f, lg.grad, g);
  for (std::size_t i = 0; i < h.params.size(); ++i) {
    const double orig = h.params[i];
    h.params[i] = orig + 1e-5;
    const double up = softmax_cross_entropy(h.logits(f), 2).loss;
    h.params[i] = orig - 1e-5;
    const double dn = softmax_cross_entropy(h.logits(f), 2).loss;
    h.params[i] = orig;
    EXPECT_NEAR(g[i], (up - dn) / 2e-5, 1e-6);
  }
}

TEST(Training, LiuNetSeparableFixture) {
  const auto train = separable(400, 1), val = separable(100, 2);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-2;
  const auto run = train_liunet(train, val, 2, cfg);
  double best = 0;
  for (const auto& e : run.fit.log)
    if (e.split == "val") best = std::max(best, e.scores.miou);
  EXPECT_EQ(best, 1.0);
  EXPECT_EQ(run.fit.best_val_miou, best);
  EXPECT_EQ(predict(run.params, train, 1), train.labels);
  // train loss does not increase over the last epochs
  std::vector<double> losses;
  for (const auto& e : run.fit.log)
    if (e.split == "train") losses.push_back(e.loss);
  EXPECT_LT(losses.back(), losses.front());
}

TEST(Training, BestEpochIsEarliestMaximum) {
  const auto train = separable(200, 3), val = separable(60, 4);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.learning_rate = 1e-2;
  const auto run = train_liunet(train, val, 2, cfg);
  std::size_t first_best = 0;
  double best = -1;
  for (const auto& e : run.fit.log)
    if (e.split == "val" && e.scores.miou > best) {
      best = e.scores.miou;
      first_best = e.epoch;
    }
  EXPECT_EQ(run.fit.best_epoch, first_best);
}

TEST(Training, DeterministicAcrossRunsAndWorkers) {
  const auto train = separable(300, 5), val = separable(60, 6);
  TrainConfig cfg;
  cfg.batch_size = 64;
  cfg.epochs = 3;
  const auto a = train_liunet(train, val, 2, cfg);
  const auto b = train_liunet(train, val, 2, cfg);
  cfg.workers = 3;
  const auto c = train_liunet(train, val, 2, cfg);
  EXPECT_EQ(a.params.values, b.params.values);
  EXPECT_EQ(a.params.values, c.params.values);
  for (std::size_t i = 0; i < a.fit.log.size(); ++i) {
    EXPECT_EQ(a.fit.log[i].loss, b.fit.log[i].loss);
    EXPECT_EQ(a.fit.log[i].loss, c.fit.log[i].loss);
  }
}

TEST(Training, RocketHeadTrainsAndRoundTrips) {
  synthetic::BumpSpec spec;
  const auto train = synthetic::gaussian_bumps(300, spec, 1), val = synthetic::gaussian_bumps(90, spec, 2);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.epochs = 3;
  cfg.learning_rate = 1e-3;
  const auto run = train_rocket(train, val, 3, cfg, features::Variant::hdc_minirocket, 5.0);
  EXPECT_GT(run.fit.best_val_miou, 0.9);
  oracle::TempDir tmp("head");
  save(tmp.path, run.model);
  const auto back = load_rocket(tmp.path);
  EXPECT_EQ(back.variant, features::Variant::hdc_minirocket);
  EXPECT_EQ(back.head.params, run.model.head.params);
  EXPECT_EQ(predict(back, val, 2), predict(run.model, val, 1));
  cfg.workers = 2;
  const auto again = train_rocket(train, val, 3, cfg, features::Variant::hdc_minirocket, 5.0);
  EXPECT_EQ(again.model.head.params, run.model.head.params);
}

TEST(Training, RejectsEmptySplits) {
  TrainConfig cfg;
  EXPECT_THROW(train_liunet(data::SampleSet{}, separable(4, 1), 2, cfg), ArgumentError);
  EXPECT_THROW(train_rocket(separable(4, 1), data::SampleSet{}, 2, cfg, features::Variant::minirocket, 0),
               ArgumentError);
}
