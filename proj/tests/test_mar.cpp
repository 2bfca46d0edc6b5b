#include <cmath>
#include <sstream>

#include "test_util.hpp"

using namespace toolrl;
using toolrl::testing::expect_golden;

namespace {

MarState state_with(const Vector& ema, double eps = 0.2, double beta = 0.9) {
  MarState s = MarState::uniform(static_cast<int>(ema.size()), {eps, beta});
  s.ema = ema;
  s.initialized = true;
  return s;
}

Vector vec(std::initializer_list<double> xs) {
  return Eigen::Map<const Vector>(xs.begin(), static_cast<Eigen::Index>(xs.size()));
}

Matrix random_group(Rng& rng, int g, int R) {
  Matrix m(g, R);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform();
  return m;
}

double pop_std(const Vector& x) { return std::sqrt((x.array() - x.mean()).square().mean()); }

}  // namespace

TEST(Deviation, HandValues) {
  const MarState s = state_with(vec({0.5, 0.4, 0.25}));
  const Vector same = deviation_score(vec({0.5, 0.4, 0.25}), s);
  EXPECT_TRUE((same.array() == 1.0).all());
  const Vector doubled = deviation_score(vec({1.0, 0.8, 0.5}), s);
  for (Eigen::Index k = 0; k < 3; ++k) EXPECT_NEAR(doubled[k], 0.8, 1e-15);
  const Vector zero = deviation_score(vec({0.0, 0.0, 0.0}), s);
  for (Eigen::Index k = 0; k < 3; ++k) EXPECT_NEAR(zero[k], 1.2, 1e-15);
  // inside the clip: (0.55 - 0.5) / 0.5 = 0.1
  EXPECT_NEAR(deviation_score(vec({0.55, 0.4, 0.25}), s)[0], 0.9, 1e-12);
}

TEST(Deviation, AlwaysWithinClipBand) {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double eps = 0.01 + 0.5 * rng.uniform();
    Vector ema(5), r(5);
    for (int k = 0; k < 5; ++k) {
      ema[k] = 1e-3 + rng.uniform();
      r[k] = rng.uniform();
    }
    const Vector w = deviation_score(r, state_with(ema, eps));
    EXPECT_TRUE((w.array() >= 1.0 - eps - 1e-15).all());
    EXPECT_TRUE((w.array() <= 1.0 + eps + 1e-15).all());
  }
}

TEST(Ema, FixedPointNoRetentionAndContraction) {
  const Vector ema = vec({0.3, 0.7});
  EXPECT_TRUE((update_ema(ema, state_with(ema)).ema.array() == ema.array()).all());
  const Vector r = vec({0.9, 0.1});
  EXPECT_TRUE((update_ema(r, state_with(ema, 0.2, 0.0)).ema.array() == r.array()).all());

  for (double init : {0.01, 0.5, 3.0}) {
    MarState s = state_with(vec({init}), 0.2, 0.9);
    const double c = 0.42;
    for (int i = 0; i < 200; ++i) s = update_ema(vec({c}), s);
    EXPECT_LE(std::abs(s.ema[0] - c), std::pow(0.9, 200) * std::abs(init - c) + 1e-15);
  }
}

TEST(Ema, OnlyEmaChanges) {
  MarState s = state_with(vec({0.3, 0.7}));
  s.weights = vec({0.25, 0.75});
  const MarState n = update_ema(vec({0.5, 0.5}), s);
  EXPECT_TRUE((n.weights.array() == s.weights.array()).all());
  EXPECT_EQ(n.epsilon, s.epsilon);
  EXPECT_EQ(n.beta, s.beta);
}

TEST(Weights, SoftmaxValues) {
  const MarState s = state_with(vec({1, 1, 1, 1}));
  const MarState eq = normalize_weights(vec({0.9, 0.9, 0.9, 0.9}), s);
  for (Eigen::Index k = 0; k < 4; ++k) EXPECT_NEAR(eq.weights[k], 0.25, 1e-15);

  const MarState two = normalize_weights(vec({1.2, 0.8}), state_with(vec({1, 1})));
  const double sigma = 1.0 / (1.0 + std::exp(-0.4));
  EXPECT_NEAR(two.weights[0], sigma, 1e-12);
  EXPECT_NEAR(two.weights[1], 1.0 - sigma, 1e-12);
  EXPECT_NEAR(two.weights[0], 0.5987, 1e-4);
}

TEST(Weights, SimplexAndMonotoneReallocation) {
  Rng rng(derive_seed(3, Stream::Property));
  for (int trial = 0; trial < 1000; ++trial) {
    const int R = 2 + static_cast<int>(rng.index(6));
    Vector ema(R), r(R);
    for (int k = 0; k < R; ++k) {
      ema[k] = 0.05 + rng.uniform();
      r[k] = rng.uniform();
    }
    const MarState s = state_with(ema);
    const MarState a = normalize_weights(deviation_score(r, s), s);
    EXPECT_NEAR(a.weights.sum(), 1.0, 1e-9);
    EXPECT_TRUE((a.weights.array() > 0.0).all() && (a.weights.array() < 1.0).all());

    const int k = static_cast<int>(rng.index(static_cast<std::size_t>(R)));
    Vector lower = r;
    lower[k] *= rng.uniform();
    const MarState b = normalize_weights(deviation_score(lower, s), s);
    EXPECT_GE(b.weights[k], a.weights[k] - 1e-15);
    for (int j = 0; j < R; ++j)
      if (j != k) EXPECT_LE(b.weights[j], a.weights[j] + 1e-15);
  }
}

TEST(Weights, LowerRewardRaisesWeightStrictly) {
  const MarState s = state_with(vec({0.5, 0.5, 0.5}));
  const MarState a = normalize_weights(deviation_score(vec({0.5, 0.5, 0.5}), s), s);
  const MarState b = normalize_weights(deviation_score(vec({0.45, 0.5, 0.5}), s), s);
  EXPECT_GT(b.weights[0], a.weights[0]);
}

TEST(ObserveBatch, FirstBatchSeedsAverage) {
  MarState s = MarState::uniform(3);
  const Vector r = vec({0.2, 0.5, 0.9});
  s = observe_batch(r, s);
  EXPECT_TRUE(s.initialized);
  EXPECT_TRUE((s.ema.array() == r.array()).all());
  for (Eigen::Index k = 0; k < 3; ++k) EXPECT_NEAR(s.weights[k], 1.0 / 3.0, 1e-15);
  // deviation uses the pre-update average
  const Vector r2 = vec({0.1, 0.5, 0.9});
  const MarState n = observe_batch(r2, s);
  EXPECT_NEAR(n.deviation[0], 1.2, 1e-12);  // (0.1 - 0.2) / 0.2 = -0.5, clipped
  EXPECT_NEAR(n.ema[0], 0.1 * 0.1 + 0.9 * 0.2, 1e-15);
  EXPECT_GT(n.weights[0], n.weights[1]);
}

TEST(Decoupled, HandColumn) {
  Matrix g(3, 2);
  g << 1, 0.5, 2, 0.5, 3, 0.5;
  const Matrix a = decoupled_advantages(g);
  const double sd = std::sqrt(2.0 / 3.0);
  EXPECT_NEAR(a(0, 0), -1.0 / sd, 1e-12);
  EXPECT_NEAR(a(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(a(2, 0), 1.0 / sd, 1e-12);
  EXPECT_NEAR(a(2, 0), 1.2247, 1e-4);
  EXPECT_TRUE((a.col(1).array() == 0.0).all());
}

TEST(Decoupled, StandardizedColumnsAndScaleInvariance) {
  Rng rng(derive_seed(4, Stream::Property));
  for (int trial = 0; trial < 1000; ++trial) {
    const int g = 2 + static_cast<int>(rng.index(15));
    const int R = 1 + static_cast<int>(rng.index(6));
    Matrix group = random_group(rng, g, R);
    const Matrix a = decoupled_advantages(group);
    for (int k = 0; k < R; ++k) {
      EXPECT_NEAR(a.col(k).mean(), 0.0, 1e-9);
      EXPECT_NEAR(pop_std(a.col(k)), 1.0, 1e-9);
    }
    const int k = static_cast<int>(rng.index(static_cast<std::size_t>(R)));
    const double c = std::exp(4.0 * (rng.uniform() - 0.5));
    group.col(k) *= c;
    const Matrix b = decoupled_advantages(group);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Aggregate, HandCases) {
  Matrix per(1, 2);
  per << 1, -1;
  EXPECT_NEAR(aggregate_advantages(per, vec({0.5, 0.5}))[0], 0.0, 1e-15);

  Rng rng(9);
  const Matrix m = random_group(rng, 6, 4);
  const Vector first = aggregate_advantages(m, vec({1, 0, 0, 0}));
  EXPECT_TRUE((first.array() == m.col(0).array()).all());
}

TEST(Aggregate, ZeroGroupMean) {
  Rng rng(10);
  for (int trial = 0; trial < 500; ++trial) {
    Matrix group = random_group(rng, 8, 6);
    if (trial % 3 == 0) group.col(2).setConstant(0.4);  // degenerate column
    MarState s = MarState::uniform(6);
    Vector w(6);
    for (int k = 0; k < 6; ++k) w[k] = rng.uniform();
    s.weights = w / w.sum();
    EXPECT_NEAR(aggregate_advantages(decoupled_advantages(group), s).mean(), 0.0, 1e-9);
  }
}

TEST(RewardModes, Coincidences) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix group = random_group(rng, 8, 6);
    const MarState uniform = MarState::uniform(6);
    const Vector mar = reward_advantages(group, RewardMode::Mar, uniform);
    const Vector now = reward_advantages(group, RewardMode::NoWeights, uniform);
    EXPECT_LT((mar - now).cwiseAbs().maxCoeff(), 1e-12);
    // sum vs mean only rescales before standardization
    const Vector van = reward_advantages(group, RewardMode::Vanilla, uniform);
    const Vector nod = reward_advantages(group, RewardMode::NoDecouple, uniform);
    EXPECT_LT((van - nod).cwiseAbs().maxCoeff(), 1e-9);

    const Matrix single = group.leftCols(1);
    const MarState one = MarState::uniform(1);
    const Vector ref = reward_advantages(single, RewardMode::Mar, one);
    for (RewardMode m : {RewardMode::Vanilla, RewardMode::NoDecouple, RewardMode::NoWeights})
      EXPECT_LT((reward_advantages(single, m, one) - ref).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(RewardModes, DecouplingChangesTheAnswer) {
  // metric 0 has a large spread, metric 1 a tiny opposite one
  Matrix group(4, 2);
  group << 0.1, 0.52, 0.4, 0.51, 0.7, 0.50, 1.0, 0.49;
  const MarState s = MarState::uniform(2);
  const Vector van = reward_advantages(group, RewardMode::Vanilla, s);
  const Vector dec = reward_advantages(group, RewardMode::NoWeights, s);
  EXPECT_GT(van[3], 1.0);
  EXPECT_NEAR(dec[3], 0.0, 1e-9);  // opposite standardized columns cancel
}

TEST(RewardModes, ParseAndUnknown) {
  for (RewardMode m : {RewardMode::Vanilla, RewardMode::NoDecouple, RewardMode::NoWeights, RewardMode::Mar})
    EXPECT_EQ(parse_reward_mode(to_string(m)), m);
  try {
    parse_reward_mode("greedy");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownMode);
  }
  EXPECT_THROW(reward_advantages(Matrix::Ones(1, 3), RewardMode::Mar, MarState::uniform(3)), Error);
}

TEST(RewardModes, PinnedOutputs) {
  Rng rng(derive_seed(20260101, Stream::Property, {1}));
  const Matrix group = random_group(rng, 8, 6);
  MarState s = MarState::uniform(6);
  s = observe_batch(vec({0.8, 0.7, 0.6, 0.5, 0.4, 0.3}), s);
  s = observe_batch(group.colwise().mean().transpose(), s);
  std::ostringstream out;
  for (RewardMode m : {RewardMode::Vanilla, RewardMode::NoDecouple, RewardMode::NoWeights, RewardMode::Mar}) {
    const Vector a = reward_advantages(group, m, s);
    out << to_string(m);
    for (Eigen::Index j = 0; j < a.size(); ++j) out << ' ' << format_double(a[j]);
    out << '\n';
  }
  expect_golden("reward_modes.txt", out.str());
}
