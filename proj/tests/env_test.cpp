#include <gtest/gtest.h>

#include <cmath>

#include "fdrlhf/env.hpp"

namespace fdrlhf {
namespace {

TEST(Environment, DefaultsKeepTrueRewardsInRange) {
  const Environment env = make_environment(5, 10, 3);
  EXPECT_EQ(env.num_actions(), 10);
  EXPECT_DOUBLE_EQ(env.truth.scale(), 1.0 / 25.0);
  Rng rng = make_stream(3, Stream::Eval);
  for (int i = 0; i < 200; ++i) {
    const Eigen::VectorXd x = sample_context(env, rng);
    for (Eigen::Index a = 0; a < env.num_actions(); ++a) {
      const double r = reward_eval(env.truth, x, env.actions.col(a));
      EXPECT_GE(r, 0.0);
      EXPECT_LE(r, 1.0);
    }
  }
  EXPECT_TRUE(env.reference_row(Eigen::VectorXd::Zero(5)).isApproxToConstant(0.1));
}

TEST(Environment, RejectsBadShapes) {
  EXPECT_THROW(make_environment(5, 1, 0), ConfigError);
  EXPECT_THROW(make_environment(0, 4, 0), ConfigError);
  Environment env = make_environment(2, 3, 0);
  env.ref_policy = [](const Eigen::VectorXd&) { return Eigen::Vector3d(0.5, 0.5, 0.0); };
  EXPECT_THROW(env.reference_row(Eigen::Vector2d::Zero()), DomainError);
}

TEST(SampleContext, SupportMomentsAndDeterminism) {
  const Environment env = make_environment(4, 3, 1);
  Rng a = make_stream(9, Stream::Context), b = make_stream(9, Stream::Context);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = sample_context(env, a);
    ASSERT_TRUE((x.array() >= 0.0).all() && (x.array() <= 1.0).all());
    if (i < 100) {
      EXPECT_EQ(x, sample_context(env, b));
    }
    mean += x;
  }
  mean /= n;
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(mean[i], 0.5, 0.01);
}

TEST(Streams, AreDistinct) {
  Rng a = make_stream(0, Stream::Context), b = make_stream(0, Stream::Preference);
  Rng c = make_stream(1, Stream::Context);
  const auto va = a(), vb = b(), vc = c();
  EXPECT_NE(va, vb);
  EXPECT_NE(va, vc);
}

// Environment with a hand-set truth so the logit gap is known exactly.
Environment two_action_env(double gap) {
  Environment env;
  env.k = 1;
  env.actions = Eigen::MatrixXd(1, 2);
  env.actions << 1.0, 0.0;
  env.truth = LinearRewardModel(Eigen::MatrixXd::Constant(1, 1, gap), 1.0);
  return env;
}

TEST(PreferenceOracle, FrequencyMatchesSigmoid) {
  const Environment env = two_action_env(1.0);
  const Eigen::VectorXd x = Eigen::VectorXd::Ones(1);
  Rng rng = make_stream(2, Stream::Preference);
  const int n = 100000;
  int first = 0, reversed = 0, same = 0;
  for (int i = 0; i < n; ++i) {
    first += preference_oracle(env, x, 0, 1, rng) == 0;
    reversed += preference_oracle(env, x, 1, 0, rng) == 0;
    same += preference_oracle(env, x, 0, 0, rng) == 0;
  }
  EXPECT_NEAR(static_cast<double>(first) / n, 0.7310585786300049, 0.005);
  // P(y=0 | i,j) + P(y=0 | j,i) = 1.
  EXPECT_NEAR(static_cast<double>(first + reversed) / n, 1.0, 0.01);
  EXPECT_NEAR(static_cast<double>(same) / n, 0.5, 0.005);
}

TEST(PreferenceOracle, EqualRewardsAreFair) {
  const Environment env = two_action_env(0.0);
  Rng rng = make_stream(4, Stream::Preference);
  const int n = 100000;
  int first = 0;
  for (int i = 0; i < n; ++i) first += preference_oracle(env, Eigen::VectorXd::Ones(1), 0, 1, rng) == 0;
  EXPECT_NEAR(static_cast<double>(first) / n, 0.5, 0.005);
}

TEST(RewardOracle, NoiselessAndMoments) {
  Environment env = two_action_env(0.3);
  const Eigen::VectorXd x = Eigen::VectorXd::Ones(1);
  Rng rng = make_stream(5, Stream::Noise);
  env.noise_sigma = 0.0;
  EXPECT_EQ(reward_oracle(env, x, 0, rng), 0.3);

  env.noise_sigma = 0.1;
  const int n = 100000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = reward_oracle(env, x, 0, rng);
    s += r;
    s2 += r * r;
  }
  const double mean = s / n, var = s2 / n - mean * mean;
  EXPECT_NEAR(mean, 0.3, 3.0 * 0.1 / std::sqrt(n));
  EXPECT_NEAR(var / 0.01, 1.0, 0.05);
}

TEST(FiniteClass, ContainsTruth) {
  const Environment env = make_environment(3, 4, 6);
  Rng rng = make_stream(6, Stream::Setup);
  const FiniteRewardClass cls = make_finite_class(env, 20, rng);
  ASSERT_EQ(cls.size(), 20u);
  EXPECT_EQ(cls.members[cls.truth_index].w(), env.truth.w());
  EXPECT_THROW(make_finite_class(env, 0, rng), ConfigError);
}

}  // namespace
}  // namespace fdrlhf
