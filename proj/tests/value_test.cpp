#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fdrlhf/constants.hpp"
#include "fdrlhf/value.hpp"

namespace fdrlhf {
namespace {

Eigen::VectorXd random_simplex(std::mt19937_64& rng, Eigen::Index m) {
  std::gamma_distribution<double> g(1.0, 1.0);
  Eigen::VectorXd v(m);
  for (auto& e : v) e = g(rng) + 1e-3;
  return v / v.sum();
}

Eigen::VectorXd random_rewards(std::mt19937_64& rng, Eigen::Index m) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd v(m);
  for (auto& e : v) e = u(rng);
  return v;
}

TEST(Value, ReferencePolicyHasNoPenalty) {
  std::mt19937_64 rng(1);
  for (auto name : kRegisteredDivergences) {
    const auto spec = registry_get(name);
    const Eigen::VectorXd ref = random_simplex(rng, 6), r = random_rewards(rng, 6);
    EXPECT_NEAR(value_at_context(ref, r, ref, spec, 0.7), ref.dot(r), 1e-15) << name;
  }
}

TEST(Value, LargeEtaApproachesMaxReward) {
  const auto spec = registry_get("reverse_kl");
  std::mt19937_64 rng(2);
  const Eigen::VectorXd ref = Eigen::VectorXd::Constant(8, 0.125), r = random_rewards(rng, 8);
  const double eta = 1e3;
  const auto best = optimal_policy_row(spec, ref, r, eta);
  EXPECT_LE(std::abs(value_at_context(best.probs, r, ref, spec, eta) - r.maxCoeff()), 1e-2);
}

TEST(Value, OptimumBeatsRandomPerturbations) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  for (auto name : kRegisteredDivergences) {
    const auto spec = registry_get(name);
    const Eigen::VectorXd ref = random_simplex(rng, 5), r = random_rewards(rng, 5);
    const double eta = 1.5;
    const auto best = optimal_policy_row(spec, ref, r, eta);
    const double v_best = value_at_context(best.probs, r, ref, spec, eta);
    for (int trial = 0; trial < 1000; ++trial) {
      Eigen::VectorXd p = best.probs;
      const double size = trial < 500 ? 1e-3 : 0.1;
      for (auto& e : p) e = std::max(1e-12, e * std::exp(size * n01(rng)));
      p /= p.sum();
      EXPECT_LE(value_at_context(p, r, ref, spec, eta), v_best + 1e-12) << name;
    }
  }
}

TEST(Suboptimality, Examples) {
  const auto spec = registry_get("reverse_kl");
  const Eigen::Vector2d ref(0.5, 0.5), r(1.0, 0.0);
  // log((e + 1) / 2) - 1/2 from a 30-digit evaluation.
  EXPECT_NEAR(suboptimality(ref, r, ref, spec, 1.0), 0.12011450695827752463, 1e-14);
  const auto best = optimal_policy_row(spec, ref, r, 1.0);
  EXPECT_EQ(suboptimality(best.probs, r, ref, spec, 1.0), 0.0);
  std::mt19937_64 rng(4);
  for (auto name : kRegisteredDivergences) {
    const auto s = registry_get(name);
    const Eigen::VectorXd ref6 = random_simplex(rng, 6), r6 = random_rewards(rng, 6);
    EXPECT_GT(suboptimality(ref6, r6, ref6, s, 2.0), 0.0) << name;
  }
}

TEST(Suboptimality, EnvironmentOverload) {
  const Environment env = make_environment(3, 4, 5);
  const auto spec = registry_get("chi2_mixed_kl");
  const Eigen::Vector3d x(0.2, 0.9, 0.4);
  const DiscretePolicy ref{env.reference_row(x)};
  EXPECT_NEAR(value_at_context(ref, env, spec, 1.0, x), ref.probs.dot(env.true_rewards(x)), 1e-15);
  EXPECT_GT(suboptimality(ref, env, spec, 1.0, x), 0.0);
}

// One context, two actions, reward table rows.
Eigen::MatrixXd table(std::initializer_list<double> r) {
  Eigen::MatrixXd t(1, static_cast<Eigen::Index>(r.size()));
  Eigen::Index j = 0;
  for (double v : r) t(0, j++) = v;
  return t;
}

TEST(Constants, ForwardKlTwoActionExample) {
  const auto spec = registry_get("forward_kl");
  const Eigen::MatrixXd ref = table({0.5, 0.5});
  const auto est = estimate_constants(spec, {table({1.0, 0.0})}, ref, 1.0);
  EXPECT_NEAR(est.m, 1.17157287525380990240, 1e-12);
  EXPECT_LE(est.m, est.c + 1e-9);
}

TEST(Constants, ReverseKlIsOne) {
  std::mt19937_64 rng(6);
  const auto spec = registry_get("reverse_kl");
  std::vector<Eigen::MatrixXd> tables;
  Eigen::MatrixXd ref(12, 5);
  for (Eigen::Index x = 0; x < 12; ++x) ref.row(x) = random_simplex(rng, 5).transpose();
  for (int j = 0; j < 6; ++j) {
    Eigen::MatrixXd t(12, 5);
    for (Eigen::Index x = 0; x < 12; ++x) t.row(x) = random_rewards(rng, 5).transpose();
    tables.push_back(t);
  }
  const auto est = estimate_constants(spec, tables, ref, 1.0);
  EXPECT_NEAR(est.c, 1.0, 1e-9);
  EXPECT_NEAR(est.m, 1.0, 1e-9);
}

TEST(Constants, OrderingsAcrossDivergences) {
  std::mt19937_64 rng(7);
  Eigen::MatrixXd ref(8, 4);
  for (Eigen::Index x = 0; x < 8; ++x) ref.row(x) = random_simplex(rng, 4).transpose();
  std::vector<Eigen::MatrixXd> tables;
  for (int j = 0; j < 5; ++j) {
    Eigen::MatrixXd t(8, 4);
    for (Eigen::Index x = 0; x < 8; ++x) t.row(x) = random_rewards(rng, 4).transpose();
    tables.push_back(t);
  }
  for (auto name : kRegisteredDivergences) {
    const auto est = estimate_constants(registry_get(name), tables, ref, 1.0, {16, 3});
    EXPECT_LE(est.m, est.c + 1e-9) << name;
  }
  EXPECT_LT(constant_C(registry_get("chi2_mixed_kl"), tables, ref, 1.0), 1.0);
  EXPECT_LT(constant_C(registry_get("xlogx_minus_logx"), tables, ref, 1.0), 1.0);
  EXPECT_GE(constant_M(registry_get("forward_kl"), tables, ref, 1.0), 1.0);
}

TEST(Constants, Errors) {
  const auto spec = registry_get("reverse_kl");
  EXPECT_THROW(estimate_constants(spec, {}, table({0.5, 0.5}), 1.0), ShapeError);
  EXPECT_THROW(estimate_constants(spec, {table({1.0, 0.0, 0.0})}, table({0.5, 0.5}), 1.0), ShapeError);
}

}  // namespace
}  // namespace fdrlhf
