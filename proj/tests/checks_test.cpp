#include <gtest/gtest.h>

#include <cmath>

#include "fdrlhf/checks.hpp"

namespace fdrlhf {
namespace {

TEST(Suites, SmallKktAndInvariancePass) {
  const SuiteReport kkt = kkt_suite(60, 1);
  EXPECT_TRUE(kkt.passed());
  EXPECT_EQ(kkt.results.size(), 2 * kRegisteredDivergences.size() + 1);
  EXPECT_TRUE(invariance_suite(60, 2).passed());
}

TEST(Suites, SmallConstantsPass) {
  const SuiteReport rep = constants_suite(10, 3);
  for (const auto& r : rep.results) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}

TEST(Suites, UnknownNameIsConfigError) { EXPECT_THROW(run_suite("lipschitz"), ConfigError); }

// One context, two actions, k = 1: theta is a scalar, r(a) = theta * a.
TEST(GradientHessian, ReverseKlTwoActionExample) {
  Environment env;
  env.k = 1;
  env.actions = Eigen::MatrixXd(1, 2);
  env.actions << 1.0, 0.0;
  env.truth = LinearRewardModel(Eigen::MatrixXd::Constant(1, 1, 0.8), 1.0);
  for (double eta : {0.5, 1.0, 2.0}) {
    const auto rep = gradient_hessian_check(registry_get("reverse_kl"), env, eta, 1e-4, 1, 0);
    EXPECT_LE(rep.grad_inf, 1e-4);
    EXPECT_LE(rep.hess_max_dev, 1e-3);
    // Closed form at x: -eta T_bar Var_{pi*}(x a) with T_bar = 1 and pi* = softmax.
    PoolObjective probe(env, registry_get("reverse_kl"), eta, 1, 0);
    Rng rng = make_stream(0, Stream::Eval);
    const double x = sample_context(env, rng)[0];
    const double p = 1.0 / (1.0 + std::exp(-eta * 0.8 * x));
    EXPECT_NEAR(probe.predicted_hessian()(0, 0), -eta * x * x * p * (1.0 - p), 1e-14);
  }
}

TEST(GradientHessian, Chi2SmallPool) {
  const Environment env = make_environment(2, 3, 4);
  const auto rep = gradient_hessian_check(registry_get("chi2_mixed_kl"), env, 1.0, 1e-4, 64, 4);
  EXPECT_LE(rep.grad_inf, 1e-4);
  EXPECT_LE(rep.hess_max_dev, 1e-3);
  EXPECT_LE(rep.hess_max_dev, 1e-2 * rep.hess_max_abs);
  EXPECT_TRUE(rep.fd_hessian.isApprox(rep.fd_hessian.transpose()));
}

TEST(ValueDecomposition, TruthHasZeroSides) {
  const Eigen::MatrixXd truth = (Eigen::MatrixXd(2, 3) << 0.1, 0.5, 0.9, 0.3, 0.3, 0.7).finished();
  const Eigen::MatrixXd ref = Eigen::MatrixXd::Constant(2, 3, 1.0 / 3.0);
  const auto rep = value_decomposition_check(registry_get("js"), truth, ref, 1.0, {truth, truth.array() + 0.2});
  EXPECT_EQ(rep.candidates, 2u);
  EXPECT_EQ(rep.violations, 0u);
  EXPECT_EQ(rep.lhs[0], 0.0);
  EXPECT_EQ(rep.rhs[0], 0.0);
  // A constant shift leaves the policy unchanged.
  EXPECT_NEAR(rep.lhs[1], 0.0, 1e-12);
  EXPECT_GT(rep.rhs[1], 0.0);
}

TEST(ValueDecomposition, RejectsNonDominatingCandidate) {
  const Eigen::MatrixXd truth = Eigen::MatrixXd::Constant(1, 2, 0.5);
  const Eigen::MatrixXd ref = Eigen::MatrixXd::Constant(1, 2, 0.5);
  EXPECT_THROW(value_decomposition_check(registry_get("reverse_kl"), truth, ref, 1.0, {truth.array() - 0.1}),
               DomainError);
  EXPECT_THROW(value_decomposition_check(registry_get("reverse_kl"), truth, ref, 1.0, {Eigen::MatrixXd(1, 3)}),
               ShapeError);
}

TEST(ValueDecomposition, SmallSweep) {
  const SuiteReport rep = valdecomp_suite(6, 16, 5);
  for (const auto& r : rep.results) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}

}  // namespace
}  // namespace fdrlhf
