#pragma once

// Regularized value J(pi | x) = E_pi r - D_f(pi || pi0) / eta, evaluated
// exactly over the finite action set.

#include <Eigen/Dense>
#include <span>

#include "fdrlhf/divergence.hpp"
#include "fdrlhf/env.hpp"
#include "fdrlhf/errors.hpp"
#include "fdrlhf/policy.hpp"

namespace fdrlhf {

inline double value_at_context(const Eigen::VectorXd& policy_row, const Eigen::VectorXd& rewards_row,
                               const Eigen::VectorXd& ref_row, const FDivergence& spec, double eta) {
  if (policy_row.size() != rewards_row.size() || policy_row.size() != ref_row.size()) {
    throw ShapeError("value_at_context: row lengths differ");
  }
  const double div = divergence_value(std::span<const double>(policy_row.data(), policy_row.size()),
                                      std::span<const double>(ref_row.data(), ref_row.size()), spec);
  return policy_row.dot(rewards_row) - div / eta;
}

inline double value_at_context(const DiscretePolicy& policy, const Environment& env,
                               const FDivergence& spec, double eta, const Eigen::VectorXd& x) {
  return value_at_context(policy.probs, env.true_rewards(x), env.reference_row(x), spec, eta);
}

/// J(pi* | x) - J(pi | x); throws NumericalError below -1e-9.
inline double suboptimality(const Eigen::VectorXd& policy_row, const Eigen::VectorXd& rewards_row,
                            const Eigen::VectorXd& ref_row, const FDivergence& spec, double eta) {
  const DiscretePolicy best = optimal_policy_row(spec, ref_row, rewards_row, eta);
  const double gap = value_at_context(best.probs, rewards_row, ref_row, spec, eta) -
                     value_at_context(policy_row, rewards_row, ref_row, spec, eta);
  if (gap < -1e-9) {
    throw NumericalError("negative suboptimality " + std::to_string(gap));
  }
  return gap;
}

inline double suboptimality(const DiscretePolicy& policy, const Environment& env,
                            const FDivergence& spec, double eta, const Eigen::VectorXd& x) {
  return suboptimality(policy.probs, env.true_rewards(x), env.reference_row(x), spec, eta);
}

}  // namespace fdrlhf
