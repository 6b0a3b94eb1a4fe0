#pragma once

// Per-context regularized optimal policy
//     pi(a) = pi0(a) h(eta (r_a - lambda)),   sum_a pi(a) = 1,
// and the derivative-weighted exploration distributions built on top of it.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <utility>

#include "fdrlhf/divergence.hpp"
#include "fdrlhf/errors.hpp"
#include "fdrlhf/root_finding.hpp"

namespace fdrlhf {

using Rng = std::mt19937_64;

struct DiscretePolicy {
  Eigen::VectorXd probs;

  Eigen::Index size() const noexcept { return probs.size(); }
  double operator[](Eigen::Index a) const { return probs[a]; }

  bool is_valid(double tol = 1e-9) const {
    return probs.size() > 0 && (probs.array() >= 0.0).all() && std::abs(probs.sum() - 1.0) <= tol;
  }

  static DiscretePolicy uniform(Eigen::Index m) {
    return {Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m))};
  }
};

struct LambdaSolution {
  double lambda = 0.0;
  double residual = 0.0;  // |sum_a pi0(a) h(eta (r_a - lambda)) - 1|
  int iterations = 0;
};

struct OptimalRow {
  DiscretePolicy policy;
  LambdaSolution lambda;
};

namespace detail {

inline void check_row_inputs(const Eigen::VectorXd& ref_row, const Eigen::VectorXd& rewards_row,
                             double eta) {
  if (ref_row.size() != rewards_row.size() || ref_row.size() == 0) {
    throw ShapeError("reference and reward rows must be non-empty and of equal length");
  }
  if (!(eta > 0.0) || !std::isfinite(eta)) throw DomainError("eta must be a positive finite real");
  if (!(ref_row.array() > 0.0).all()) {
    throw DomainError("reference policy must have full support");
  }
  if (!rewards_row.allFinite()) throw DomainError("rewards must be finite");
}

}  // namespace detail

/// Normalizer lambda of the closed-form optimum.
///
/// F(lambda) = sum_a pi0(a) h(eta (r_a - lambda)) is strictly decreasing, and
/// the bracket is analytic: at lambda_hi = max r - f'(1)/eta every argument
/// is <= f'(1) so F <= 1; at lambda_lo every argument is >= f'(1) (or the
/// best action alone already carries mass 1) so F >= 1. Both endpoints keep
/// every argument inside h_domain. The root is then polished by safeguarded
/// Newton using F'(lambda) = -eta sum_a pi0(a) h'(.).
inline LambdaSolution solve_lambda(const FDivergence& spec, const Eigen::VectorXd& ref_row,
                                   const Eigen::VectorXd& rewards_row, double eta,
                                   double tol = 1e-12) {
  detail::check_row_inputs(ref_row, rewards_row, eta);
  const Eigen::Index m = rewards_row.size();
  Eigen::Index amax = 0;
  const double rmax = rewards_row.maxCoeff(&amax);
  const double rmin = rewards_row.minCoeff();
  const double f1 = spec.f_prime(1.0);

  const double lambda_hi = rmax - f1 / eta;
  if (rmax == rmin) return {lambda_hi, 0.0, 0};

  const double lambda_lo =
      std::max(rmin - f1 / eta, rmax - spec.f_prime(1.0 / ref_row[amax]) / eta);

  auto fdf = [&](double lambda) -> std::pair<double, double> {
    double f = -1.0, df = 0.0;
    for (Eigen::Index a = 0; a < m; ++a) {
      const double y = eta * (rewards_row[a] - lambda);
      const double hy = spec.h(y);
      f += ref_row[a] * hy;
      df -= eta * ref_row[a] * spec.h_prime_from_h(y, hy);
    }
    return {f, df};
  };

  RootOptions opt;
  opt.residual_tol = 2.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(m);
  opt.max_iterations = 200;
  // When one action carries essentially all the mass the root coincides with
  // an endpoint and rounding can put F - 1 on the wrong side of zero there.
  const double g_lo = fdf(lambda_lo).first;
  if (g_lo <= 0.0) {
    if (-g_lo > tol) throw SolverError("lambda bracket lost its sign change", -g_lo);
    return {lambda_lo, -g_lo, 0};
  }
  const double g_hi = fdf(lambda_hi).first;
  if (g_hi >= 0.0) {
    if (g_hi > tol) throw SolverError("lambda bracket lost its sign change", g_hi);
    return {lambda_hi, g_hi, 0};
  }
  const RootResult root = safeguarded_newton(fdf, lambda_lo, lambda_hi, opt);
  const double residual = std::abs(fdf(root.root).first);
  if (residual > tol) {
    throw SolverError("lambda solve did not reach tolerance", residual);
  }
  return {root.root, residual, root.iterations};
}

inline OptimalRow solve_optimal_row(const FDivergence& spec, const Eigen::VectorXd& ref_row,
                                    const Eigen::VectorXd& rewards_row, double eta,
                                    double tol = 1e-12) {
  const LambdaSolution sol = solve_lambda(spec, ref_row, rewards_row, eta, tol);
  if (rewards_row.maxCoeff() == rewards_row.minCoeff()) return {{ref_row}, sol};
  Eigen::VectorXd probs(ref_row.size());
  for (Eigen::Index a = 0; a < probs.size(); ++a) {
    probs[a] = ref_row[a] * spec.h(eta * (rewards_row[a] - sol.lambda));
  }
  return {{std::move(probs)}, sol};
}

inline DiscretePolicy optimal_policy_row(const FDivergence& spec, const Eigen::VectorXd& ref_row,
                                         const Eigen::VectorXd& rewards_row, double eta) {
  return solve_optimal_row(spec, ref_row, rewards_row, eta).policy;
}

/// max_a |r_a - f'(pi_a / pi0_a) / eta - lambda|.
inline double kkt_residual(const FDivergence& spec, const Eigen::VectorXd& ref_row,
                           const Eigen::VectorXd& rewards_row, double eta,
                           const DiscretePolicy& policy, double lambda) {
  double worst = 0.0;
  for (Eigen::Index a = 0; a < ref_row.size(); ++a) {
    const double stationarity =
        rewards_row[a] - spec.f_prime(policy[a] / ref_row[a]) / eta - lambda;
    worst = std::max(worst, std::abs(stationarity));
  }
  return worst;
}

struct ExplorationBundle {
  DiscretePolicy pi_prime;
  double t_bar = 0.0;
  double z_plus = 0.0;
  double z_minus = 0.0;
  double p_mix = 0.0;
  double omega_raw = 0.0;  // t_bar + z_plus * z_minus * t_bar
  double lambda = 0.0;
  bool degenerate = false;  // t_bar underflowed; pi_prime fell back to pi0
};

/// Derivative-weighted sampler pi'(a) = pi0(a) h'(eta (r_a - lambda)) / T_bar
/// together with the tilt normalizers Z+ = E_{pi'} e^r, Z- = E_{pi'} e^-r and
/// the mixing probability p = Z+ Z- / (1 + Z+ Z-).
inline ExplorationBundle exploration_bundle(const FDivergence& spec, const Eigen::VectorXd& ref_row,
                                            const Eigen::VectorXd& rewards_row, double eta) {
  const LambdaSolution sol = solve_lambda(spec, ref_row, rewards_row, eta);
  const Eigen::Index m = ref_row.size();
  ExplorationBundle b;
  b.lambda = sol.lambda;
  Eigen::VectorXd weights(m);
  const bool flat = rewards_row.maxCoeff() == rewards_row.minCoeff();
  for (Eigen::Index a = 0; a < m; ++a) {
    // Flat rewards put every argument exactly at f'(1).
    const double y = flat ? spec.f_prime(1.0) : eta * (rewards_row[a] - sol.lambda);
    weights[a] = ref_row[a] * spec.h_prime(y);
  }
  b.t_bar = weights.sum();
  if (!(b.t_bar > 1e-300)) {
    b.degenerate = true;
    b.pi_prime.probs = ref_row;
  } else {
    b.pi_prime.probs = weights / b.t_bar;
  }
  // Shifted sums keep p_mix finite even when fitted rewards are large.
  const double rmax = rewards_row.maxCoeff(), rmin = rewards_row.minCoeff();
  const double sp = (b.pi_prime.probs.array() * (rewards_row.array() - rmax).exp()).sum();
  const double sm = (b.pi_prime.probs.array() * (rmin - rewards_row.array()).exp()).sum();
  b.z_plus = std::exp(rmax) * sp;
  b.z_minus = std::exp(-rmin) * sm;
  const double log_zz = (rmax - rmin) + std::log(sp) + std::log(sm);
  b.p_mix = 1.0 / (1.0 + std::exp(-log_zz));
  b.omega_raw = b.t_bar + b.z_plus * b.z_minus * b.t_bar;
  return b;
}

/// pi+(a) = pi'(a) e^{r_a} / Z+,  pi-(a) = pi'(a) e^{-r_a} / Z-, evaluated with
/// shifted exponents.
inline std::pair<DiscretePolicy, DiscretePolicy> plus_minus_rows(const ExplorationBundle& bundle,
                                                                 const Eigen::VectorXd& rewards_row) {
  if (rewards_row.size() != bundle.pi_prime.size()) {
    throw ShapeError("plus_minus_rows: reward row does not match bundle");
  }
  const double rmax = rewards_row.maxCoeff(), rmin = rewards_row.minCoeff();
  Eigen::VectorXd plus = bundle.pi_prime.probs.array() * (rewards_row.array() - rmax).exp();
  Eigen::VectorXd minus = bundle.pi_prime.probs.array() * (rmin - rewards_row.array()).exp();
  plus /= plus.sum();
  minus /= minus.sum();
  return {DiscretePolicy{std::move(plus)}, DiscretePolicy{std::move(minus)}};
}

/// Inverse-CDF draw; consumes exactly one uniform from `rng`.
inline Eigen::Index sample_categorical(const Eigen::VectorXd& probs, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng) * probs.sum();
  double acc = 0.0;
  for (Eigen::Index a = 0; a < probs.size(); ++a) {
    acc += probs[a];
    if (u < acc) return a;
  }
  // u landed in the rounding gap at the top; return the last positive entry.
  for (Eigen::Index a = probs.size() - 1; a >= 0; --a) {
    if (probs[a] > 0.0) return a;
  }
  return probs.size() - 1;
}

struct ActionPair {
  Eigen::Index first = 0;
  Eigen::Index second = 0;
  bool tilted = false;  // true when drawn from (pi+, pi-)
};

/// With probability 1 - p draw both actions from pi'; otherwise a1 ~ pi+,
/// a2 ~ pi-. Consumes three uniforms: branch, first, second.
inline ActionPair sample_action_pair(const ExplorationBundle& bundle, const DiscretePolicy& pi_prime,
                                     const DiscretePolicy& pi_plus, const DiscretePolicy& pi_minus,
                                     Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  ActionPair out;
  out.tilted = unif(rng) < bundle.p_mix;
  if (out.tilted) {
    out.first = sample_categorical(pi_plus.probs, rng);
    out.second = sample_categorical(pi_minus.probs, rng);
  } else {
    out.first = sample_categorical(pi_prime.probs, rng);
    out.second = sample_categorical(pi_prime.probs, rng);
  }
  return out;
}

}  // namespace fdrlhf
