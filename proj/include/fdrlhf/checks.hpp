#pragma once

// Numerical checks of structural identities of the regularized optimum:
// solver KKT conditions, reward-shift invariance, the divergence constants,
// the gradient/Hessian of J at theta*, and the value-decomposition bound.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fdrlhf/constants.hpp"
#include "fdrlhf/divergence.hpp"
#include "fdrlhf/env.hpp"
#include "fdrlhf/policy.hpp"
#include "fdrlhf/value.hpp"

namespace fdrlhf {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckResult> results;

  bool passed() const {
    for (const auto& r : results)
      if (!r.passed) return false;
    return true;
  }
};

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

inline Eigen::VectorXd random_simplex(Rng& rng, Eigen::Index m) {
  std::gamma_distribution<double> g(1.0, 1.0);
  Eigen::VectorXd v(m);
  for (auto& e : v) e = g(rng) + 1e-3;
  return v / v.sum();
}

/// Reward row of a random linear instance with k <= 5, m <= 10.
struct RandomRow {
  Eigen::VectorXd ref;
  Eigen::VectorXd rewards;
  double eta = 1.0;
};

inline RandomRow random_row(Rng& rng) {
  std::uniform_int_distribution<Eigen::Index> kd(1, 5), md(2, 10);
  std::uniform_int_distribution<int> ed(0, 2);
  const Eigen::Index k = kd(rng), m = md(rng);
  const Eigen::MatrixXd w = uniform_matrix(rng, k, k);
  const Eigen::MatrixXd actions = uniform_matrix(rng, k, m);
  const Eigen::VectorXd x = uniform_matrix(rng, k, 1).col(0);
  const LinearRewardModel model(w, 1.0 / static_cast<double>(k * k));
  constexpr double etas[] = {0.5, 1.0, 2.0};
  return {random_simplex(rng, m), model.row(x, actions), etas[ed(rng)]};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Gradient and Hessian of theta -> J(pi_theta) at theta*

struct GradHessReport {
  double grad_inf = 0.0;
  double hess_max_dev = 0.0;   // max |H_fd + eta Sigma1|
  double hess_max_abs = 0.0;   // max |eta Sigma1|
  Eigen::MatrixXd fd_hessian;
  Eigen::MatrixXd predicted;   // -eta Sigma1
};

/// J(theta) averaged over a fixed pool, exact over actions.
class PoolObjective {
 public:
  PoolObjective(const Environment& env, const FDivergence& spec, double eta, std::size_t pool_size,
                std::uint64_t seed)
      : env_(env), spec_(spec), eta_(eta) {
    Rng rng = make_stream(seed, Stream::Eval);
    for (std::size_t c = 0; c < pool_size; ++c) {
      x_.push_back(sample_context(env, rng));
      ref_.push_back(env.reference_row(x_.back()));
      truth_.push_back(env.true_rewards(x_.back()));
    }
  }

  double operator()(const Eigen::VectorXd& theta) const {
    const LinearRewardModel model = LinearRewardModel::from_theta(theta, env_.k, env_.truth.scale());
    double acc = 0.0;
    for (std::size_t c = 0; c < x_.size(); ++c) {
      const DiscretePolicy pi = optimal_policy_row(spec_, ref_[c], model.row(x_[c], env_.actions), eta_);
      acc += value_at_context(pi.probs, truth_[c], ref_[c], spec_, eta_);
    }
    return acc / static_cast<double>(x_.size());
  }

  /// -eta E_x[T_bar(x) Cov_{a ~ pi'}(grad_theta r(x, a))] at the truth.
  Eigen::MatrixXd predicted_hessian() const {
    const Eigen::Index d = env_.k * env_.k;
    const Eigen::Index m = env_.num_actions();
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd phi(d, m);
    for (std::size_t c = 0; c < x_.size(); ++c) {
      const ExplorationBundle b = exploration_bundle(spec_, ref_[c], truth_[c], eta_);
      for (Eigen::Index a = 0; a < m; ++a) phi.col(a) = env_.truth.feature(x_[c], env_.actions.col(a));
      const Eigen::VectorXd mean = phi * b.pi_prime.probs;
      const Eigen::MatrixXd centered = phi.colwise() - mean;
      sigma += b.t_bar * centered * b.pi_prime.probs.asDiagonal() * centered.transpose();
    }
    return -eta_ * sigma / static_cast<double>(x_.size());
  }

 private:
  const Environment& env_;
  FDivergence spec_;
  double eta_;
  std::vector<Eigen::VectorXd> x_, ref_, truth_;
};

inline GradHessReport gradient_hessian_check(const FDivergence& spec, const Environment& env, double eta,
                                             double fd_step = 1e-4, std::size_t pool_size = 10000,
                                             std::uint64_t seed = 0) {
  const PoolObjective objective(env, spec, eta, pool_size, seed);
  const Eigen::VectorXd theta = env.truth.theta();
  const Eigen::Index d = theta.size();
  const double h = fd_step;
  GradHessReport rep;

  const double j0 = objective(theta);
  Eigen::VectorXd jp(d), jm(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    Eigen::VectorXd t = theta;
    t[i] += h;
    jp[i] = objective(t);
    t[i] = theta[i] - h;
    jm[i] = objective(t);
    rep.grad_inf = std::max(rep.grad_inf, std::abs((jp[i] - jm[i]) / (2.0 * h)));
  }
  rep.fd_hessian.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    rep.fd_hessian(i, i) = (jp[i] - 2.0 * j0 + jm[i]) / (h * h);
    for (Eigen::Index j = i + 1; j < d; ++j) {
      auto at = [&](double si, double sj) {
        Eigen::VectorXd t = theta;
        t[i] += si * h;
        t[j] += sj * h;
        return objective(t);
      };
      const double v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h * h);
      rep.fd_hessian(i, j) = rep.fd_hessian(j, i) = v;
    }
  }
  rep.predicted = objective.predicted_hessian();
  rep.hess_max_dev = (rep.fd_hessian - rep.predicted).cwiseAbs().maxCoeff();
  rep.hess_max_abs = rep.predicted.cwiseAbs().maxCoeff();
  return rep;
}

// ---------------------------------------------------------------------------
// Value decomposition bound for dominating rewards

struct ValueDecompReport {
  std::size_t candidates = 0;
  std::size_t violations = 0;
  double max_excess = -std::numeric_limits<double>::infinity();  // max(lhs - rhs)
  std::vector<double> lhs, rhs;
};

/// For each candidate table r >= r*, checks
///     J(pi*) - J(pi_r) <= eta C E_{x, a ~ pi_r}[(r* - r)^2] + slack,
/// with C estimated over the two-point class {r, r*}. Tables are
/// (contexts x actions) over a common context pool.
inline ValueDecompReport value_decomposition_check(const FDivergence& spec, const Eigen::MatrixXd& truth,
                                                   const Eigen::MatrixXd& ref_rows, double eta,
                                                   const std::vector<Eigen::MatrixXd>& candidates,
                                                   double slack = 1e-6, std::uint64_t seed = 0) {
  ValueDecompReport rep;
  const Eigen::Index n = truth.rows();
  for (const auto& r : candidates) {
    if (r.rows() != truth.rows() || r.cols() != truth.cols()) throw ShapeError("candidate table shape");
    if ((r.array() < truth.array()).any()) throw DomainError("candidate reward does not dominate r*");
    double lhs = 0.0, sq = 0.0;
    for (Eigen::Index x = 0; x < n; ++x) {
      const Eigen::VectorXd ref = ref_rows.row(x).transpose();
      const Eigen::VectorXd rs = truth.row(x).transpose();
      const Eigen::VectorXd rr = r.row(x).transpose();
      const DiscretePolicy pi_r = optimal_policy_row(spec, ref, rr, eta);
      lhs += suboptimality(pi_r.probs, rs, ref, spec, eta);
      sq += pi_r.probs.dot((rs - rr).array().square().matrix());
    }
    lhs /= static_cast<double>(n);
    sq /= static_cast<double>(n);
    const double c = constant_C(spec, {r, truth}, ref_rows, eta, {64, seed});
    const double rhs = eta * c * sq;
    rep.lhs.push_back(lhs);
    rep.rhs.push_back(rhs);
    rep.max_excess = std::max(rep.max_excess, lhs - rhs);
    rep.violations += lhs > rhs + slack;
    ++rep.candidates;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Suites

/// Normalization, KKT stationarity and the softmax closed form for KL.
inline SuiteReport kkt_suite(std::size_t instances = 1000, std::uint64_t seed = 0) {
  SuiteReport rep{"kkt", {}};
  Rng rng(seed);
  for (auto name : kRegisteredDivergences) {
    const FDivergence spec = registry_get(name);
    double norm = 0.0, kkt = 0.0, softmax = 0.0;
    for (std::size_t i = 0; i < instances; ++i) {
      const auto row = detail::random_row(rng);
      const OptimalRow opt = solve_optimal_row(spec, row.ref, row.rewards, row.eta);
      norm = std::max(norm, std::abs(opt.policy.probs.sum() - 1.0));
      kkt = std::max(kkt, kkt_residual(spec, row.ref, row.rewards, row.eta, opt.policy, opt.lambda.lambda));
      if (spec.kind() == DivergenceKind::ReverseKl) {
        Eigen::VectorXd sm = row.ref.array() * (row.eta * (row.rewards.array() - row.rewards.maxCoeff())).exp();
        sm /= sm.sum();
        softmax = std::max(softmax, (sm - opt.policy.probs).cwiseAbs().maxCoeff());
      }
    }
    const std::string n(name);
    rep.results.push_back({n + " normalization", norm <= 1e-10, "max |sum pi - 1| = " + detail::fmt(norm)});
    rep.results.push_back({n + " kkt", kkt <= 1e-7, "max KKT residual = " + detail::fmt(kkt)});
    if (spec.kind() == DivergenceKind::ReverseKl) {
      rep.results.push_back({n + " softmax", softmax <= 1e-8, "max |pi - softmax| = " + detail::fmt(softmax)});
    }
  }
  return rep;
}

/// Adding a context-only constant A leaves the policy unchanged and shifts
/// lambda by A.
inline SuiteReport invariance_suite(std::size_t pairs = 1000, std::uint64_t seed = 0) {
  SuiteReport rep{"invariance", {}};
  Rng rng(seed);
  std::uniform_real_distribution<double> shift(-2.0, 2.0);
  for (auto name : kRegisteredDivergences) {
    const FDivergence spec = registry_get(name);
    double dev = 0.0, lam = 0.0;
    for (std::size_t i = 0; i < pairs; ++i) {
      const auto row = detail::random_row(rng);
      const double a = shift(rng);
      const OptimalRow base = solve_optimal_row(spec, row.ref, row.rewards, row.eta);
      const Eigen::VectorXd shifted_rewards = row.rewards.array() + a;
      const OptimalRow moved = solve_optimal_row(spec, row.ref, shifted_rewards, row.eta);
      dev = std::max(dev, (base.policy.probs - moved.policy.probs).cwiseAbs().maxCoeff());
      lam = std::max(lam, std::abs(moved.lambda.lambda - base.lambda.lambda - a));
    }
    const std::string n(name);
    rep.results.push_back({n + " policy", dev <= 1e-8, "max policy deviation = " + detail::fmt(dev)});
    rep.results.push_back({n + " lambda", lam <= 1e-8, "max |dlambda - A| = " + detail::fmt(lam)});
  }
  return rep;
}

/// Orderings of the sampled constants over random reward classes.
inline SuiteReport constants_suite(std::size_t instances = 200, std::uint64_t seed = 0) {
  SuiteReport rep{"constants", {}};
  Rng rng(seed);
  std::uniform_int_distribution<int> nd(2, 5), md(2, 10), ed(0, 2);
  constexpr double etas[] = {0.5, 1.0, 2.0};
  const std::size_t contexts = 8;
  std::size_t m_le_c = 0, kl_one = 0, chi2_lt = 0, xlogx_lt = 0, fkl_ge = 0;
  double worst_order = -std::numeric_limits<double>::infinity(), worst_kl = 0.0;
  double max_c_chi2 = 0.0, max_c_xlogx = 0.0, min_m_fkl = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < instances; ++i) {
    const int n = nd(rng);
    const Eigen::Index m = md(rng);
    const double eta = etas[ed(rng)];
    Eigen::MatrixXd ref(static_cast<Eigen::Index>(contexts), m);
    for (Eigen::Index x = 0; x < ref.rows(); ++x) ref.row(x) = detail::random_simplex(rng, m).transpose();
    std::vector<Eigen::MatrixXd> tables;
    for (int j = 0; j < n; ++j) tables.push_back(uniform_matrix(rng, ref.rows(), m));
    const ConstantOptions opt{64, rng()};
    for (auto name : kRegisteredDivergences) {
      const FDivergence spec = registry_get(name);
      const ConstantEstimate est = estimate_constants(spec, tables, ref, eta, opt);
      worst_order = std::max(worst_order, est.m - est.c);
      m_le_c += est.m <= est.c + 1e-9;
      switch (spec.kind()) {
        case DivergenceKind::ReverseKl: {
          const double e = std::max(std::abs(est.c - 1.0), std::abs(est.m - 1.0));
          worst_kl = std::max(worst_kl, e);
          kl_one += e <= 1e-9;
          break;
        }
        case DivergenceKind::Chi2MixedKl:
          max_c_chi2 = std::max(max_c_chi2, est.c);
          chi2_lt += est.c < 1.0;
          break;
        case DivergenceKind::XlogxMinusLogx:
          max_c_xlogx = std::max(max_c_xlogx, est.c);
          xlogx_lt += est.c < 1.0;
          break;
        case DivergenceKind::ForwardKl:
          min_m_fkl = std::min(min_m_fkl, est.m);
          fkl_ge += est.m >= 1.0;
          break;
        default: break;
      }
    }
  }
  const std::size_t total = instances * kRegisteredDivergences.size();
  rep.results.push_back({"M <= C + 1e-9", m_le_c == total,
                         std::to_string(m_le_c) + "/" + std::to_string(total) +
                             ", max(M - C) = " + detail::fmt(worst_order)});
  rep.results.push_back({"reverse_kl C = M = 1", kl_one == instances,
                         std::to_string(kl_one) + "/" + std::to_string(instances) +
                             ", max deviation = " + detail::fmt(worst_kl)});
  rep.results.push_back({"chi2_mixed_kl C < 1", chi2_lt == instances,
                         std::to_string(chi2_lt) + "/" + std::to_string(instances) +
                             ", max C = " + detail::fmt(max_c_chi2)});
  rep.results.push_back({"xlogx_minus_logx C < 1", xlogx_lt == instances,
                         std::to_string(xlogx_lt) + "/" + std::to_string(instances) +
                             ", max C = " + detail::fmt(max_c_xlogx)});
  rep.results.push_back({"forward_kl M >= 1", fkl_ge == instances,
                         std::to_string(fkl_ge) + "/" + std::to_string(instances) +
                             ", min M = " + detail::fmt(min_m_fkl)});
  return rep;
}

/// Vanishing gradient and Hessian = -eta Sigma1 at theta* on a k = 3,
/// m = 4 instance.
inline SuiteReport gradhess_suite(std::size_t pool_size = 10000, std::uint64_t seed = 0,
                                  double eta = 1.0) {
  SuiteReport rep{"gradhess", {}};
  const Environment env = make_environment(3, 4, seed);
  for (const char* name : {"reverse_kl", "chi2_mixed_kl"}) {
    const GradHessReport g = gradient_hessian_check(registry_get(name), env, eta, 1e-4, pool_size, seed);
    const std::string n(name);
    rep.results.push_back({n + " gradient", g.grad_inf <= 1e-4, "||grad||_inf = " + detail::fmt(g.grad_inf)});
    rep.results.push_back({n + " hessian", g.hess_max_dev <= 1e-3,
                           "max |H + eta Sigma1| = " + detail::fmt(g.hess_max_dev) +
                               " (max |eta Sigma1| = " + detail::fmt(g.hess_max_abs) + ")"});
  }
  return rep;
}

/// Dominating perturbations r = r* + |noise| per divergence, on a k = 3,
/// m = 4 instance with a shared context pool.
inline SuiteReport valdecomp_suite(std::size_t perturbations = 50, std::size_t pool_size = 256,
                                   std::uint64_t seed = 0, double eta = 1.0) {
  SuiteReport rep{"valdecomp", {}};
  const Environment env = make_environment(3, 4, seed);
  Rng rng = make_stream(seed, Stream::Eval);
  Eigen::MatrixXd truth(static_cast<Eigen::Index>(pool_size), env.num_actions());
  Eigen::MatrixXd ref(truth.rows(), truth.cols());
  for (Eigen::Index c = 0; c < truth.rows(); ++c) {
    const Eigen::VectorXd x = sample_context(env, rng);
    truth.row(c) = env.true_rewards(x).transpose();
    ref.row(c) = env.reference_row(x).transpose();
  }
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> level(0.01, 0.5);
  for (auto name : kRegisteredDivergences) {
    std::vector<Eigen::MatrixXd> candidates;
    candidates.push_back(truth);
    candidates.push_back(truth.array() + 0.1);
    while (candidates.size() < perturbations + 2) {
      const double s = level(rng);
      Eigen::MatrixXd r = truth;
      for (auto& e : r.reshaped()) e += s * std::abs(n01(rng));
      candidates.push_back(std::move(r));
    }
    const ValueDecompReport v = value_decomposition_check(registry_get(name), truth, ref, eta, candidates, 1e-6, seed);
    rep.results.push_back({std::string(name), v.violations == 0,
                           std::to_string(v.violations) + " violations in " + std::to_string(v.candidates) +
                               " candidates, max(lhs - rhs) = " + detail::fmt(v.max_excess)});
  }
  return rep;
}

inline SuiteReport run_suite(const std::string& name, std::uint64_t seed = 0) {
  if (name == "kkt") return kkt_suite(1000, seed);
  if (name == "invariance") return invariance_suite(1000, seed);
  if (name == "constants") return constants_suite(200, seed);
  if (name == "gradhess") return gradhess_suite(10000, seed);
  if (name == "valdecomp") return valdecomp_suite(50, 256, seed);
  throw ConfigError("unknown check suite '" + name + "'");
}

}  // namespace fdrlhf
