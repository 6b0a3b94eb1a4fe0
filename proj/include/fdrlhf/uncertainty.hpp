#pragma once

// Optimism bonuses: finite-class eluder uncertainty with confidence sets, and
// the linear elliptical bonus beta * ||phi - phi_ref||_{Sigma^{-1}}.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fdrlhf/errors.hpp"
#include "fdrlhf/reward.hpp"

namespace fdrlhf {

// ---------------------------------------------------------------------------
// Linear backend

/// Sigma = (xi / B) I + sum_i dphi_i dphi_i^T with a Cholesky factor kept in
/// sync by rank-one updates.
class GramState {
 public:
  GramState() = default;
  GramState(Eigen::Index dim, double ridge, Eigen::VectorXd mean_ref_feature)
      : sigma_(Eigen::MatrixXd::Identity(dim, dim) * ridge),
        mean_ref_feature_(std::move(mean_ref_feature)),
        ridge_(ridge) {
    if (!(ridge > 0.0)) throw DomainError("Gram ridge xi / B must be positive");
    if (mean_ref_feature_.size() != dim) throw ShapeError("mean reference feature dimension");
    llt_.compute(sigma_);
  }

  void add(const Eigen::VectorXd& dphi) {
    if (dphi.size() != sigma_.rows()) throw ShapeError("Gram update dimension");
    sigma_.noalias() += dphi * dphi.transpose();
    llt_.rankUpdate(dphi, 1.0);
    if (llt_.info() != Eigen::Success) llt_.compute(sigma_);
    ++count_;
  }

  /// sqrt(v^T Sigma^{-1} v) via the triangular factor.
  double inverse_norm(const Eigen::VectorXd& v) const {
    const Eigen::VectorXd w = llt_.matrixL().solve(v);
    const double n2 = w.squaredNorm();
    if (!std::isfinite(n2)) throw NumericalError("Gram solve failed");
    return std::sqrt(n2);
  }

  const Eigen::MatrixXd& sigma() const noexcept { return sigma_; }
  const Eigen::VectorXd& mean_ref_feature() const noexcept { return mean_ref_feature_; }
  double ridge() const noexcept { return ridge_; }
  std::size_t count() const noexcept { return count_; }

 private:
  Eigen::MatrixXd sigma_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd mean_ref_feature_;
  double ridge_ = 1.0;
  std::size_t count_ = 0;
};

/// beta * ||phi - mean_ref_feature||_{Sigma^{-1}}.
inline double linear_bonus(const GramState& state, const Eigen::VectorXd& phi, double beta) {
  if (beta == 0.0) return 0.0;
  return beta * state.inverse_norm(phi - state.mean_ref_feature());
}

/// Linear bonus of every action at context x.
inline Eigen::VectorXd linear_bonus_row(const GramState& state, const Eigen::VectorXd& x,
                                        const Eigen::MatrixXd& actions, double scale, double beta) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(actions.cols());
  if (beta == 0.0) return out;
  for (Eigen::Index a = 0; a < actions.cols(); ++a) {
    out[a] = linear_bonus(state, LinearRewardModel::feature(x, actions.col(a), scale), beta);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Finite-class backend

struct ConfidenceSet {
  std::vector<std::size_t> members;
  double beta_sq = 0.0;

  bool empty() const noexcept { return members.empty(); }
  std::size_t size() const noexcept { return members.size(); }
};

/// A logged pairwise query (x, a1, a2).
struct PairQuery {
  Eigen::VectorXd x;
  Eigen::Index first = 0;
  Eigen::Index second = 0;
};

/// A logged single-action query (x, a).
struct ActionQuery {
  Eigen::VectorXd x;
  Eigen::Index action = 0;
};

inline double pair_logit(const LinearRewardModel& r, const Eigen::MatrixXd& actions,
                         const Eigen::VectorXd& x, Eigen::Index i, Eigen::Index j) {
  return r(x, actions.col(i)) - r(x, actions.col(j));
}

/// beta_T^2 = 4 e log(N T / delta).
inline double beta_sq_pairwise(std::size_t class_size, std::size_t horizon, double delta) {
  return 4.0 * std::exp(1.0) *
         std::log(static_cast<double>(class_size) * static_cast<double>(horizon) / delta);
}

/// beta_T^RF = 16 log(N T / delta).
inline double beta_reward_feedback(std::size_t class_size, std::size_t horizon, double delta) {
  return 16.0 * std::log(static_cast<double>(class_size) * static_cast<double>(horizon) / delta);
}

inline double bonus_pairwise(double u, double beta) { return std::min(1.0, beta * u); }

/// Members whose squared pairwise-logit deviation from the MLE member over
/// the history, plus xi, is at most beta_sq.
inline ConfidenceSet confidence_set_update(const FiniteRewardClass& cls, std::size_t mle_index,
                                           const std::vector<PairQuery>& history,
                                           const Eigen::MatrixXd& actions, double xi,
                                           double beta_sq) {
  if (mle_index >= cls.size()) throw ShapeError("MLE index outside the reward class");
  ConfidenceSet set{{}, beta_sq};
  const auto& mle = cls.members[mle_index];
  for (std::size_t j = 0; j < cls.size(); ++j) {
    double dev = 0.0;
    for (const auto& q : history) {
      const double d = pair_logit(cls.members[j], actions, q.x, q.first, q.second) -
                       pair_logit(mle, actions, q.x, q.first, q.second);
      dev += d * d;
    }
    if (j == mle_index || dev + xi <= beta_sq) set.members.push_back(j);
  }
  return set;
}

/// Uncertainty sup_{R1,R2} dR(x,a_i,a_j) / sqrt(xi + sum_hist dR^2) by
/// exhaustive enumeration over the set.
inline double eluder_uncertainty_finite(const ConfidenceSet& set, const FiniteRewardClass& cls,
                                        const std::vector<PairQuery>& history,
                                        const Eigen::MatrixXd& actions, const Eigen::VectorXd& x,
                                        Eigen::Index i, Eigen::Index j, double xi) {
  if (set.empty()) throw EmptyConfidenceSet();
  if (!(xi > 0.0)) throw DomainError("xi must be positive");
  double best = 0.0;
  for (std::size_t p = 0; p < set.size(); ++p) {
    const auto& r1 = cls.members[set.members[p]];
    for (std::size_t q = p + 1; q < set.size(); ++q) {
      const auto& r2 = cls.members[set.members[q]];
      double denom = xi;
      for (const auto& h : history) {
        const double d = pair_logit(r1, actions, h.x, h.first, h.second) -
                         pair_logit(r2, actions, h.x, h.first, h.second);
        denom += d * d;
      }
      const double num = pair_logit(r1, actions, x, i, j) - pair_logit(r2, actions, x, i, j);
      // The ordered pair (R2, R1) flips the sign, so the sup sees |num|.
      best = std::max(best, std::abs(num) / std::sqrt(denom));
    }
  }
  return best;
}

/// min(1, beta_rf * U_RF) with U_RF the single-action analogue of the
/// eluder uncertainty.
inline double bonus_rf(const FiniteRewardClass& cls, const ConfidenceSet& set,
                       const std::vector<ActionQuery>& history, const Eigen::MatrixXd& actions,
                       const Eigen::VectorXd& x, Eigen::Index i, double xi, double beta_rf) {
  if (set.empty()) throw EmptyConfidenceSet();
  if (!(xi > 0.0)) throw DomainError("xi must be positive");
  double best = 0.0;
  for (std::size_t p = 0; p < set.size(); ++p) {
    const auto& r1 = cls.members[set.members[p]];
    for (std::size_t q = p + 1; q < set.size(); ++q) {
      const auto& r2 = cls.members[set.members[q]];
      double denom = xi;
      for (const auto& h : history) {
        const double d = r1(h.x, actions.col(h.action)) - r2(h.x, actions.col(h.action));
        denom += d * d;
      }
      const double num = r1(x, actions.col(i)) - r2(x, actions.col(i));
      best = std::max(best, std::abs(num) / std::sqrt(denom));
    }
  }
  return std::min(1.0, beta_rf * best);
}

/// Confidence set for absolute feedback: squared reward deviation from the
/// least-squares member over the history, plus xi, at most beta_rf^2.
inline ConfidenceSet confidence_set_update_rf(const FiniteRewardClass& cls, std::size_t fit_index,
                                              const std::vector<ActionQuery>& history,
                                              const Eigen::MatrixXd& actions, double xi,
                                              double beta_rf) {
  if (fit_index >= cls.size()) throw ShapeError("fit index outside the reward class");
  ConfidenceSet set{{}, beta_rf * beta_rf};
  const auto& fit = cls.members[fit_index];
  for (std::size_t j = 0; j < cls.size(); ++j) {
    double dev = 0.0;
    for (const auto& q : history) {
      const double d = cls.members[j](q.x, actions.col(q.action)) - fit(q.x, actions.col(q.action));
      dev += d * d;
    }
    if (j == fit_index || dev + xi <= set.beta_sq) set.members.push_back(j);
  }
  return set;
}

/// Incremental bookkeeping for the finite-class backend: pairwise sums
/// S(p, q) = sum_hist (g_p - g_q)^2 of a per-member statistic g (pairwise
/// logit or single reward) plus per-member log-likelihood or squared error.
class PairwiseTracker {
 public:
  explicit PairwiseTracker(std::size_t n)
      : n_(n), sums_(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))),
        score_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))) {}

  /// `g` holds one value per member for the new observation; `score_delta`
  /// is added to each member's running score.
  void add(const Eigen::VectorXd& g, const Eigen::VectorXd& score_delta) {
    for (std::size_t p = 0; p < n_; ++p) {
      for (std::size_t q = p + 1; q < n_; ++q) {
        const double d = g[static_cast<Eigen::Index>(p)] - g[static_cast<Eigen::Index>(q)];
        sums_(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) += d * d;
      }
    }
    score_ += score_delta;
    ++count_;
  }

  double pair_sum(std::size_t p, std::size_t q) const {
    if (p == q) return 0.0;
    if (p > q) std::swap(p, q);
    return sums_(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q));
  }

  /// Highest score, ties to the lowest index.
  std::size_t best() const {
    std::size_t idx = 0;
    for (std::size_t j = 1; j < n_; ++j) {
      if (score_[static_cast<Eigen::Index>(j)] > score_[static_cast<Eigen::Index>(idx)]) idx = j;
    }
    return idx;
  }

  ConfidenceSet confidence_set(std::size_t center, double xi, double beta_sq) const {
    ConfidenceSet set{{}, beta_sq};
    for (std::size_t j = 0; j < n_; ++j) {
      if (j == center || pair_sum(j, center) + xi <= beta_sq) set.members.push_back(j);
    }
    return set;
  }

  const Eigen::VectorXd& scores() const noexcept { return score_; }
  std::size_t size() const noexcept { return n_; }
  std::size_t count() const noexcept { return count_; }

 private:
  std::size_t n_;
  Eigen::MatrixXd sums_;  // strict upper triangle
  Eigen::VectorXd score_;
  std::size_t count_ = 0;
};

/// Frozen view of the finite-class state used to build one published policy.
struct FiniteSnapshot {
  std::size_t center = 0;
  std::vector<std::size_t> members;
  Eigen::MatrixXd inv_denominator;  // 1 / sqrt(xi + S(p, q)) over members

  static FiniteSnapshot take(const PairwiseTracker& tracker, double xi, double beta_sq) {
    FiniteSnapshot s;
    s.center = tracker.best();
    s.members = tracker.confidence_set(s.center, xi, beta_sq).members;
    const auto n = static_cast<Eigen::Index>(s.members.size());
    s.inv_denominator = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        s.inv_denominator(p, q) =
            1.0 / std::sqrt(xi + tracker.pair_sum(s.members[static_cast<std::size_t>(p)],
                                                  s.members[static_cast<std::size_t>(q)]));
      }
    }
    return s;
  }
};

/// Pairwise bonus matrix b(x, a, a') = min(1, beta * U) for all action pairs,
/// given the reward rows of every class member at x (members x m).
inline Eigen::MatrixXd pairwise_bonus_matrix(const FiniteSnapshot& snap,
                                             const Eigen::MatrixXd& member_rows, double beta) {
  const Eigen::Index m = member_rows.cols();
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(m, m);
  const auto n = static_cast<Eigen::Index>(snap.members.size());
  Eigen::VectorXd diff(m);
  for (Eigen::Index p = 0; p < n; ++p) {
    const auto rp = member_rows.row(static_cast<Eigen::Index>(snap.members[static_cast<std::size_t>(p)]));
    for (Eigen::Index q = p + 1; q < n; ++q) {
      const auto rq =
          member_rows.row(static_cast<Eigen::Index>(snap.members[static_cast<std::size_t>(q)]));
      diff = (rp - rq).transpose();
      const double w = snap.inv_denominator(p, q);
      for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = a + 1; b < m; ++b) {
          const double v = std::abs(diff[a] - diff[b]) * w;
          if (v > u(a, b)) u(a, b) = v;
        }
      }
    }
  }
  Eigen::MatrixXd bonus(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    bonus(a, a) = 0.0;
    for (Eigen::Index b = a + 1; b < m; ++b) bonus(a, b) = bonus(b, a) = bonus_pairwise(u(a, b), beta);
  }
  return bonus;
}

/// Single-action bonus min(1, beta_rf * U_RF) for every action.
inline Eigen::VectorXd rf_bonus_row(const FiniteSnapshot& snap, const Eigen::MatrixXd& member_rows,
                                    double beta_rf) {
  const Eigen::Index m = member_rows.cols();
  Eigen::VectorXd u = Eigen::VectorXd::Zero(m);
  const auto n = static_cast<Eigen::Index>(snap.members.size());
  for (Eigen::Index p = 0; p < n; ++p) {
    const auto rp = member_rows.row(static_cast<Eigen::Index>(snap.members[static_cast<std::size_t>(p)]));
    for (Eigen::Index q = p + 1; q < n; ++q) {
      const auto rq =
          member_rows.row(static_cast<Eigen::Index>(snap.members[static_cast<std::size_t>(q)]));
      const double w = snap.inv_denominator(p, q);
      for (Eigen::Index a = 0; a < m; ++a) u[a] = std::max(u[a], std::abs(rp[a] - rq[a]) * w);
    }
  }
  return (beta_rf * u).cwiseMin(1.0);
}

/// Reward rows of every member at x (members x m).
inline Eigen::MatrixXd member_rows(const FiniteRewardClass& cls, const Eigen::VectorXd& x,
                                   const Eigen::MatrixXd& actions) {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(cls.size()), actions.cols());
  for (std::size_t j = 0; j < cls.size(); ++j) {
    rows.row(static_cast<Eigen::Index>(j)) = cls.members[j].row(x, actions).transpose();
  }
  return rows;
}

}  // namespace fdrlhf
