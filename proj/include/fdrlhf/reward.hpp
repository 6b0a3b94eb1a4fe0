#pragma once

// Linear Bradley-Terry reward models r(x, a) = scale * x^T W a, with
// theta = vec(W) flattened row-major so that
//     r(x, a) = theta^T phi(x, a),   phi(x, a)[i k + j] = scale * x_i a_j.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "fdrlhf/errors.hpp"

namespace fdrlhf {

class LinearRewardModel {
 public:
  LinearRewardModel() = default;
  LinearRewardModel(Eigen::MatrixXd w, double scale) : w_(std::move(w)), scale_(scale) {
    if (w_.rows() != w_.cols()) throw ShapeError("reward parameter matrix must be square");
    if (!(scale_ > 0.0)) throw DomainError("reward scale must be positive");
  }

  static LinearRewardModel zero(Eigen::Index k, double scale) {
    return {Eigen::MatrixXd::Zero(k, k), scale};
  }

  static LinearRewardModel from_theta(const Eigen::VectorXd& theta, Eigen::Index k, double scale) {
    if (theta.size() != k * k) throw ShapeError("theta has the wrong dimension");
    Eigen::MatrixXd w(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < k; ++j) w(i, j) = theta[i * k + j];
    return {std::move(w), scale};
  }

  Eigen::Index k() const noexcept { return w_.rows(); }
  Eigen::Index dim() const noexcept { return w_.size(); }
  double scale() const noexcept { return scale_; }
  const Eigen::MatrixXd& w() const noexcept { return w_; }

  Eigen::VectorXd theta() const {
    Eigen::VectorXd t(dim());
    for (Eigen::Index i = 0; i < k(); ++i)
      for (Eigen::Index j = 0; j < k(); ++j) t[i * k() + j] = w_(i, j);
    return t;
  }

  /// Unchecked scale * x^T W a.
  double operator()(const Eigen::VectorXd& x, const Eigen::VectorXd& a) const {
    return scale_ * x.dot(w_ * a);
  }

  /// Rewards of every action (columns of `actions`) at context x.
  Eigen::VectorXd row(const Eigen::VectorXd& x, const Eigen::MatrixXd& actions) const {
    return scale_ * (actions.transpose() * (w_.transpose() * x));
  }

  /// grad_theta r(x, a).
  Eigen::VectorXd feature(const Eigen::VectorXd& x, const Eigen::VectorXd& a) const {
    return feature(x, a, scale_);
  }

  static Eigen::VectorXd feature(const Eigen::VectorXd& x, const Eigen::VectorXd& a, double scale) {
    const Eigen::Index k = x.size();
    Eigen::VectorXd phi(k * a.size());
    for (Eigen::Index i = 0; i < k; ++i) phi.segment(i * a.size(), a.size()) = (scale * x[i]) * a;
    return phi;
  }

 private:
  Eigen::MatrixXd w_;
  double scale_ = 1.0;
};

/// Checked evaluation of a model used as the true reward: dimensions must
/// match and the value must lie in [0, 1] up to 1e-9.
inline double reward_eval(const LinearRewardModel& model, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& a) {
  if (x.size() != model.k() || a.size() != model.k()) {
    throw ShapeError("reward_eval: context/action dimension " + std::to_string(x.size()) + "/" +
                     std::to_string(a.size()) + " does not match k=" + std::to_string(model.k()));
  }
  const double r = model(x, a);
  if (r < -1e-9 || r > 1.0 + 1e-9) {
    throw DomainError("reward_eval: true reward " + std::to_string(r) + " outside [0, 1]");
  }
  return r;
}

struct FiniteRewardClass {
  std::vector<LinearRewardModel> members;
  std::size_t truth_index = 0;

  std::size_t size() const noexcept { return members.size(); }
};

// y = 0 encodes "first action preferred".
struct PreferenceRecord {
  Eigen::VectorXd x;
  Eigen::Index first = 0;
  Eigen::Index second = 0;
  int y = 0;
  double weight = 1.0;

  bool first_preferred() const noexcept { return y == 0; }
};

struct PreferenceDataset {
  Eigen::MatrixXd actions;  // k x m, one action per column
  std::vector<PreferenceRecord> records;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
};

inline double log_sigmoid(double z) {
  // log sigma(z) = -log(1 + e^{-z}), stable in both tails.
  return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Weighted Bradley-Terry log-likelihood sum_i w_i log P(label_i).
inline double log_likelihood(const LinearRewardModel& model, const PreferenceDataset& data) {
  double ll = 0.0;
  for (const auto& rec : data.records) {
    const double z = model(rec.x, data.actions.col(rec.first)) - model(rec.x, data.actions.col(rec.second));
    ll += rec.weight * log_sigmoid(rec.first_preferred() ? z : -z);
  }
  return ll;
}

/// Design of a pairwise logistic problem: one row of phi(x, a1) - phi(x, a2)
/// per record, the preference sign and the weight.
struct LogisticDesign {
  Eigen::MatrixXd dphi;   // n x d
  Eigen::VectorXd sign;   // +1 if the first action won, -1 otherwise
  Eigen::VectorXd weight;

  Eigen::Index rows() const noexcept { return dphi.rows(); }
};

inline LogisticDesign make_design(const PreferenceDataset& data, double scale) {
  if (data.empty()) throw ShapeError("preference dataset is empty");
  const Eigen::Index k = data.actions.rows();
  const Eigen::Index n = static_cast<Eigen::Index>(data.size());
  LogisticDesign d{Eigen::MatrixXd(n, k * k), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& rec = data.records[static_cast<std::size_t>(i)];
    if (rec.x.size() != k) throw ShapeError("context dimension does not match the action set");
    d.dphi.row(i) = (LinearRewardModel::feature(rec.x, data.actions.col(rec.first), scale) -
                     LinearRewardModel::feature(rec.x, data.actions.col(rec.second), scale))
                        .transpose();
    d.sign[i] = rec.first_preferred() ? 1.0 : -1.0;
    d.weight[i] = rec.weight;
  }
  return d;
}

struct LogisticObjective {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

/// L(theta) = (1/n) sum_i w_i log(1 + exp(-s_i dphi_i^T theta)) + reg ||theta||^2.
inline LogisticObjective logistic_objective(const LogisticDesign& d, const Eigen::VectorXd& theta,
                                            double reg) {
  const Eigen::Index n = d.rows();
  const Eigen::VectorXd z = d.dphi * theta;
  Eigen::VectorXd coeff(n);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sz = d.sign[i] * z[i];
    loss -= d.weight[i] * log_sigmoid(sz);
    coeff[i] = -d.weight[i] * d.sign[i] * sigmoid(-sz);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return {loss * inv_n + reg * theta.squaredNorm(),
          inv_n * (d.dphi.transpose() * coeff) + 2.0 * reg * theta};
}

struct LogisticFit {
  Eigen::VectorXd theta;
  double loss = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Full-batch Newton with Armijo backtracking on the (convex) weighted loss.
inline LogisticFit fit_logistic(const LogisticDesign& d, double reg, Eigen::VectorXd theta,
                                double tol, int max_iterations = 100) {
  const Eigen::Index n = d.rows();
  const Eigen::Index dim = d.dphi.cols();
  if (theta.size() != dim) throw ShapeError("initial theta has the wrong dimension");
  const double inv_n = 1.0 / static_cast<double>(n);

  LogisticObjective obj = logistic_objective(d, theta, reg);
  LogisticFit fit{theta, obj.loss, obj.grad.norm(), 0, false};
  Eigen::MatrixXd hess(dim, dim);
  Eigen::VectorXd curv(n);
  for (int it = 0; it < max_iterations; ++it) {
    if (fit.grad_norm <= tol) {
      fit.converged = true;
      break;
    }
    const Eigen::VectorXd z = d.dphi * theta;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = sigmoid(z[i]);
      curv[i] = d.weight[i] * s * (1.0 - s) * inv_n;
    }
    hess.setZero();
    hess.selfadjointView<Eigen::Lower>().rankUpdate(d.dphi.transpose() * curv.cwiseSqrt().asDiagonal());
    hess.diagonal().array() += 2.0 * reg;
    Eigen::VectorXd step = -hess.selfadjointView<Eigen::Lower>().ldlt().solve(obj.grad);
    double slope = obj.grad.dot(step);
    if (!step.allFinite() || !(slope < 0.0)) {
      step = -obj.grad;
      slope = -obj.grad.squaredNorm();
    }
    double t = 1.0;
    Eigen::VectorXd trial;
    LogisticObjective next;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      trial = theta + t * step;
      next = logistic_objective(d, trial, reg);
      if (next.loss <= obj.loss + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    fit.iterations = it + 1;
    if (!accepted) {
      // No representable decrease left; keep the iterate if it is at least
      // as stationary.
      if (next.grad.norm() < obj.grad.norm() && next.loss <= obj.loss) {
        theta = trial;
        obj = std::move(next);
      }
      fit.theta = theta;
      fit.loss = obj.loss;
      fit.grad_norm = obj.grad.norm();
      fit.converged = fit.grad_norm <= tol;
      return fit;
    }
    theta = std::move(trial);
    obj = std::move(next);
    fit.theta = theta;
    fit.loss = obj.loss;
    fit.grad_norm = obj.grad.norm();
  }
  fit.converged = fit.grad_norm <= tol;
  return fit;
}

struct MleResult {
  LinearRewardModel model;
  double loss = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Weighted Bradley-Terry maximum likelihood over the linear class, warm
/// started from `init`. Unit weights give the plain MLE.
inline MleResult mle_fit(const PreferenceDataset& data, double reg, const LinearRewardModel& init,
                         double tol = 1e-10) {
  if (data.empty()) throw ShapeError("mle_fit: dataset is empty");
  if (data.actions.rows() != init.k()) throw ShapeError("mle_fit: model/action dimension mismatch");
  const LogisticDesign design = make_design(data, init.scale());
  const LogisticFit fit = fit_logistic(design, reg, init.theta(), tol);
  return {LinearRewardModel::from_theta(fit.theta, init.k(), init.scale()), fit.loss,
          fit.grad_norm, fit.iterations, fit.converged};
}

struct FiniteMleResult {
  std::size_t index = 0;
  bool all_equal = false;
};

/// Arg-max of the weighted log-likelihood over a finite class; ties go to
/// the lowest index.
inline FiniteMleResult mle_fit_finite(const FiniteRewardClass& cls, const PreferenceDataset& data) {
  if (cls.members.empty()) throw ShapeError("mle_fit_finite: empty reward class");
  FiniteMleResult out;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> ll(cls.size());
  for (std::size_t j = 0; j < cls.size(); ++j) {
    ll[j] = log_likelihood(cls.members[j], data);
    if (ll[j] > best) {
      best = ll[j];
      out.index = j;
    }
  }
  out.all_equal = true;
  for (double v : ll) out.all_equal = out.all_equal && v == ll.front();
  return out;
}

/// Normal equations of ridge regression, accumulated one observation at a time.
class RidgeAccumulator {
 public:
  explicit RidgeAccumulator(Eigen::Index dim)
      : gram_(Eigen::MatrixXd::Zero(dim, dim)), moment_(Eigen::VectorXd::Zero(dim)) {}

  void add(const Eigen::VectorXd& phi, double target) {
    gram_.selfadjointView<Eigen::Lower>().rankUpdate(phi);
    moment_ += target * phi;
    ++count_;
  }

  std::size_t count() const noexcept { return count_; }

  /// Solves (Phi^T Phi + reg I) theta = Phi^T y. Throws SolverError when the
  /// system is singular.
  Eigen::VectorXd solve(double reg) const {
    Eigen::MatrixXd a = gram_.selfadjointView<Eigen::Lower>();
    a.diagonal().array() += reg;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    const Eigen::VectorXd diag = ldlt.vectorD();
    const double scale = std::max(a.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    if (ldlt.info() != Eigen::Success ||
        diag.minCoeff() <= 1e-13 * scale) {
      throw SolverError("least squares normal equations are singular", diag.minCoeff());
    }
    Eigen::VectorXd theta = ldlt.solve(moment_);
    const double residual = (a * theta - moment_).norm();
    if (!theta.allFinite() || residual > 1e-8 * std::max(1.0, moment_.norm())) {
      throw SolverError("least squares normal-equation residual too large", residual);
    }
    return theta;
  }

 private:
  Eigen::MatrixXd gram_;  // lower triangle
  Eigen::VectorXd moment_;
  std::size_t count_ = 0;
};

struct RewardObservation {
  Eigen::VectorXd x;
  Eigen::Index action = 0;
  double reward = 0.0;
};

/// Ridge least squares on phi(x, a); `k` and `scale` fix the model family.
inline LinearRewardModel least_squares_fit(const std::vector<RewardObservation>& data,
                                           const Eigen::MatrixXd& actions, double reg,
                                           double scale) {
  if (data.empty()) throw ShapeError("least_squares_fit: dataset is empty");
  const Eigen::Index k = actions.rows();
  RidgeAccumulator acc(k * k);
  for (const auto& obs : data) {
    if (obs.x.size() != k) throw ShapeError("least_squares_fit: context dimension mismatch");
    acc.add(LinearRewardModel::feature(obs.x, actions.col(obs.action), scale), obs.reward);
  }
  return LinearRewardModel::from_theta(acc.solve(reg), k, scale);
}

}  // namespace fdrlhf
