#pragma once

// Sampled estimates of the divergence constants
//     C = max h'(y) / h(y),   M = max_x sum_a pi0(a|x) h'(y),
// with y = eta (r(x,a) - lambda_r(x)), over the convex hull of a reward class.
// The hull is explored with the vertices plus Dirichlet(1) mixtures, so both
// numbers are lower bounds of the true maxima.

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

#include "fdrlhf/divergence.hpp"
#include "fdrlhf/errors.hpp"
#include "fdrlhf/policy.hpp"

namespace fdrlhf {

struct ConstantEstimate {
  double c = 0.0;
  double m = 0.0;
};

struct ConstantOptions {
  std::size_t mixtures = 64;
  std::uint64_t seed = 0;
};

/// `tables` holds one (contexts x actions) reward table per class member;
/// `ref_rows` has the reference policy of each context in the same layout.
inline ConstantEstimate estimate_constants(const FDivergence& spec,
                                           const std::vector<Eigen::MatrixXd>& tables,
                                           const Eigen::MatrixXd& ref_rows, double eta,
                                           const ConstantOptions& opt = {}) {
  if (tables.empty()) throw ShapeError("reward class is empty");
  for (const auto& t : tables) {
    if (t.rows() != ref_rows.rows() || t.cols() != ref_rows.cols()) {
      throw ShapeError("reward table does not match the reference layout");
    }
  }
  const auto n = static_cast<Eigen::Index>(tables.size());
  std::vector<Eigen::VectorXd> weights;
  for (Eigen::Index j = 0; j < n; ++j) weights.push_back(Eigen::VectorXd::Unit(n, j));
  if (n > 1) {
    Rng rng(opt.seed);
    std::gamma_distribution<double> gamma(1.0, 1.0);
    for (std::size_t s = 0; s < opt.mixtures; ++s) {
      Eigen::VectorXd w(n);
      for (auto& e : w) e = gamma(rng);
      weights.push_back(w / w.sum());
    }
  }

  ConstantEstimate out{0.0, 0.0};
  Eigen::VectorXd row(ref_rows.cols());
  for (const auto& w : weights) {
    for (Eigen::Index x = 0; x < ref_rows.rows(); ++x) {
      row.setZero();
      for (Eigen::Index j = 0; j < n; ++j) row += w[j] * tables[static_cast<std::size_t>(j)].row(x).transpose();
      const Eigen::VectorXd ref = ref_rows.row(x).transpose();
      const bool flat = row.maxCoeff() == row.minCoeff();
      const double lambda = solve_lambda(spec, ref, row, eta).lambda;
      double m_sum = 0.0;
      for (Eigen::Index a = 0; a < row.size(); ++a) {
        const double y = flat ? spec.f_prime(1.0) : eta * (row[a] - lambda);
        const double hy = spec.h(y);
        const double hp = spec.h_prime_from_h(y, hy);
        out.c = std::max(out.c, hp / hy);
        m_sum += ref[a] * hp;
      }
      out.m = std::max(out.m, m_sum);
    }
  }
  return out;
}

inline double constant_C(const FDivergence& spec, const std::vector<Eigen::MatrixXd>& tables,
                         const Eigen::MatrixXd& ref_rows, double eta, const ConstantOptions& opt = {}) {
  return estimate_constants(spec, tables, ref_rows, eta, opt).c;
}

inline double constant_M(const FDivergence& spec, const std::vector<Eigen::MatrixXd>& tables,
                         const Eigen::MatrixXd& ref_rows, double eta, const ConstantOptions& opt = {}) {
  return estimate_constants(spec, tables, ref_rows, eta, opt).m;
}

}  // namespace fdrlhf
