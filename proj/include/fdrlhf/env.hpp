#pragma once

// Synthetic contextual-bandit environment: uniform contexts on [0,1]^k, a
// fixed action set, a Bradley-Terry preference oracle and a noisy
// absolute-reward oracle.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>

#include "fdrlhf/errors.hpp"
#include "fdrlhf/policy.hpp"
#include "fdrlhf/reward.hpp"

namespace fdrlhf {

enum class Stream : std::uint64_t {
  Setup = 1,
  Context = 2,
  Preference = 3,
  Policy = 4,
  Noise = 5,
  Eval = 6,
};

/// Independent generator for one named stream of a run.
inline Rng make_stream(std::uint64_t seed, Stream tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag)};
  return Rng(seq);
}

struct Environment {
  Eigen::Index k = 0;
  Eigen::MatrixXd actions;  // k x m
  LinearRewardModel truth;
  // Reference policy row at a context; empty means uniform.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> ref_policy;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;

  Eigen::Index num_actions() const noexcept { return actions.cols(); }

  Eigen::VectorXd reference_row(const Eigen::VectorXd& x) const {
    if (!ref_policy) {
      return Eigen::VectorXd::Constant(num_actions(), 1.0 / static_cast<double>(num_actions()));
    }
    Eigen::VectorXd row = ref_policy(x);
    if (row.size() != num_actions() || !(row.array() > 0.0).all()) {
      throw DomainError("reference policy must be a full-support row over the action set");
    }
    return row;
  }

  /// True rewards of every action at x.
  Eigen::VectorXd true_rewards(const Eigen::VectorXd& x) const { return truth.row(x, actions); }
};

inline Eigen::MatrixXd uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = u(rng);
  return out;
}

/// Actions and W* uniform on the unit box. The default scale 1/k^2 keeps r*
/// inside [0, 1]; a non-positive `reward_scale` selects that default.
inline Environment make_environment(Eigen::Index k, Eigen::Index m, std::uint64_t seed,
                                    double noise_sigma = 0.1, double reward_scale = 0.0) {
  if (k < 1) throw ConfigError("k must be at least 1");
  if (m < 2) throw ConfigError("the action set needs at least two actions");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
  Rng rng = make_stream(seed, Stream::Setup);
  Environment env;
  env.k = k;
  const double scale = reward_scale > 0.0 ? reward_scale : 1.0 / static_cast<double>(k * k);
  env.truth = LinearRewardModel(uniform_matrix(rng, k, k), scale);
  env.actions = uniform_matrix(rng, k, m);
  env.noise_sigma = noise_sigma;
  env.seed = seed;
  return env;
}

inline Eigen::VectorXd sample_context(const Environment& env, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd x(env.k);
  for (auto& e : x) e = u(rng);
  return x;
}

/// y = 0 (first action preferred) with probability sigma(r*(x,a_i) - r*(x,a_j)).
inline int preference_oracle(const Environment& env, const Eigen::VectorXd& x, Eigen::Index i,
                             Eigen::Index j, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double z = env.truth(x, env.actions.col(i)) - env.truth(x, env.actions.col(j));
  return u(rng) < sigmoid(z) ? 0 : 1;
}

/// r*(x, a_i) + N(0, noise_sigma^2). Always consumes one normal draw.
inline double reward_oracle(const Environment& env, const Eigen::VectorXd& x, Eigen::Index i,
                            Rng& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  const double eps = noise(rng);
  return env.truth(x, env.actions.col(i)) + env.noise_sigma * eps;
}

/// Finite class of `size` linear models with W entries uniform on [0,1];
/// the environment's truth sits at a random index.
inline FiniteRewardClass make_finite_class(const Environment& env, std::size_t size, Rng& rng) {
  if (size == 0) throw ConfigError("finite reward class must be non-empty");
  FiniteRewardClass cls;
  std::uniform_int_distribution<std::size_t> pick(0, size - 1);
  cls.truth_index = pick(rng);
  for (std::size_t j = 0; j < size; ++j) {
    if (j == cls.truth_index) {
      cls.members.push_back(env.truth);
    } else {
      cls.members.emplace_back(uniform_matrix(rng, env.k, env.k), env.truth.scale());
    }
  }
  return cls;
}

}  // namespace fdrlhf
