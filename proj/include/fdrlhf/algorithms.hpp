#pragma once

// Online learners as round-by-round state machines over an Environment:
// optimism (linear or finite-class bonus), derivative-based exploration,
// greedy, uniform, and optimism with absolute reward feedback.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fdrlhf/divergence.hpp"
#include "fdrlhf/env.hpp"
#include "fdrlhf/errors.hpp"
#include "fdrlhf/policy.hpp"
#include "fdrlhf/reward.hpp"
#include "fdrlhf/uncertainty.hpp"
#include "fdrlhf/value.hpp"

namespace fdrlhf {

enum class Algo { Optimism, Derivative, Greedy, Uniform, OptimismRf };
enum class BonusBackend { Linear, EluderFinite };

inline std::string to_string(Algo a) {
  switch (a) {
    case Algo::Optimism: return "optimism";
    case Algo::Derivative: return "derivative";
    case Algo::Greedy: return "greedy";
    case Algo::Uniform: return "uniform";
    case Algo::OptimismRf: return "optimism_rf";
  }
  return "";
}

inline Algo parse_algo(const std::string& s) {
  if (s == "optimism") return Algo::Optimism;
  if (s == "derivative") return Algo::Derivative;
  if (s == "greedy") return Algo::Greedy;
  if (s == "uniform") return Algo::Uniform;
  if (s == "optimism_rf") return Algo::OptimismRf;
  throw ConfigError("unknown algorithm '" + s + "'");
}

inline std::string to_string(BonusBackend b) {
  return b == BonusBackend::Linear ? "linear" : "eluder_finite";
}

inline BonusBackend parse_backend(const std::string& s) {
  if (s == "linear") return BonusBackend::Linear;
  if (s == "eluder_finite") return BonusBackend::EluderFinite;
  throw ConfigError("unknown bonus backend '" + s + "'");
}

struct RunnerConfig {
  Algo algo = Algo::Optimism;
  std::string divergence = "reverse_kl";
  double eta = 1.0;
  std::size_t horizon = 100;
  double beta = 0.1;  // linear-backend optimism level
  BonusBackend backend = BonusBackend::Linear;
  double xi = 1.0;
  double delta = 0.1;
  double mle_reg = 1e-6;
  double mle_tol = 1e-9;
  std::size_t class_size = 20;          // finite backend
  std::size_t eval_pool_size = 256;     // 0 disables the pool column
  std::size_t ref_feature_samples = 10000;
  std::uint64_t seed = 0;

  void validate() const {
    if (horizon < 1) throw ConfigError("horizon must be at least 1");
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be positive");
    if (!(beta >= 0.0)) throw ConfigError("beta must be non-negative");
    if (!(xi > 0.0)) throw ConfigError("xi must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (!(mle_reg >= 0.0)) throw ConfigError("mle_reg must be non-negative");
    if (backend == BonusBackend::EluderFinite && class_size < 1) {
      throw ConfigError("finite backend needs a non-empty class");
    }
    registry_get(divergence);
  }
};

struct StepRecord {
  std::size_t t = 0;
  Eigen::VectorXd x;
  Eigen::Index action_i = 0;
  Eigen::Index action_j = -1;  // -1 for single-action feedback
  int label = -1;              // -1 for absolute feedback
  int branch = -1;             // derivative: 0 = pi' pair, 1 = (pi+, pi-) pair
  double reward_observed = std::numeric_limits<double>::quiet_NaN();
  double step_subopt_sampled = 0.0;
  double step_subopt_pool = std::numeric_limits<double>::quiet_NaN();
  double cum_regret = 0.0;
  double lambda_residual = 0.0;
  double mle_grad_norm = std::numeric_limits<double>::quiet_NaN();
  bool optimism_violation = false;
  bool degenerate = false;
};

/// What the sampler saw in one round; `rng_before` is a copy of the policy
/// stream just before the actions were drawn, for replay.
struct SamplingEvent {
  std::size_t t = 0;
  Eigen::VectorXd x;
  Eigen::VectorXd first_row;
  Eigen::VectorXd second_row;
  Rng rng_before;
  Eigen::Index first = 0;
  Eigen::Index second = 0;
};

using SamplingObserver = std::function<void(const SamplingEvent&)>;

namespace detail {

constexpr std::uint64_t kClassStream = 7;
constexpr std::uint64_t kRefFeatureStream = 8;

/// Fixed evaluation pool with the optimal value of every context.
struct EvalPool {
  std::vector<Eigen::VectorXd> x;
  std::vector<Eigen::VectorXd> ref;
  std::vector<Eigen::VectorXd> truth;
  std::vector<double> best_value;

  bool empty() const noexcept { return x.empty(); }
};

inline EvalPool make_eval_pool(const Environment& env, const FDivergence& spec, double eta,
                               std::size_t size, std::uint64_t seed) {
  EvalPool pool;
  Rng rng = make_stream(seed, Stream::Eval);
  for (std::size_t c = 0; c < size; ++c) {
    pool.x.push_back(sample_context(env, rng));
    pool.ref.push_back(env.reference_row(pool.x.back()));
    pool.truth.push_back(env.true_rewards(pool.x.back()));
    const DiscretePolicy best = optimal_policy_row(spec, pool.ref.back(), pool.truth.back(), eta);
    pool.best_value.push_back(value_at_context(best.probs, pool.truth.back(), pool.ref.back(), spec, eta));
  }
  return pool;
}

/// E_x [sum_a pi0(a|x) phi(x, a)] by Monte Carlo.
inline Eigen::VectorXd mean_ref_feature(const Environment& env, std::size_t samples,
                                        std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(kRefFeatureStream)};
  Rng rng(seq);
  const double scale = env.truth.scale();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(env.k * env.k);
  for (std::size_t s = 0; s < samples; ++s) {
    const Eigen::VectorXd x = sample_context(env, rng);
    const Eigen::VectorXd ref = env.reference_row(x);
    const Eigen::VectorXd abar = env.actions * ref;
    acc += LinearRewardModel::feature(x, abar, scale);
  }
  return samples == 0 ? acc : Eigen::VectorXd(acc / static_cast<double>(samples));
}

inline FiniteRewardClass runner_class(const Environment& env, std::size_t size, std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(kClassStream)};
  Rng rng(seq);
  return make_finite_class(env, size, rng);
}

/// Upper bound on ||theta|| for W in [0,1]^{k x k}.
inline double theta_bound(const Environment& env) { return static_cast<double>(env.k); }

/// Shared per-run machinery: streams, evaluation pool, logging.
class RunState {
 public:
  RunState(const Environment& env, const RunnerConfig& cfg)
      : env_(env),
        cfg_(cfg),
        spec_(registry_get(cfg.divergence)),
        context_rng_(make_stream(cfg.seed, Stream::Context)),
        preference_rng_(make_stream(cfg.seed, Stream::Preference)),
        policy_rng_(make_stream(cfg.seed, Stream::Policy)),
        noise_rng_(make_stream(cfg.seed, Stream::Noise)) {
    cfg_.validate();
    if (cfg_.eval_pool_size > 0) {
      pool_ = make_eval_pool(env_, spec_, cfg_.eta, cfg_.eval_pool_size, cfg_.seed);
    }
    records_.reserve(cfg_.horizon);
  }

  const Environment& env() const noexcept { return env_; }
  const RunnerConfig& cfg() const noexcept { return cfg_; }
  const FDivergence& spec() const noexcept { return spec_; }
  Rng& context_rng() noexcept { return context_rng_; }
  Rng& preference_rng() noexcept { return preference_rng_; }
  Rng& policy_rng() noexcept { return policy_rng_; }
  Rng& noise_rng() noexcept { return noise_rng_; }

  Eigen::VectorXd next_context() { return sample_context(env_, context_rng_); }

  /// Optimal policy row for a (possibly estimated) reward row at x.
  OptimalRow solve(const Eigen::VectorXd& ref, const Eigen::VectorXd& reward_row) const {
    return solve_optimal_row(spec_, ref, reward_row, cfg_.eta);
  }

  /// Fills the suboptimality columns for the policy in force at round t.
  /// `policy_at` maps (x, ref row) to the policy row at x.
  template <class PolicyAt>
  void score(StepRecord& rec, const Eigen::VectorXd& sampled_row, PolicyAt&& policy_at) {
    rec.step_subopt_sampled =
        suboptimality(sampled_row, env_.true_rewards(rec.x), env_.reference_row(rec.x), spec_, cfg_.eta);
    if (!pool_.empty()) {
      double acc = 0.0;
      for (std::size_t c = 0; c < pool_.x.size(); ++c) {
        const Eigen::VectorXd row = policy_at(pool_.x[c], pool_.ref[c]);
        const double gap =
            pool_.best_value[c] - value_at_context(row, pool_.truth[c], pool_.ref[c], spec_, cfg_.eta);
        if (gap < -1e-9) throw NumericalError("negative pool suboptimality");
        acc += gap;
      }
      rec.step_subopt_pool = acc / static_cast<double>(pool_.x.size());
    }
    cum_ += rec.step_subopt_sampled;
    rec.cum_regret = cum_;
  }

  void push(StepRecord rec) { records_.push_back(std::move(rec)); }
  std::vector<StepRecord> take() { return std::move(records_); }

 private:
  const Environment& env_;
  RunnerConfig cfg_;
  FDivergence spec_;
  Rng context_rng_, preference_rng_, policy_rng_, noise_rng_;
  EvalPool pool_;
  std::vector<StepRecord> records_;
  double cum_ = 0.0;
};

/// Published policy of the linear learners: pi0 before any data, otherwise
/// the optimum of r_theta(x, a) + beta ||phi(x, a) - phi_ref||_{Sigma^{-1}}.
struct LinearPublished {
  bool reference = true;
  LinearRewardModel model;
  std::shared_ptr<const GramState> gram;
  double beta = 0.0;

  Eigen::VectorXd reward_row(const Environment& env, const Eigen::VectorXd& x) const {
    Eigen::VectorXd r = model.row(x, env.actions);
    if (gram && beta > 0.0) r += linear_bonus_row(*gram, x, env.actions, model.scale(), beta);
    return r;
  }

  OptimalRow at(const RunState& s, const Eigen::VectorXd& x, const Eigen::VectorXd& ref) const {
    if (reference) return {{ref}, {}};
    return s.solve(ref, reward_row(s.env(), x));
  }
};

/// Incremental weighted logistic design with warm-started refits.
class PreferenceLearner {
 public:
  PreferenceLearner(const Environment& env, double reg, double tol)
      : scale_(env.truth.scale()),
        reg_(reg),
        tol_(tol),
        theta_(Eigen::VectorXd::Zero(env.k * env.k)),
        k_(env.k) {
    design_.dphi.resize(0, env.k * env.k);
  }

  void add(const Environment& env, const Eigen::VectorXd& x, Eigen::Index i, Eigen::Index j, int y,
           double weight_raw) {
    const Eigen::Index n = design_.dphi.rows();
    design_.dphi.conservativeResize(n + 1, Eigen::NoChange);
    design_.sign.conservativeResize(n + 1);
    design_.weight.conservativeResize(n + 1);
    raw_.conservativeResize(n + 1);
    design_.dphi.row(n) = (LinearRewardModel::feature(x, env.actions.col(i), scale_) -
                           LinearRewardModel::feature(x, env.actions.col(j), scale_))
                              .transpose();
    design_.sign[n] = y == 0 ? 1.0 : -1.0;
    raw_[n] = weight_raw;
  }

  /// Refit with weights raw / mean(raw).
  LogisticFit refit() {
    design_.weight = raw_ / raw_.mean();
    LogisticFit fit = fit_logistic(design_, reg_, theta_, tol_);
    theta_ = fit.theta;
    return fit;
  }

  LinearRewardModel model() const { return LinearRewardModel::from_theta(theta_, k_, scale_); }
  Eigen::VectorXd last_dphi() const { return design_.dphi.bottomRows(1).transpose(); }

 private:
  LogisticDesign design_;
  Eigen::VectorXd raw_;
  double scale_, reg_, tol_;
  Eigen::VectorXd theta_;
  Eigen::Index k_;
};

inline void attach_round(std::size_t t, const std::exception& e) {
  throw Error("round " + std::to_string(t) + ": " + e.what());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Optimistic preference learner, linear backend (also greedy with beta = 0 and the uniform
// baseline, which share the estimator).

namespace detail {

enum class LinearMode { Optimism, Uniform };

inline std::vector<StepRecord> run_linear_preference(const Environment& env, const RunnerConfig& cfg,
                                                     double beta, LinearMode mode,
                                                     const SamplingObserver& observer) {
  RunState s(env, cfg);
  const double ridge = cfg.xi / theta_bound(env);
  const Eigen::VectorXd phi_ref =
      beta > 0.0 ? mean_ref_feature(env, cfg.ref_feature_samples, cfg.seed)
                 : Eigen::VectorXd::Zero(env.k * env.k);
  GramState gram(env.k * env.k, ridge, phi_ref);
  PreferenceLearner learner(env, cfg.mle_reg, cfg.mle_tol);
  const Eigen::Index m = env.num_actions();
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));

  LinearPublished current, previous;  // pi_t and pi_{t-1}; both pi0 at t = 1
  for (std::size_t t = 1; t <= cfg.horizon; ++t) {
    try {
      StepRecord rec;
      rec.t = t;
      rec.x = s.next_context();
      const Eigen::VectorXd ref = env.reference_row(rec.x);
      const OptimalRow now = current.at(s, rec.x, ref);
      rec.lambda_residual = now.lambda.residual;

      SamplingEvent ev;
      if (mode == LinearMode::Optimism) {
        ev.first_row = now.policy.probs;
        ev.second_row = previous.at(s, rec.x, ref).policy.probs;
      } else {
        ev.first_row = uniform;
        ev.second_row = uniform;
      }
      if (observer) {
        ev.t = t;
        ev.x = rec.x;
        ev.rng_before = s.policy_rng();
      }
      rec.action_i = sample_categorical(ev.first_row, s.policy_rng());
      rec.action_j = sample_categorical(ev.second_row, s.policy_rng());
      if (observer) {
        ev.first = rec.action_i;
        ev.second = rec.action_j;
        observer(ev);
      }
      rec.label = preference_oracle(env, rec.x, rec.action_i, rec.action_j, s.preference_rng());
      s.score(rec, now.policy.probs, [&](const Eigen::VectorXd& x, const Eigen::VectorXd& r0) {
        return current.at(s, x, r0).policy.probs;
      });

      learner.add(env, rec.x, rec.action_i, rec.action_j, rec.label, 1.0);
      const LogisticFit fit = learner.refit();
      rec.mle_grad_norm = fit.grad_norm;
      gram.add(learner.last_dphi());

      previous = std::move(current);
      current = LinearPublished{false, learner.model(),
                                beta > 0.0 ? std::make_shared<const GramState>(gram) : nullptr, beta};
      s.push(std::move(rec));
    } catch (const Error& e) {
      attach_round(t, e);
    }
  }
  return s.take();
}

/// pi_{s+1} = optimum of r_center_s + E_{a' ~ pi_s} b_s(., ., a'), pi_1 = pi0.
class FiniteChain {
 public:
  FiniteChain(const FiniteRewardClass& cls, double beta) : cls_(cls), beta_(beta) {}

  void publish(FiniteSnapshot snap) { snaps_.push_back(std::move(snap)); }
  std::size_t published() const noexcept { return snaps_.size(); }
  const FiniteSnapshot& snapshot(std::size_t s) const { return snaps_.at(s); }

  /// Optimistic reward row built from snapshot s at x given pi_s(x).
  Eigen::VectorXd optimistic_row(std::size_t s, const Eigen::MatrixXd& rows,
                                 const Eigen::VectorXd& pi_s) const {
    const FiniteSnapshot& snap = snaps_[s];
    Eigen::VectorXd r = rows.row(static_cast<Eigen::Index>(snap.center)).transpose();
    if (beta_ > 0.0 && snap.members.size() > 1) r += pairwise_bonus_matrix(snap, rows, beta_) * pi_s;
    return r;
  }

  /// (pi_{upto}, pi_{upto - 1}) at x, with pi_0 read as pi_1 = reference.
  /// Returns the rows and the residual of the last lambda solve.
  struct Pair {
    OptimalRow current;
    Eigen::VectorXd previous;
  };

  Pair rows_at(const RunState& s, const Eigen::VectorXd& x, const Eigen::VectorXd& ref,
               std::size_t upto) const {
    const Eigen::MatrixXd rows = member_rows(cls_, x, s.env().actions);
    OptimalRow cur{{ref}, {}};
    Eigen::VectorXd prev = ref;
    for (std::size_t k = 0; k + 1 < upto; ++k) {
      prev = cur.policy.probs;
      cur = s.solve(ref, optimistic_row(k, rows, cur.policy.probs));
    }
    return {std::move(cur), std::move(prev)};
  }

 private:
  const FiniteRewardClass& cls_;
  double beta_;
  std::vector<FiniteSnapshot> snaps_;
};

inline std::vector<StepRecord> run_finite_preference(const Environment& env, const RunnerConfig& cfg,
                                                     bool optimistic, const SamplingObserver& observer) {
  RunState s(env, cfg);
  const FiniteRewardClass cls = runner_class(env, cfg.class_size, cfg.seed);
  const double beta_sq = beta_sq_pairwise(cls.size(), cfg.horizon, cfg.delta);
  const double beta = optimistic ? std::sqrt(beta_sq) : 0.0;
  PairwiseTracker tracker(cls.size());
  FiniteChain chain(cls, beta);
  const Eigen::Index n = static_cast<Eigen::Index>(cls.size());

  for (std::size_t t = 1; t <= cfg.horizon; ++t) {
    try {
      StepRecord rec;
      rec.t = t;
      rec.x = s.next_context();
      const Eigen::VectorXd ref = env.reference_row(rec.x);
      auto pair = chain.rows_at(s, rec.x, ref, t);
      rec.lambda_residual = pair.current.lambda.residual;

      SamplingEvent ev;
      if (observer) {
        ev.t = t;
        ev.x = rec.x;
        ev.first_row = pair.current.policy.probs;
        ev.second_row = pair.previous;
        ev.rng_before = s.policy_rng();
      }
      rec.action_i = sample_categorical(pair.current.policy.probs, s.policy_rng());
      rec.action_j = sample_categorical(pair.previous, s.policy_rng());
      if (observer) {
        ev.first = rec.action_i;
        ev.second = rec.action_j;
        observer(ev);
      }
      rec.label = preference_oracle(env, rec.x, rec.action_i, rec.action_j, s.preference_rng());
      s.score(rec, pair.current.policy.probs, [&](const Eigen::VectorXd& x, const Eigen::VectorXd& r0) {
        return chain.rows_at(s, x, r0, t).current.policy.probs;
      });

      const Eigen::MatrixXd rows = member_rows(cls, rec.x, env.actions);
      Eigen::VectorXd logits = rows.col(rec.action_i) - rows.col(rec.action_j);
      Eigen::VectorXd ll(n);
      for (Eigen::Index j = 0; j < n; ++j) ll[j] = log_sigmoid(rec.label == 0 ? logits[j] : -logits[j]);
      tracker.add(logits, ll);
      chain.publish(FiniteSnapshot::take(tracker, cfg.xi, beta_sq));

      // Optimism event at the observed query, with the bonus of the new set.
      const FiniteSnapshot& snap = chain.snapshot(chain.published() - 1);
      double bonus = 0.0;
      if (optimistic && snap.members.size() > 1) {
        bonus = pairwise_bonus_matrix(snap, rows, beta)(rec.action_i, rec.action_j);
      }
      const double truth_gap = env.truth(rec.x, env.actions.col(rec.action_i)) -
                               env.truth(rec.x, env.actions.col(rec.action_j));
      rec.optimism_violation = logits[static_cast<Eigen::Index>(snap.center)] + bonus < truth_gap;
      s.push(std::move(rec));
    } catch (const Error& e) {
      attach_round(t, e);
    }
  }
  return s.take();
}

}  // namespace detail

inline std::vector<StepRecord> run_optimism(const Environment& env, const RunnerConfig& cfg,
                                            const SamplingObserver& observer = {}) {
  if (cfg.backend == BonusBackend::EluderFinite) {
    return detail::run_finite_preference(env, cfg, true, observer);
  }
  return detail::run_linear_preference(env, cfg, cfg.beta, detail::LinearMode::Optimism, observer);
}

inline std::vector<StepRecord> run_greedy(const Environment& env, const RunnerConfig& cfg,
                                          const SamplingObserver& observer = {}) {
  if (cfg.backend == BonusBackend::EluderFinite) {
    return detail::run_finite_preference(env, cfg, false, observer);
  }
  return detail::run_linear_preference(env, cfg, 0.0, detail::LinearMode::Optimism, observer);
}

/// Uniform pairs; the evaluated policy is the optimum of the current MLE.
inline std::vector<StepRecord> run_uniform(const Environment& env, const RunnerConfig& cfg,
                                           const SamplingObserver& observer = {}) {
  return detail::run_linear_preference(env, cfg, 0.0, detail::LinearMode::Uniform, observer);
}

// ---------------------------------------------------------------------------
// Derivative-based exploration

inline std::vector<StepRecord> run_derivative(const Environment& env, const RunnerConfig& cfg,
                                              const SamplingObserver& observer = {}) {
  detail::RunState s(env, cfg);
  detail::PreferenceLearner learner(env, cfg.mle_reg, cfg.mle_tol);
  LinearRewardModel theta = LinearRewardModel::zero(env.k, env.truth.scale());

  for (std::size_t t = 1; t <= cfg.horizon; ++t) {
    try {
      StepRecord rec;
      rec.t = t;
      rec.x = s.next_context();
      const Eigen::VectorXd ref = env.reference_row(rec.x);
      const Eigen::VectorXd r_theta = theta.row(rec.x, env.actions);
      const ExplorationBundle bundle = exploration_bundle(s.spec(), ref, r_theta, cfg.eta);
      const auto [plus, minus] = plus_minus_rows(bundle, r_theta);
      rec.degenerate = bundle.degenerate;

      SamplingEvent ev;
      if (observer) {
        ev.t = t;
        ev.x = rec.x;
        ev.rng_before = s.policy_rng();
      }
      const ActionPair pair = sample_action_pair(bundle, bundle.pi_prime, plus, minus, s.policy_rng());
      rec.action_i = pair.first;
      rec.action_j = pair.second;
      rec.branch = pair.tilted ? 1 : 0;
      if (observer) {
        ev.first_row = pair.tilted ? plus.probs : bundle.pi_prime.probs;
        ev.second_row = pair.tilted ? minus.probs : bundle.pi_prime.probs;
        ev.first = pair.first;
        ev.second = pair.second;
        observer(ev);
      }
      rec.label = preference_oracle(env, rec.x, rec.action_i, rec.action_j, s.preference_rng());

      const OptimalRow now = s.solve(ref, r_theta);
      rec.lambda_residual = now.lambda.residual;
      s.score(rec, now.policy.probs, [&](const Eigen::VectorXd& x, const Eigen::VectorXd& r0) {
        return s.solve(r0, theta.row(x, env.actions)).policy.probs;
      });

      if (!std::isfinite(bundle.omega_raw) || !(bundle.omega_raw > 0.0)) {
        throw NumericalError("importance weight is not a positive finite number");
      }
      learner.add(env, rec.x, rec.action_i, rec.action_j, rec.label, bundle.omega_raw);
      const LogisticFit fit = learner.refit();
      rec.mle_grad_norm = fit.grad_norm;
      theta = learner.model();
      s.push(std::move(rec));
    } catch (const Error& e) {
      detail::attach_round(t, e);
    }
  }
  return s.take();
}

// ---------------------------------------------------------------------------
// Optimism with absolute reward feedback

inline std::vector<StepRecord> run_optimism_rf(const Environment& env, const RunnerConfig& cfg,
                                               const SamplingObserver& observer = {}) {
  detail::RunState s(env, cfg);
  const Eigen::Index d = env.k * env.k;
  const double scale = env.truth.scale();
  const bool finite = cfg.backend == BonusBackend::EluderFinite;

  // Finite backend state.
  std::optional<FiniteRewardClass> cls;
  std::optional<PairwiseTracker> tracker;
  double beta_rf = 0.0;
  std::optional<FiniteSnapshot> snap;
  // Linear backend state.
  const double ridge = cfg.xi / detail::theta_bound(env);
  RidgeAccumulator ridge_acc(d);
  GramState gram(d, ridge, Eigen::VectorXd::Zero(d));
  detail::LinearPublished linear_pub;

  if (finite) {
    cls = detail::runner_class(env, cfg.class_size, cfg.seed);
    tracker.emplace(cls->size());
    beta_rf = beta_reward_feedback(cls->size(), cfg.horizon, cfg.delta);
  }

  auto policy_at = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& ref) -> OptimalRow {
    if (finite) {
      if (!snap) return {{ref}, {}};
      const Eigen::MatrixXd rows = member_rows(*cls, x, env.actions);
      Eigen::VectorXd r = rows.row(static_cast<Eigen::Index>(snap->center)).transpose();
      if (snap->members.size() > 1) r += rf_bonus_row(*snap, rows, beta_rf);
      return s.solve(ref, r);
    }
    return linear_pub.at(s, x, ref);
  };

  for (std::size_t t = 1; t <= cfg.horizon; ++t) {
    try {
      StepRecord rec;
      rec.t = t;
      rec.x = s.next_context();
      const Eigen::VectorXd ref = env.reference_row(rec.x);
      const OptimalRow now = policy_at(rec.x, ref);
      rec.lambda_residual = now.lambda.residual;

      SamplingEvent ev;
      if (observer) {
        ev.t = t;
        ev.x = rec.x;
        ev.first_row = now.policy.probs;
        ev.rng_before = s.policy_rng();
      }
      rec.action_i = sample_categorical(now.policy.probs, s.policy_rng());
      if (observer) {
        ev.first = rec.action_i;
        ev.second = -1;
        observer(ev);
      }
      rec.reward_observed = reward_oracle(env, rec.x, rec.action_i, s.noise_rng());
      s.score(rec, now.policy.probs, [&](const Eigen::VectorXd& x, const Eigen::VectorXd& r0) {
        return policy_at(x, r0).policy.probs;
      });

      if (finite) {
        const Eigen::MatrixXd rows = member_rows(*cls, rec.x, env.actions);
        const Eigen::VectorXd g = rows.col(rec.action_i);
        const Eigen::VectorXd neg_sq = -(g.array() - rec.reward_observed).square().matrix();
        tracker->add(g, neg_sq);
        snap = FiniteSnapshot::take(*tracker, cfg.xi, beta_rf * beta_rf);
      } else {
        const Eigen::VectorXd phi = LinearRewardModel::feature(rec.x, env.actions.col(rec.action_i), scale);
        ridge_acc.add(phi, rec.reward_observed);
        gram.add(phi);
        linear_pub = detail::LinearPublished{
            false, LinearRewardModel::from_theta(ridge_acc.solve(ridge), env.k, scale),
            cfg.beta > 0.0 ? std::make_shared<const GramState>(gram) : nullptr, cfg.beta};
      }
      s.push(std::move(rec));
    } catch (const Error& e) {
      detail::attach_round(t, e);
    }
  }
  return s.take();
}

/// Dispatch on cfg.algo.
inline std::vector<StepRecord> run_algorithm(const Environment& env, const RunnerConfig& cfg,
                                             const SamplingObserver& observer = {}) {
  switch (cfg.algo) {
    case Algo::Optimism: return run_optimism(env, cfg, observer);
    case Algo::Derivative: return run_derivative(env, cfg, observer);
    case Algo::Greedy: return run_greedy(env, cfg, observer);
    case Algo::Uniform: return run_uniform(env, cfg, observer);
    case Algo::OptimismRf: return run_optimism_rf(env, cfg, observer);
  }
  throw ConfigError("unhandled algorithm");
}

}  // namespace fdrlhf
