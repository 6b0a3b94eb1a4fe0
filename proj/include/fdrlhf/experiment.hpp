#pragma once

// Experiment grid (algo x divergence x seed), CSV persistence and summaries.

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "fdrlhf/algorithms.hpp"

namespace fdrlhf {

struct ExperimentConfig {
  Eigen::Index k = 5;
  Eigen::Index m = 10;
  double eta = 1.0;
  std::size_t horizon = 2000;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<std::string> algos{"optimism", "derivative", "greedy", "uniform", "optimism_rf"};
  std::vector<std::string> divergences{"reverse_kl", "chi2_mixed_kl", "xlogx_minus_logx"};
  double beta = 0.1;
  double xi = 1.0;
  double delta = 0.1;
  double noise_sigma = 0.1;
  std::size_t eval_pool_size = 256;
  std::string output = "results";
  std::size_t workers = 1;
  std::string backend = "linear";
  double reward_scale = 0.0;  // <= 0 selects 1/k^2
  double mle_reg = 1e-6;
  std::size_t class_size = 20;

  void validate() const {
    if (k < 1) throw ConfigError("k must be at least 1");
    if (m < 2) throw ConfigError("m must be at least 2");
    if (seeds.empty()) throw ConfigError("seeds list is empty");
    if (algos.empty()) throw ConfigError("algos list is empty");
    if (divergences.empty()) throw ConfigError("divergences list is empty");
    if (workers < 1) throw ConfigError("workers must be at least 1");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
    for (const auto& a : algos) parse_algo(a);
    parse_backend(backend);
    for (const auto& d : divergences) runner("optimism", d, 0).validate();
  }

  RunnerConfig runner(const std::string& algo, const std::string& divergence, std::uint64_t seed) const {
    RunnerConfig r;
    r.algo = parse_algo(algo);
    r.divergence = divergence;
    r.eta = eta;
    r.horizon = horizon;
    r.beta = beta;
    r.backend = parse_backend(backend);
    r.xi = xi;
    r.delta = delta;
    r.mle_reg = mle_reg;
    r.class_size = class_size;
    r.eval_pool_size = eval_pool_size;
    r.seed = seed;
    return r;
  }
};

#define FDRLHF_CONFIG_FIELDS(X)                                                                   \
  X(k) X(m) X(eta) X(horizon) X(seeds) X(algos) X(divergences) X(beta) X(xi) X(delta) X(noise_sigma) \
  X(eval_pool_size) X(output) X(workers) X(backend) X(reward_scale) X(mle_reg) X(class_size)

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json::object();
#define FDRLHF_PUT(f) j[#f] = c.f;
  FDRLHF_CONFIG_FIELDS(FDRLHF_PUT)
#undef FDRLHF_PUT
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = {
#define FDRLHF_NAME(f) #f,
      FDRLHF_CONFIG_FIELDS(FDRLHF_NAME)
#undef FDRLHF_NAME
  };
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  try {
#define FDRLHF_GET(f) \
  if (j.contains(#f)) j.at(#f).get_to(c.f);
    FDRLHF_CONFIG_FIELDS(FDRLHF_GET)
#undef FDRLHF_GET
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

#undef FDRLHF_CONFIG_FIELDS

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse config '" + path.string() + "': " + e.what());
  }
  return j.get<ExperimentConfig>();
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kStepsHeader =
    "run_id,algo,divergence,eta,seed,t,action_i,action_j,label,branch,step_subopt_sampled,"
    "step_subopt_pool,cum_regret,lambda_residual,mle_grad_norm";
inline constexpr const char* kSummaryHeader =
    "algo,divergence,eta,t,mean_step_subopt,sd_step_subopt,mean_cum_regret,sd_cum_regret";

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct RunResult {
  std::size_t run_id = 0;
  std::string algo;
  std::string divergence;
  std::uint64_t seed = 0;
  std::vector<StepRecord> records;
  std::string error;  // empty on success

  bool ok() const { return error.empty(); }
};

inline void write_step_rows(std::ostream& out, const RunResult& run, double eta) {
  const std::string prefix = std::to_string(run.run_id) + "," + run.algo + "," + run.divergence + "," +
                             format_double(eta) + "," + std::to_string(run.seed) + ",";
  for (const auto& r : run.records) {
    out << prefix << r.t << ',' << r.action_i << ',' << r.action_j << ',' << r.label << ',' << r.branch << ','
        << format_double(r.step_subopt_sampled) << ',' << format_double(r.step_subopt_pool) << ','
        << format_double(r.cum_regret) << ',' << format_double(r.lambda_residual) << ','
        << format_double(r.mle_grad_norm) << '\n';
  }
}

struct SummaryRow {
  std::string algo;
  std::string divergence;
  double eta = 0.0;
  std::size_t t = 0;
  double mean_step_subopt = 0.0;
  double sd_step_subopt = 0.0;
  double mean_cum_regret = 0.0;
  double sd_cum_regret = 0.0;
};

/// Mean and sample standard deviation (NaN below two values).
inline std::pair<double, double> mean_sd(const std::vector<double>& v) {
  double mean = 0.0;
  for (double e : v) mean += e;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, std::numeric_limits<double>::quiet_NaN()};
  double ss = 0.0;
  for (double e : v) ss += (e - mean) * (e - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

/// Per-(algo, divergence, t) statistics over seeds of the sampled step
/// suboptimality and the cumulative regret. Failed runs are skipped.
inline std::vector<SummaryRow> summarize(const std::vector<RunResult>& runs, double eta) {
  std::vector<std::pair<std::string, std::string>> groups;
  std::map<std::pair<std::string, std::string>, std::vector<const RunResult*>> members;
  for (const auto& run : runs) {
    if (!run.ok()) continue;
    const auto key = std::make_pair(run.algo, run.divergence);
    if (!members.count(key)) groups.push_back(key);
    members[key].push_back(&run);
  }
  std::vector<SummaryRow> out;
  for (const auto& key : groups) {
    const auto& group = members[key];
    std::size_t horizon = group.front()->records.size();
    for (const auto* r : group) horizon = std::min(horizon, r->records.size());
    for (std::size_t i = 0; i < horizon; ++i) {
      std::vector<double> step, cum;
      for (const auto* r : group) {
        step.push_back(r->records[i].step_subopt_sampled);
        cum.push_back(r->records[i].cum_regret);
      }
      const auto [ms, ss] = mean_sd(step);
      const auto [mc, sc] = mean_sd(cum);
      out.push_back({key.first, key.second, eta, group.front()->records[i].t, ms, ss, mc, sc});
    }
  }
  return out;
}

inline void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << kSummaryHeader << '\n';
  for (const auto& r : rows) {
    out << r.algo << ',' << r.divergence << ',' << format_double(r.eta) << ',' << r.t << ','
        << format_double(r.mean_step_subopt) << ',' << format_double(r.sd_step_subopt) << ','
        << format_double(r.mean_cum_regret) << ',' << format_double(r.sd_cum_regret) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Grid

struct ExperimentResult {
  std::vector<RunResult> runs;  // grid order: algo, divergence, seed
  std::vector<SummaryRow> summary;

  std::size_t failures() const {
    std::size_t n = 0;
    for (const auto& r : runs) n += !r.ok();
    return n;
  }
};

using ProgressCallback = std::function<void(const RunResult&)>;
using CellRunner = std::function<std::vector<StepRecord>(const Environment&, const RunnerConfig&)>;

/// Runs every grid cell; a failing cell is recorded and the grid continues.
/// Writes steps.csv, summary.csv and config.json under cfg.output unless it
/// is empty.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const ProgressCallback& progress = {},
                                       const CellRunner& cell = {}) {
  cfg.validate();
  ExperimentResult result;
  for (const auto& a : cfg.algos)
    for (const auto& d : cfg.divergences)
      for (auto s : cfg.seeds) result.runs.push_back({result.runs.size(), a, d, s, {}, {}});

  std::map<std::uint64_t, Environment> envs;
  for (auto s : cfg.seeds) envs.emplace(s, make_environment(cfg.k, cfg.m, s, cfg.noise_sigma, cfg.reward_scale));

  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < result.runs.size(); i = next++) {
      RunResult& run = result.runs[i];
      try {
        const RunnerConfig rc = cfg.runner(run.algo, run.divergence, run.seed);
        run.records = cell ? cell(envs.at(run.seed), rc) : run_algorithm(envs.at(run.seed), rc);
      } catch (const std::exception& e) {
        run.records.clear();
        run.error = e.what();
      }
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(run);
      }
    }
  };
  const std::size_t n_threads = std::min(cfg.workers, result.runs.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_threads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  result.summary = summarize(result.runs, cfg.eta);
  if (cfg.output.empty()) return result;

  const std::filesystem::path dir(cfg.output);
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "config.json");
    out << nlohmann::json(cfg).dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "steps.csv");
    out << kStepsHeader << '\n';
    for (const auto& run : result.runs) write_step_rows(out, run, cfg.eta);
  }
  {
    std::ofstream out(dir / "summary.csv");
    write_summary(out, result.summary);
  }
  if (result.failures() > 0) {
    std::ofstream out(dir / "failures.txt");
    for (const auto& run : result.runs) {
      if (!run.ok()) out << run.run_id << ',' << run.algo << ',' << run.divergence << ',' << run.seed << ": " << run.error << '\n';
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Run statistics

/// Mean pool suboptimality over the last `window` rounds (sampled column
/// when the pool is disabled).
inline double final_suboptimality(const std::vector<StepRecord>& records, std::size_t window = 200) {
  if (records.empty()) throw DomainError("empty run");
  const std::size_t n = std::min(window, records.size());
  double acc = 0.0;
  for (std::size_t i = records.size() - n; i < records.size(); ++i) {
    const double p = records[i].step_subopt_pool;
    acc += std::isnan(p) ? records[i].step_subopt_sampled : p;
  }
  return acc / static_cast<double>(n);
}

/// Cumulative regret after round t (1-based).
inline double cumulative_regret_at(const std::vector<StepRecord>& records, std::size_t t) {
  if (t < 1 || t > records.size()) throw DomainError("round out of range");
  return records[t - 1].cum_regret;
}

}  // namespace fdrlhf
