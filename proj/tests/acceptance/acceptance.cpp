// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--out DIR] [criterion ...]
//
// With no criterion names every criterion runs. Exit status is non-zero when
// any selected criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fdrlhf/fdrlhf.hpp"

namespace {

using namespace fdrlhf;
namespace fs = std::filesystem;

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::size_t workers() { return std::max(1u, std::thread::hardware_concurrency()); }

Outcome from_suite(const SuiteReport& rep) {
  Outcome out{rep.passed(), {}};
  for (const auto& r : rep.results) {
    out.detail += "\n    " + std::string(r.passed ? "ok   " : "FAIL ") + r.name + ": " + r.detail;
  }
  return out;
}

Outcome solver(const fs::path&) { return from_suite(kkt_suite(1000, 0)); }
Outcome shift_invariance(const fs::path&) { return from_suite(invariance_suite(1000, 0)); }
Outcome constants(const fs::path&) { return from_suite(constants_suite(200, 0)); }
Outcome gradient_hessian(const fs::path&) { return from_suite(gradhess_suite(10000, 0)); }
Outcome value_decomposition(const fs::path&) { return from_suite(valdecomp_suite(50, 256, 0)); }

// Finite 20-member class containing r*, radius from the theory, delta = 0.1,
// T = 500, 20 seeds: fraction of rounds violating optimism <= delta.
Outcome optimism_validity(const fs::path&) {
  const std::size_t seeds = 20, horizon = 500;
  std::size_t rounds = 0, violations = 0, runs_hit = 0;
  for (std::uint64_t s = 0; s < seeds; ++s) {
    const Environment env = make_environment(5, 10, s);
    RunnerConfig cfg;
    cfg.algo = Algo::Optimism;
    cfg.backend = BonusBackend::EluderFinite;
    cfg.class_size = 20;
    cfg.delta = 0.1;
    cfg.horizon = horizon;
    cfg.eval_pool_size = 0;
    cfg.seed = s;
    std::size_t v = 0;
    for (const auto& r : run_optimism(env, cfg)) v += r.optimism_violation;
    rounds += horizon;
    violations += v;
    runs_hit += v > 0;
  }
  const double rate = static_cast<double>(violations) / static_cast<double>(rounds);
  return {rate <= 0.1, "violation rate " + fmt("%.4f", rate) + " (" + std::to_string(violations) + "/" +
                           std::to_string(rounds) + " rounds; " + std::to_string(runs_hit) + "/" +
                           std::to_string(seeds) + " runs with any violation); beta_T^2 = " +
                           fmt("%.4f", beta_sq_pairwise(20, horizon, 0.1))};
}

struct GroupStats {
  double cum_half = 0.0;   // mean cum regret at T/2
  double cum_final = 0.0;  // mean cum regret at T
  double final_subopt = 0.0;
  std::size_t seeds_sublinear = 0;
  std::size_t n = 0;
};

// k = 5, m = 10, beta = 0.1, T = 2000, 5 seeds over three divergences.
Outcome reproduction(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.algos = {"optimism", "derivative", "uniform"};
  cfg.output = (out / "reproduction").string();
  cfg.workers = workers();
  const std::size_t half = cfg.horizon / 2;
  const ExperimentResult res = run_experiment(cfg);

  std::map<std::pair<std::string, std::string>, GroupStats> g;
  for (const auto& run : res.runs) {
    if (!run.ok()) continue;
    auto& s = g[{run.algo, run.divergence}];
    const double c1 = cumulative_regret_at(run.records, half), c2 = cumulative_regret_at(run.records, cfg.horizon);
    s.cum_half += c1;
    s.cum_final += c2;
    s.final_subopt += final_suboptimality(run.records);
    s.seeds_sublinear += (c2 - c1) < c1;
    ++s.n;
  }
  for (auto& [key, s] : g) {
    s.cum_half /= static_cast<double>(s.n);
    s.cum_final /= static_cast<double>(s.n);
    s.final_subopt /= static_cast<double>(s.n);
  }

  std::ostringstream d;
  d << "\n    " << res.failures() << " failed runs of " << res.runs.size();
  char line[256];
  for (const auto& [key, s] : g) {
    std::snprintf(line, sizeof line,
                  "\n    %-10s %-17s cum(1000)=%9.4f cum(2000)=%9.4f final_subopt=%.4e sublinear seeds %zu/%zu",
                  key.first.c_str(), key.second.c_str(), s.cum_half, s.cum_final, s.final_subopt,
                  s.seeds_sublinear, s.n);
    d << line;
  }

  bool a = res.failures() == 0, b = a, c = a, dd = a;
  std::string da, db, dc, ddd;
  for (const auto& div : cfg.divergences) {
    const auto& uni = g[{"uniform", div}];
    for (const char* algo : {"optimism", "derivative"}) {
      const auto& s = g[{algo, div}];
      const bool sub = (s.cum_final - s.cum_half) < s.cum_half;
      a = a && sub;
      if (!sub) da += " " + std::string(algo) + "/" + div;
      const double ratio = uni.cum_final / s.cum_final;
      b = b && ratio >= 2.0;
      db += " " + std::string(algo) + "/" + div + "=" + fmt("%.3f", ratio);
    }
    const double rel = g[{"derivative", div}].cum_final / g[{"optimism", div}].cum_final;
    const bool flag_c = rel > 1.2;
    c = c && !flag_c;
    dc += " " + div + "=" + fmt("%.3f", rel) + (flag_c ? "(flagged)" : rel > 1.0 ? "(reversed)" : "");
  }
  for (const char* algo : {"optimism", "derivative"}) {
    const double kl = g[{algo, "reverse_kl"}].final_subopt;
    for (const char* div : {"chi2_mixed_kl", "xlogx_minus_logx"}) {
      const double rel = g[{algo, div}].final_subopt / kl;
      const bool flag_d = rel > 1.2;
      dd = dd && !flag_d;
      ddd += " " + std::string(algo) + "/" + div + "=" + fmt("%.3f", rel) +
             (flag_d ? "(flagged)" : rel > 1.0 ? "(reversed)" : "");
    }
  }
  d << "\n    " << (a ? "ok   " : "FAIL ") << "(a) regret(2T')-regret(T') < regret(T') at T'=1000"
    << (da.empty() ? "" : "; violated by" + da);
  d << "\n    " << (b ? "ok   " : "FAIL ") << "(b) uniform final regret / algorithm final regret >= 2:" << db;
  d << "\n    " << (c ? "ok   " : "FAIL ") << "(c) derivative / optimism final regret <= 1.2:" << dc;
  d << "\n    " << (dd ? "ok   " : "FAIL ") << "(d) final suboptimality vs reverse_kl <= 1.2:" << ddd;
  d << "\n    CSV written to " << cfg.output;
  return {a && b && c && dd, d.str()};
}

// Absolute feedback: exact recovery with a noiseless singleton class, and a
// decreasing step-regret trend with sigma = 0.1 on the linear backend.
Outcome absolute_feedback(const fs::path&) {
  double worst = 0.0;
  for (const char* div : {"reverse_kl", "chi2_mixed_kl", "xlogx_minus_logx"}) {
    const Environment env = make_environment(5, 10, 0, 0.0);
    RunnerConfig cfg;
    cfg.algo = Algo::OptimismRf;
    cfg.backend = BonusBackend::EluderFinite;
    cfg.class_size = 1;
    cfg.divergence = div;
    cfg.horizon = 200;
    const auto rec = run_optimism_rf(env, cfg);
    for (std::size_t i = 1; i < rec.size(); ++i) {
      worst = std::max({worst, rec[i].step_subopt_sampled, rec[i].step_subopt_pool});
    }
  }
  const bool exact = worst <= 1e-8;

  const std::size_t horizon = 2000, quarters = 4, seeds = 5;
  std::vector<double> q(quarters, 0.0);
  for (std::uint64_t s = 0; s < seeds; ++s) {
    const Environment env = make_environment(5, 10, s, 0.1);
    RunnerConfig cfg;
    cfg.algo = Algo::OptimismRf;
    cfg.horizon = horizon;
    cfg.seed = s;
    const auto rec = run_optimism_rf(env, cfg);
    for (std::size_t i = 0; i < horizon; ++i) q[i * quarters / horizon] += rec[i].step_subopt_pool;
  }
  bool decreasing = true;
  std::string qs;
  for (std::size_t j = 0; j < quarters; ++j) {
    q[j] /= static_cast<double>(seeds * horizon / quarters);
    if (j > 0) decreasing = decreasing && q[j] < q[j - 1];
    qs += " " + fmt("%.4e", q[j]);
  }
  return {exact && decreasing, "\n    " + std::string(exact ? "ok   " : "FAIL ") +
                                   "sigma=0 singleton: max suboptimality from round 2 = " + fmt("%.3e", worst) +
                                   "\n    " + (decreasing ? "ok   " : "FAIL ") +
                                   "sigma=0.1 linear: mean pool step regret per 500-round quarter:" + qs};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.horizon = 150;
  cfg.seeds = {0, 1};
  cfg.divergences = {"reverse_kl", "chi2_mixed_kl"};
  cfg.output = (out / "determinism_a").string();
  cfg.workers = 1;
  run_experiment(cfg);
  cfg.output = (out / "determinism_b").string();
  cfg.workers = std::max<std::size_t>(2, workers());
  run_experiment(cfg);
  const std::string a = slurp(out / "determinism_a" / "steps.csv"), b = slurp(out / "determinism_b" / "steps.csv");
  const bool same = !a.empty() && a == b;
  return {same, std::to_string(a.size()) + " bytes of steps.csv, " + (same ? "identical" : "DIFFERENT") +
                    " across reruns with 1 and " + std::to_string(cfg.workers) + " workers"};
}

struct Criterion {
  const char* name;
  const char* title;
  std::function<Outcome(const fs::path&)> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {"solver", "solver normalization, KKT and softmax agreement", solver},
      {"shift_invariance", "reward-shift invariance of policy and lambda", shift_invariance},
      {"constants", "divergence constants orderings", constants},
      {"gradient_hessian", "vanishing gradient and Hessian identity at theta*", gradient_hessian},
      {"value_decomposition", "value-decomposition bound on dominating rewards", value_decomposition},
      {"optimism_validity", "optimism event with the theoretical radius", optimism_validity},
      {"reproduction", "qualitative regret reproduction", reproduction},
      {"absolute_feedback", "absolute-feedback sanity", absolute_feedback},
      {"determinism", "byte-identical step CSVs", determinism},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path out = "acceptance_results";
  std::vector<std::string> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--out" && i + 1 < argc) {
      out = argv[++i];
    } else {
      selected.push_back(arg);
    }
  }
  for (const auto& name : selected) {
    bool known = false;
    for (const auto& c : criteria()) known = known || name == c.name;
    if (!known) {
      std::fprintf(stderr, "unknown criterion '%s'\n", name.c_str());
      return 2;
    }
  }

  bool all = true;
  for (const auto& c : criteria()) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.name) == selected.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(out);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s (%s, %.1fs): %s\n", o.passed ? "PASS" : "FAIL", c.name, c.title, secs, o.detail.c_str());
    std::fflush(stdout);
    all = all && o.passed;
  }
  return all ? 0 : 1;
}
