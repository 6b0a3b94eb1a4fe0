#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "fdrlhf/fdrlhf.hpp"

namespace {

using namespace fdrlhf;

struct RunFlags {
  std::string config;
  std::optional<std::string> out;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> algos;
  std::vector<std::string> divergences;
  std::optional<double> eta;
  std::optional<std::size_t> horizon;
  std::optional<double> beta;
  std::optional<std::size_t> workers;
};

int cmd_run(const RunFlags& f) {
  ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
  if (f.out) cfg.output = *f.out;
  if (!f.seeds.empty()) cfg.seeds = f.seeds;
  if (!f.algos.empty()) cfg.algos = f.algos;
  if (!f.divergences.empty()) cfg.divergences = f.divergences;
  if (f.eta) cfg.eta = *f.eta;
  if (f.horizon) cfg.horizon = *f.horizon;
  if (f.beta) cfg.beta = *f.beta;
  if (f.workers) cfg.workers = *f.workers;

  const std::size_t total = cfg.algos.size() * cfg.divergences.size() * cfg.seeds.size();
  std::size_t done = 0;
  const ExperimentResult res = run_experiment(cfg, [&](const RunResult& r) {
    ++done;
    std::fprintf(stderr, "[%zu/%zu] %s %s seed=%llu %s\n", done, total, r.algo.c_str(), r.divergence.c_str(),
                 static_cast<unsigned long long>(r.seed), r.ok() ? "ok" : ("FAILED: " + r.error).c_str());
  });
  for (const auto& run : res.runs) {
    if (!run.ok()) continue;
    std::printf("%-12s %-18s seed=%-3llu cum_regret=%.6g final_subopt=%.6g\n", run.algo.c_str(),
                run.divergence.c_str(), static_cast<unsigned long long>(run.seed), run.records.back().cum_regret,
                final_suboptimality(run.records));
  }
  if (!cfg.output.empty()) std::printf("wrote %s/{steps.csv,summary.csv,config.json}\n", cfg.output.c_str());
  return res.failures() == 0 ? 0 : 1;
}

int cmd_check(std::vector<std::string> suites, std::uint64_t seed) {
  if (suites.empty()) suites = {"kkt", "invariance", "constants", "gradhess", "valdecomp"};
  bool ok = true;
  for (const auto& name : suites) {
    const SuiteReport rep = run_suite(name, seed);
    for (const auto& r : rep.results) {
      std::printf("%s [%s] %s: %s\n", r.passed ? "PASS" : "FAIL", rep.suite.c_str(), r.name.c_str(),
                  r.detail.c_str());
    }
    ok = ok && rep.passed();
  }
  return ok ? 0 : 1;
}

int cmd_constants(std::vector<std::string> divergences, double eta, Eigen::Index k, Eigen::Index m,
                  std::size_t class_size, std::size_t contexts, std::uint64_t seed) {
  if (divergences.empty()) divergences.assign(kRegisteredDivergences.begin(), kRegisteredDivergences.end());
  const Environment env = make_environment(k, m, seed);
  Rng setup = make_stream(seed, Stream::Setup);
  const FiniteRewardClass cls = make_finite_class(env, class_size, setup);
  Rng rng = make_stream(seed, Stream::Eval);
  std::vector<Eigen::MatrixXd> tables(cls.size(), Eigen::MatrixXd(static_cast<Eigen::Index>(contexts), m));
  Eigen::MatrixXd ref(static_cast<Eigen::Index>(contexts), m);
  for (Eigen::Index c = 0; c < ref.rows(); ++c) {
    const Eigen::VectorXd x = sample_context(env, rng);
    ref.row(c) = env.reference_row(x).transpose();
    for (std::size_t j = 0; j < cls.size(); ++j) tables[j].row(c) = cls.members[j].row(x, env.actions).transpose();
  }
  std::printf("%-18s %12s %12s\n", "divergence", "C", "M");
  for (const auto& name : divergences) {
    const ConstantEstimate est = estimate_constants(registry_get(name), tables, ref, eta, {64, seed});
    std::printf("%-18s %12.6f %12.6f\n", name.c_str(), est.c, est.m);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"f-divergence regularized preference learning: experiments and numerical checks"};
  app.require_subcommand(1);

  RunFlags run;
  auto* run_cmd = app.add_subcommand("run", "Run the experiment grid and write CSV results");
  run_cmd->add_option("--config", run.config, "JSON config file")->check(CLI::ExistingFile);
  run_cmd->add_option("--out", run.out, "Output directory");
  run_cmd->add_option("--seeds", run.seeds, "Seeds")->delimiter(',');
  run_cmd->add_option("--algo", run.algos, "Algorithms")->delimiter(',');
  run_cmd->add_option("--divergence", run.divergences, "Divergences")->delimiter(',');
  run_cmd->add_option("--eta", run.eta, "Regularization strength");
  run_cmd->add_option("--horizon", run.horizon, "Rounds per run");
  run_cmd->add_option("--beta", run.beta, "Optimism level of the linear bonus");
  run_cmd->add_option("--workers", run.workers, "Parallel runs");

  std::vector<std::string> suites;
  std::uint64_t check_seed = 0;
  auto* check_cmd = app.add_subcommand("check", "Run structural-identity suites");
  check_cmd->add_option("suites", suites, "kkt, invariance, constants, gradhess, valdecomp (default all)");
  check_cmd->add_option("--seed", check_seed, "Seed");

  std::vector<std::string> c_divs;
  double c_eta = 1.0;
  Eigen::Index c_k = 5, c_m = 10;
  std::size_t c_class = 20, c_contexts = 64;
  std::uint64_t c_seed = 0;
  auto* const_cmd = app.add_subcommand("constants", "Print C and M per divergence for a random reward class");
  const_cmd->add_option("--divergence", c_divs, "Divergences (default all)")->delimiter(',');
  const_cmd->add_option("--eta", c_eta, "Regularization strength");
  const_cmd->add_option("--k", c_k, "Context dimension");
  const_cmd->add_option("--m", c_m, "Number of actions");
  const_cmd->add_option("--class-size", c_class, "Reward class size");
  const_cmd->add_option("--contexts", c_contexts, "Context pool size");
  const_cmd->add_option("--seed", c_seed, "Seed");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return cmd_run(run);
    if (*check_cmd) return cmd_check(suites, check_seed);
    if (*const_cmd) return cmd_constants(c_divs, c_eta, c_k, c_m, c_class, c_contexts, c_seed);
  } catch (const fdrlhf::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
