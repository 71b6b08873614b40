// Privacy-audit CLI: synthetic scenario generation, DP target training,
// stacking + baseline membership attacks, FedAvg utility curves, RDP
// accounting and report digests. Every run is a pure function of one master
// seed; see docs/report-schema.md for the report layout.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "miaforge/runner.hpp"

namespace mf = miaforge;

namespace {

struct CommonFlags {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::vector<std::string> tiers;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_tiers) {
  cmd->add_option("--config", f.config, "Run configuration JSON")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Master seed (overrides the config file)");
  cmd->add_option("--out", f.out, "Output directory (overrides the config file)");
  if (with_tiers)
    cmd->add_option("--tiers", f.tiers, "Privacy tiers to run (default: all configured)")
        ->delimiter(',');
}

mf::RunConfig resolve_config(const CLI::App* cmd, const CommonFlags& f) {
  mf::RunConfig cfg;
  if (!f.config.empty()) cfg = mf::load_run_config(f.config);
  if (cmd->count("--seed")) cfg.master_seed = f.seed;
  if (cmd->count("--out")) cfg.out_dir = f.out;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"membership-inference privacy audit toolkit"};
  app.require_subcommand(1);

  CommonFlags gen_f, run_f, fl_f;
  auto* gen = app.add_subcommand("generate", "Write the synthetic scenario pools");
  add_common(gen, gen_f, false);
  auto* run = app.add_subcommand("run-all",
                                 "Targets, attacks, baselines, ROC, FL curves and the report");
  add_common(run, run_f, true);
  auto* flsim = app.add_subcommand("fl-sim", "Federated averaging simulation only");
  add_common(flsim, fl_f, true);

  std::string ext_pools, ext_preds, ext_out = "out/attack";
  std::string ext_config;
  std::uint64_t ext_seed = 0;
  double ext_percentile = 0.0, ext_lambda = 0.0;
  auto* ext = app.add_subcommand("attack-external",
                                 "Stacking attack over pre-exported prediction CSVs");
  ext->add_option("--pools", ext_pools, "Scenario directory (pools + colluding labels)")
      ->required()
      ->check(CLI::ExistingDirectory);
  ext->add_option("--predictions", ext_preds, "Directory of per-client prediction CSVs")
      ->required()
      ->check(CLI::ExistingDirectory);
  ext->add_option("--out", ext_out, "Output directory for decisions and provenance");
  ext->add_option("--config", ext_config, "Run configuration JSON (rule/adaptation defaults)")
      ->check(CLI::ExistingFile);
  ext->add_option("--seed", ext_seed, "Attack seed (overrides the config-derived seed)");
  ext->add_option("--percentile", ext_percentile, "Column threshold percentile (default 55)");
  ext->add_option("--lambda", ext_lambda, "Row dominance factor (default 1.5)");

  double acc_sigma = 0.0, acc_epsilon = 0.0, acc_delta = 1e-5;
  long long acc_steps = 0;
  auto* acc = app.add_subcommand("accountant",
                                 "Gaussian RDP accounting: epsilon from sigma, or sigma for a "
                                 "target epsilon");
  acc->add_option("--steps", acc_steps, "Number of noisy gradient steps")->required();
  acc->add_option("--delta", acc_delta, "Failure probability delta");
  auto* acc_s = acc->add_option("--sigma", acc_sigma, "Noise multiplier to account for");
  auto* acc_e = acc->add_option("--epsilon", acc_epsilon, "Target epsilon to calibrate sigma for");
  acc_s->excludes(acc_e);

  std::string report_path;
  auto* rep = app.add_subcommand("report", "Print a human-readable digest of a report JSON");
  rep->add_option("path", report_path, "Path to report.json")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      mf::cmd_generate(resolve_config(gen, gen_f), std::cout);
    } else if (*run) {
      const auto report = mf::cmd_run_all(resolve_config(run, run_f), run_f.tiers, std::cout);
      std::cout << mf::summarize_report(report);
    } else if (*flsim) {
      mf::cmd_fl_sim(resolve_config(flsim, fl_f), fl_f.tiers, std::cout);
    } else if (*ext) {
      mf::RunConfig cfg;
      if (!ext_config.empty()) cfg = mf::load_run_config(ext_config);
      mf::AttackConfig ac;
      ac.rule = cfg.rule;
      ac.adapt = cfg.adapt;
      ac.seed = mf::derive_seed(cfg.master_seed, {mf::kSeedAttack, 0});
      if (ext->count("--seed")) ac.seed = ext_seed;
      if (ext->count("--percentile")) ac.rule.percentile = ext_percentile;
      if (ext->count("--lambda")) ac.rule.lambda = ext_lambda;
      mf::cmd_attack_external(ext_pools, ext_preds, ac, ext_out, std::cout);
      std::cout << "decisions written to " << ext_out << "\n";
    } else if (*acc) {
      if (!acc_s->count() && !acc_e->count())
        throw CLI::ValidationError("accountant", "pass either --sigma or --epsilon");
      if (acc_s->count()) {
        const double eps = mf::epsilon_for({acc_sigma, acc_steps, acc_delta});
        std::printf("epsilon = %.6g (sigma %.6g, %lld steps, delta %.3g)\n", eps, acc_sigma,
                    acc_steps, acc_delta);
      } else {
        const double sigma = mf::calibrate_sigma(acc_epsilon, acc_steps, acc_delta);
        std::printf("sigma = %.6g (epsilon %.6g, %lld steps, delta %.3g)\n", sigma, acc_epsilon,
                    acc_steps, acc_delta);
      }
    } else if (*rep) {
      std::cout << mf::summarize_report(mf::load_report(report_path));
    }
  } catch (const std::exception& e) {
    std::cerr << "audit: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
