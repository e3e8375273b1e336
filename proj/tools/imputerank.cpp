#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "imputerank/imputerank.hpp"

namespace {

namespace ir = imputerank;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<double> missing_rate;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "run configuration (JSON)")->required();
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--output-dir", o.output_dir, "directory for report files");
  cmd->add_option("--missing-rate", o.missing_rate, "MCAR rate in [0, 0.5]");
  cmd->add_option("--threads", o.threads, "worker threads");
}

ir::RunConfig resolve(const Overrides& o) {
  auto cfg = ir::load_run_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.missing_rate) cfg.missing_rate = *o.missing_rate;
  if (o.threads) cfg.threads = *o.threads;
  cfg.validate();
  return cfg;
}

void print_summary(const ir::EvaluationReport& rep) {
  std::cout << "rows with missing values: " << rep.row_ids.size() << ", complete rows: " << rep.num_complete
            << ", patterns: " << rep.num_patterns << "\n";
  for (const auto& mr : rep.metrics) {
    std::cout << ir::metric_name(mr.metric) << ":";
    for (std::size_t a : ir::ordering_of(mr.ranking.avg_ranks))
      std::printf(" %s(%.3f)", rep.algorithms[a].c_str(), mr.ranking.avg_ranks[a]);
    std::cout << (mr.ranking.reject_null ? "  [Friedman rejects]" : "  [no significant difference]") << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rank imputation algorithms against a learned reference model"};
  app.set_version_flag("--version", std::string(ir::kVersion));
  app.require_subcommand(1);
  Overrides run_opts, cmp_opts;
  auto* run = app.add_subcommand("run", "evaluate and rank the configured algorithms");
  add_common(run, run_opts);
  auto* cmp = app.add_subcommand("compare-models", "compare per-pattern and single-model reference rankings");
  add_common(cmp, cmp_opts);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) {
      const auto cfg = resolve(run_opts);
      const auto rep = ir::run_evaluation(cfg);
      constexpr std::size_t kShown = 10;
      for (std::size_t i = 0; i < rep.warnings.size() && i < kShown; ++i)
        std::cerr << "warning: " << rep.warnings[i] << "\n";
      if (rep.warnings.size() > kShown)
        std::cerr << "warning: " << rep.warnings.size() - kShown << " more in run_manifest.json\n";
      ir::emit_report(rep, cfg.output_dir);
      print_summary(rep);
      std::cout << "reports written to " << cfg.output_dir.string() << "\n";
    } else {
      const auto cfg = resolve(cmp_opts);
      const auto rep = ir::compare_models(cfg);
      ir::emit_comparison(rep, cfg.output_dir);
      if (rep.single_pattern) std::cout << "only one missingness pattern: both models are equivalent in scope\n";
      for (const auto& m : rep.metrics)
        std::printf("%s: %.2f%% average rank change, orderings %s, %zu significant reversals\n",
                    std::string(ir::metric_name(m.metric)).c_str(), m.percent_change, m.identical_ordering ? "identical" : "differ",
                    m.significant_reversals.size());
      std::cout << "reports written to " << cfg.output_dir.string() << "\n";
    }
  } catch (const ir::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ir::PipelineError& e) {
    std::cerr << "error in stage '" << e.stage() << "': " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
