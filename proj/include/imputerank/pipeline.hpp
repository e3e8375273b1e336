#pragma once

// End-to-end evaluation: build the reference model from complete rows, draw
// reference and imputer samples for every row with missing values, score,
// rank and aggregate. Reports are written as JSON/CSV.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "imputerank/csv.hpp"
#include "imputerank/dataset.hpp"
#include "imputerank/error.hpp"
#include "imputerank/imputers.hpp"
#include "imputerank/metrics.hpp"
#include "imputerank/mrf.hpp"
#include "imputerank/parallel.hpp"
#include "imputerank/random.hpp"
#include "imputerank/ranking.hpp"
#include "imputerank/synthetic.hpp"

namespace imputerank {

inline constexpr const char* kVersion = "1.0.0";

struct AlgorithmSpec {
  std::string type;   // mode_mean | mixture | knn | mice | true_sampler
  std::string name;   // unique label in reports
  std::uint64_t seed = 0;
  nlohmann::json params = nlohmann::json::object();
};

enum class TrainOn { CompleteRows, FullPreInjection };

struct InconsistencyConfig {
  bool enabled = false;
  std::size_t max_rows = 200;     // first rows of D_M (by row index) used for the diagnostic
  bool include_reference = false;  // add the reference model's samples as one more source
};

struct RunConfig {
  std::optional<std::filesystem::path> csv;
  std::optional<std::vector<ColumnSpec>> schema;
  std::optional<SyntheticSpec> synthetic;
  double missing_rate = 0.0;
  ModelScope model = ModelScope::PerPattern;
  std::vector<Metric> metrics;
  std::vector<AlgorithmSpec> algorithms;
  std::size_t L = 25;
  double beta = 0.05;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "imputerank_out";
  std::size_t threads = 1;
  TrainOn train_on = TrainOn::CompleteRows;
  TrainConfig train;
  std::size_t gibbs_burn_in = 100;
  std::size_t gibbs_thin = 10;
  MetricSuite metric_settings;
  InconsistencyConfig inconsistency;

  void validate() const {
    if (csv.has_value() == synthetic.has_value()) throw ConfigError("input must name exactly one of csv or synthetic");
    if (!(missing_rate >= 0.0 && missing_rate <= 0.5)) throw ConfigError("missing_rate must lie in [0, 0.5]");
    if (metrics.empty()) throw ConfigError("metrics must be nonempty");
    if (algorithms.size() < 2) throw ConfigError("at least two algorithms are required");
    if (algorithms.size() > 10) throw ConfigError("at most ten algorithms are supported");
    if (L < 1) throw ConfigError("L must be >= 1");
    if (!(std::abs(beta - 0.05) < 1e-12 || std::abs(beta - 0.10) < 1e-12))
      throw ConfigError("beta must be 0.05 or 0.10");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    std::set<std::string> names;
    for (const auto& a : algorithms) {
      if (!names.insert(a.name).second) throw ConfigError("duplicate algorithm name '" + a.name + "'");
      static const std::set<std::string> kinds{"mode_mean", "mixture", "knn", "mice", "true_sampler"};
      if (!kinds.count(a.type)) throw ConfigError("unknown algorithm type '" + a.type + "'");
    }
    std::set<Metric> seen;
    for (Metric m : metrics) {
      if (!seen.insert(m).second) throw ConfigError("duplicate metric '" + std::string(metric_name(m)) + "'");
      if (m == Metric::MmdBTest && L < 8) throw ConfigError("mmd_btest needs L >= 8");
      if (m == Metric::MmdScore && L < 2) throw ConfigError("mmd_score needs L >= 2");
    }
    if (train_on == TrainOn::FullPreInjection && missing_rate == 0.0)
      throw ConfigError("train_on = full_pre_injection requires missing_rate > 0");
    if (inconsistency.enabled && algorithms.size() + (inconsistency.include_reference ? 1 : 0) < 3)
      throw ConfigError("inconsistency needs at least three sample sources");
    try {
      train.validate();
      metric_settings.kernel.validate();
      metric_settings.kl.validate();
      metric_settings.nds_cfg.validate();
      if (synthetic) synthetic->validate();
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    }
    if (gibbs_thin < 1) throw ConfigError("gibbs thin must be >= 1");
  }
};

namespace detail {

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace detail

/// Parses a run configuration document. Relative CSV paths resolve against
/// `base_dir`.
inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  RunConfig c;
  try {
    const auto& in = j.at("input");
    if (in.contains("csv")) {
      std::filesystem::path p = in.at("csv").get<std::string>();
      c.csv = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
      if (in.contains("schema")) {
        std::vector<ColumnSpec> schema;
        for (const auto& col : in.at("schema")) {
          ColumnSpec s;
          s.name = col.at("name").get<std::string>();
          s.levels = col.at("levels").get<std::vector<std::string>>();
          s.cardinality = static_cast<int>(s.levels.size());
          schema.push_back(std::move(s));
        }
        c.schema = std::move(schema);
      }
    }
    if (in.contains("synthetic")) c.synthetic = in.at("synthetic").get<SyntheticSpec>();

    c.missing_rate = detail::get_or(j, "missing_rate", 0.0);
    const auto model = detail::get_or<std::string>(j, "model", "per_pattern");
    if (model == "per_pattern") {
      c.model = ModelScope::PerPattern;
    } else if (model == "single_model") {
      c.model = ModelScope::SingleModel;
    } else {
      throw ConfigError("model must be per_pattern or single_model");
    }
    for (const auto& m : j.at("metrics")) c.metrics.push_back(parse_metric(m.get<std::string>()));

    std::map<std::string, int> type_count;
    for (const auto& a : j.at("algorithms")) {
      AlgorithmSpec s;
      if (a.is_string()) {
        s.type = a.get<std::string>();
      } else {
        s.type = a.at("type").get<std::string>();
        s.name = detail::get_or<std::string>(a, "name", "");
        s.seed = detail::get_or<std::uint64_t>(a, "seed", 0);
        s.params = a;
      }
      const int n = ++type_count[s.type];
      if (s.name.empty()) s.name = n == 1 ? s.type : s.type + "_" + std::to_string(n);
      c.algorithms.push_back(std::move(s));
    }

    c.L = detail::get_or<std::size_t>(j, "L", 25);
    c.beta = detail::get_or(j, "beta", 0.05);
    c.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
    c.output_dir = detail::get_or<std::string>(j, "output_dir", "imputerank_out");
    c.threads = detail::get_or<std::size_t>(j, "threads", 1);
    const auto train_on = detail::get_or<std::string>(j, "train_on", "d_n");
    if (train_on == "d_n") {
      c.train_on = TrainOn::CompleteRows;
    } else if (train_on == "full_pre_injection") {
      c.train_on = TrainOn::FullPreInjection;
    } else {
      throw ConfigError("train_on must be d_n or full_pre_injection");
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      c.train.l2 = detail::get_or(t, "l2", c.train.l2);
      c.train.step = detail::get_or(t, "step", c.train.step);
      c.train.max_iters = detail::get_or(t, "max_iters", c.train.max_iters);
      c.train.tol = detail::get_or(t, "tol", c.train.tol);
    }
    if (j.contains("gibbs")) {
      c.gibbs_burn_in = detail::get_or(j.at("gibbs"), "burn_in", c.gibbs_burn_in);
      c.gibbs_thin = detail::get_or(j.at("gibbs"), "thin", c.gibbs_thin);
    }
    c.metric_settings.kernel.sigma = detail::get_or(j, "kernel_sigma", 1.0);
    c.metric_settings.nds_cfg.lambda = detail::get_or(j, "nds_lambda", 0.1);
    c.metric_settings.btest_beta = c.beta;
    if (j.contains("kl")) {
      const auto& k = j.at("kl");
      if (k.contains("lambda_L")) c.metric_settings.kl.lambda_L = k.at("lambda_L").get<double>();
      c.metric_settings.kl.max_iters = detail::get_or(k, "max_iters", c.metric_settings.kl.max_iters);
      c.metric_settings.kl.tol = detail::get_or(k, "tol", c.metric_settings.kl.tol);
      c.metric_settings.kl.alpha_floor = detail::get_or(k, "alpha_floor", c.metric_settings.kl.alpha_floor);
    }
    if (j.contains("inconsistency")) {
      const auto& ic = j.at("inconsistency");
      c.inconsistency.enabled = detail::get_or(ic, "enabled", true);
      c.inconsistency.max_rows = detail::get_or(ic, "max_rows", c.inconsistency.max_rows);
      c.inconsistency.include_reference = detail::get_or(ic, "include_reference", false);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_run_config(j, path.parent_path());
}

/// Effective configuration as written to the run manifest.
inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  nlohmann::json in;
  if (c.csv) in["csv"] = c.csv->string();
  if (c.schema) {
    for (const auto& s : *c.schema) in["schema"].push_back({{"name", s.name}, {"levels", s.levels}});
  }
  if (c.synthetic) in["synthetic"] = *c.synthetic;
  j["input"] = in;
  j["missing_rate"] = c.missing_rate;
  j["model"] = to_string(c.model);
  for (Metric m : c.metrics) j["metrics"].push_back(metric_name(m));
  for (const auto& a : c.algorithms) {
    nlohmann::json aj = a.params.is_object() ? a.params : nlohmann::json::object();
    aj["type"] = a.type;
    aj["name"] = a.name;
    aj["seed"] = a.seed;
    j["algorithms"].push_back(std::move(aj));
  }
  j["L"] = c.L;
  j["beta"] = c.beta;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir.string();
  j["threads"] = c.threads;
  j["train_on"] = c.train_on == TrainOn::CompleteRows ? "d_n" : "full_pre_injection";
  j["train"] = {{"l2", c.train.l2}, {"step", c.train.step}, {"max_iters", c.train.max_iters}, {"tol", c.train.tol}};
  j["gibbs"] = {{"burn_in", c.gibbs_burn_in}, {"thin", c.gibbs_thin}};
  j["kernel_sigma"] = c.metric_settings.kernel.sigma;
  j["nds_lambda"] = c.metric_settings.nds_cfg.lambda;
  nlohmann::json kl{{"max_iters", c.metric_settings.kl.max_iters},
                    {"tol", c.metric_settings.kl.tol},
                    {"alpha_floor", c.metric_settings.kl.alpha_floor}};
  if (c.metric_settings.kl.lambda_L) kl["lambda_L"] = *c.metric_settings.kl.lambda_L;
  j["kl"] = kl;
  j["inconsistency"] = {{"enabled", c.inconsistency.enabled},
                        {"max_rows", c.inconsistency.max_rows},
                        {"include_reference", c.inconsistency.include_reference}};
  return j;
}

/// Builds an unfitted imputer. `truth` is required for true_sampler.
inline std::unique_ptr<Imputer> make_imputer(const AlgorithmSpec& spec, std::uint64_t master_seed,
                                             std::size_t index, const GroundTruth* truth) {
  const auto& p = spec.params;
  const std::uint64_t seed = derive_seed(master_seed, {0x6669740000ULL, index, spec.seed});
  if (spec.type == "mode_mean") return std::make_unique<ModeMeanImputer>();
  if (spec.type == "mixture") {
    MixtureImputer::Options o;
    o.num_components = detail::get_or<std::size_t>(p, "components", o.num_components);
    o.em_iters = detail::get_or<std::size_t>(p, "em_iters", o.em_iters);
    o.restarts = detail::get_or<std::size_t>(p, "restarts", o.restarts);
    o.seed = seed;
    return std::make_unique<MixtureImputer>(o);
  }
  if (spec.type == "knn") return std::make_unique<KnnImputer>(detail::get_or<std::size_t>(p, "k", 10));
  if (spec.type == "mice") {
    MiceImputer::Options o;
    o.sweeps = detail::get_or<std::size_t>(p, "sweeps", o.sweeps);
    o.l2 = detail::get_or(p, "l2", o.l2);
    o.seed = seed;
    return std::make_unique<MiceImputer>(o);
  }
  if (spec.type == "true_sampler") {
    if (!truth) throw UnsupportedError("true_sampler needs a synthetic ground truth");
    return std::make_unique<TrueSamplerImputer>(*truth);
  }
  throw ConfigError("unknown algorithm type '" + spec.type + "'");
}

struct MetricReport {
  Metric metric = Metric::Nds;
  RankMatrix ranks;
  RankingResult ranking;
  std::optional<double> inconsistency;
  std::size_t unconverged = 0;  // KL solves that hit max_iters
};

struct EvaluationReport {
  RunConfig config;
  std::vector<std::string> algorithms;
  std::vector<std::size_t> row_ids;      // D_M rows in evaluation order
  std::vector<std::size_t> row_pattern;  // pattern id per evaluated row
  std::size_t num_complete = 0;
  std::size_t num_patterns = 0;
  std::vector<MetricReport> metrics;
  /// scores[metric][row][algorithm]
  std::vector<std::vector<std::vector<double>>> scores;
  std::vector<std::string> inconsistency_sources;
  std::vector<std::string> warnings;

  const MetricReport& metric(Metric m) const {
    for (const auto& r : metrics)
      if (r.metric == m) return r;
    throw ContractError("metric '" + std::string(metric_name(m)) + "' was not evaluated");
  }

  std::size_t algorithm_index(const std::string& name) const {
    for (std::size_t i = 0; i < algorithms.size(); ++i)
      if (algorithms[i] == name) return i;
    throw ContractError("unknown algorithm '" + name + "'");
  }
};

namespace detail {

enum SeedPurpose : std::uint64_t { kSeedMcar = 1, kSeedReference = 2, kSeedImpute = 3 };

template <class F>
auto run_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(stage, e.what());
  }
}

}  // namespace detail

/// The conditional model of the true distribution: one MRF per pattern or a
/// single shared one.
class ReferenceModel {
 public:
  ReferenceModel(ModelScope scope, const Dataset& data, std::span<const std::size_t> training_rows,
                 const PatternCatalog& catalog, const TrainConfig& cfg, std::size_t threads)
      : scope_(scope) {
    if (scope == ModelScope::SingleModel) {
      models_.push_back(train_single_model(data, training_rows, catalog, cfg));
    } else {
      models_.resize(catalog.size());
      parallel_for(catalog.size(), threads, [&](std::size_t j) {
        models_[j] = train_per_pattern(data, training_rows, catalog.groups[j].pattern, cfg);
      });
    }
  }

  const MrfParams& for_pattern(std::size_t pattern_id) const {
    return scope_ == ModelScope::SingleModel ? models_.front() : models_.at(pattern_id);
  }

 private:
  ModelScope scope_;
  std::vector<MrfParams> models_;
};

/// Steps after loading: split, train, sample, score, rank. `data` already
/// carries its missingness mask; `truth` is needed only by true_sampler.
inline EvaluationReport evaluate_dataset(const RunConfig& cfg, const Dataset& data, const GroundTruth* truth) {
  cfg.validate();
  EvaluationReport rep;
  rep.config = cfg;
  for (const auto& a : cfg.algorithms) rep.algorithms.push_back(a.name);

  const RowSplit split = detail::run_stage("split", [&] { return split_rows(data); });
  if (split.incomplete.size() < 2)
    throw PipelineError("split", "need at least two rows with missing values to rank algorithms");
  const PatternCatalog catalog = detail::run_stage("patterns", [&] { return extract_patterns(data, split.incomplete); });
  rep.num_complete = split.complete.size();
  rep.num_patterns = catalog.size();
  for (std::size_t j = 0; j < catalog.size(); ++j) {
    const auto& g = catalog.groups[j];
    if (split.complete.size() < 10 * g.pattern.missing().size())
      rep.warnings.push_back("pattern " + std::to_string(j) + " (" + std::to_string(g.pattern.missing().size()) +
                             " missing columns) has only " + std::to_string(split.complete.size()) +
                             " training rows");
  }

  std::vector<std::size_t> all_rows;
  if (cfg.train_on == TrainOn::FullPreInjection) {
    all_rows.resize(data.rows());
    std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
  }
  const std::span<const std::size_t> model_rows =
      cfg.train_on == TrainOn::CompleteRows ? std::span<const std::size_t>(split.complete) : all_rows;
  const ReferenceModel model = detail::run_stage("train", [&] {
    return ReferenceModel(cfg.model, data, model_rows, catalog, cfg.train, cfg.threads);
  });

  std::vector<std::unique_ptr<Imputer>> imputers;
  detail::run_stage("fit", [&] {
    for (std::size_t a = 0; a < cfg.algorithms.size(); ++a) {
      imputers.push_back(make_imputer(cfg.algorithms[a], cfg.seed, a, truth));
      imputers.back()->fit(data, split.complete);
    }
    return 0;
  });

  // Row order: pattern-major is avoided so reports follow dataset order.
  rep.row_ids = split.incomplete;
  rep.row_pattern.resize(rep.row_ids.size());
  for (std::size_t j = 0; j < catalog.size(); ++j)
    for (std::size_t r : catalog.groups[j].rows)
      rep.row_pattern[static_cast<std::size_t>(
          std::lower_bound(rep.row_ids.begin(), rep.row_ids.end(), r) - rep.row_ids.begin())] = j;

  const std::size_t N = rep.row_ids.size();
  const std::size_t K = cfg.algorithms.size();
  const std::size_t M = cfg.metrics.size();
  rep.scores.assign(M, std::vector<std::vector<double>>(N, std::vector<double>(K, 0.0)));
  std::vector<std::vector<std::uint8_t>> unconverged(M, std::vector<std::uint8_t>(N, 0));
  const std::size_t keep_rows = cfg.inconsistency.enabled ? std::min(cfg.inconsistency.max_rows, N) : 0;
  std::vector<std::vector<SampleSet>> kept(keep_rows);

  GibbsConfig gibbs;
  gibbs.burn_in = cfg.gibbs_burn_in;
  gibbs.thin = cfg.gibbs_thin;
  gibbs.num_samples = cfg.L;

  detail::run_stage("score", [&] {
    parallel_for(N, cfg.threads, [&](std::size_t i) {
      const std::size_t r = rep.row_ids[i];
      const auto& pattern = catalog.groups[rep.row_pattern[i]].pattern;
      const auto observed = data.observed_values(r);
      GibbsConfig g = gibbs;
      g.seed = derive_seed(cfg.seed, {r, 0, detail::kSeedReference});
      SampleSet ref = gibbs_sample(model.for_pattern(rep.row_pattern[i]), observed, pattern, g);
      std::vector<SampleSet> sets;
      sets.reserve(K + 1);
      for (std::size_t a = 0; a < K; ++a) {
        const auto seed = derive_seed(cfg.seed, {r, a + 1, detail::kSeedImpute, cfg.algorithms[a].seed});
        sets.push_back(imputers[a]->impute(observed, pattern, cfg.L, seed));
        if (sets.back().size() != cfg.L) throw InternalError("imputer returned the wrong number of samples");
      }
      for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t a = 0; a < K; ++a) {
          const auto s = cfg.metric_settings.score(cfg.metrics[m], ref, sets[a]);
          rep.scores[m][i][a] = s.value;
          if (!s.converged) unconverged[m][i] = 1;
        }
      }
      if (i < keep_rows) {
        if (cfg.inconsistency.include_reference) sets.push_back(std::move(ref));
        kept[i] = std::move(sets);
      }
    });
    return 0;
  });

  detail::run_stage("rank", [&] {
    for (std::size_t m = 0; m < M; ++m) {
      MetricReport mr;
      mr.metric = cfg.metrics[m];
      mr.ranks = scores_to_ranks(mr.metric, rep.scores[m], K);
      mr.ranking = aggregate(mr.ranks, cfg.beta);
      for (auto u : unconverged[m]) mr.unconverged += u;
      rep.metrics.push_back(std::move(mr));
    }
    return 0;
  });

  if (keep_rows > 0) {
    rep.inconsistency_sources = rep.algorithms;
    if (cfg.inconsistency.include_reference) rep.inconsistency_sources.push_back("reference_model");
    detail::run_stage("inconsistency", [&] {
      std::vector<double> values(M);
      parallel_for(M, cfg.threads, [&](std::size_t m) {
        values[m] = inconsistency_score(kept, cfg.metrics[m], cfg.metric_settings);
      });
      for (std::size_t m = 0; m < M; ++m) rep.metrics[m].inconsistency = values[m];
      return 0;
    });
  }
  for (const auto& mr : rep.metrics)
    if (mr.unconverged > 0)
      rep.warnings.push_back(std::to_string(mr.unconverged) + " rows had a KL solve stop at max_iters");
  return rep;
}

/// Loads or generates the data, injects MCAR missingness, then evaluates.
inline EvaluationReport run_evaluation(const RunConfig& cfg) {
  cfg.validate();
  std::optional<GroundTruth> truth;
  Dataset data = detail::run_stage("load", [&] {
    if (cfg.synthetic) {
      auto [d, t] = generate_synthetic(*cfg.synthetic);
      truth = std::move(t);
      return std::move(d);
    }
    return load_csv(*cfg.csv, cfg.schema);
  });
  if (cfg.missing_rate > 0.0)
    data = detail::run_stage("inject", [&] {
      return inject_mcar(data, cfg.missing_rate, derive_seed(cfg.seed, {detail::kSeedMcar}));
    });
  return evaluate_dataset(cfg, data, truth ? &*truth : nullptr);
}

// ---------------------------------------------------------------------------
// Report serialization.

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline nlohmann::json ranking_json(const EvaluationReport& rep) {
  nlohmann::json j;
  j["algorithms"] = rep.algorithms;
  j["rows"] = rep.row_ids.size();
  j["complete_rows"] = rep.num_complete;
  j["patterns"] = rep.num_patterns;
  j["model"] = to_string(rep.config.model);
  for (const auto& mr : rep.metrics) {
    const auto& r = mr.ranking;
    nlohmann::json b;
    b["avg_ranks"] = r.avg_ranks;
    b["friedman_stat"] = r.friedman_stat;
    b["friedman_critical"] = r.friedman_critical;
    b["reject"] = r.reject_null;
    b["cd"] = r.cd;
    b["beta"] = r.beta;
    nlohmann::json pairs = nlohmann::json::array();
    for (auto [a, c] : r.significant_pairs) pairs.push_back({rep.algorithms[a], rep.algorithms[c]});
    b["significant_pairs"] = pairs;
    nlohmann::json order = nlohmann::json::array();
    for (std::size_t a : ordering_of(r.avg_ranks)) order.push_back(rep.algorithms[a]);
    b["ordering"] = order;
    if (mr.inconsistency) b["inconsistency"] = *mr.inconsistency;
    b["kl_unconverged_rows"] = mr.unconverged;
    j["metrics"][std::string(metric_name(mr.metric))] = b;
  }
  if (!rep.inconsistency_sources.empty()) j["inconsistency_sources"] = rep.inconsistency_sources;
  return j;
}

inline std::string ranks_csv(const EvaluationReport& rep) {
  std::ostringstream out;
  out << "metric,row_id,pattern_id";
  for (const auto& a : rep.algorithms) out << ',' << a;
  out << '\n';
  for (const auto& mr : rep.metrics) {
    for (std::size_t i = 0; i < mr.ranks.rows; ++i) {
      out << metric_name(mr.metric) << ',' << rep.row_ids[i] << ',' << rep.row_pattern[i];
      for (std::size_t a = 0; a < mr.ranks.cols; ++a) out << ',' << detail::format_double(mr.ranks.at(i, a));
      out << '\n';
    }
  }
  return out.str();
}

inline std::string scores_csv(const EvaluationReport& rep) {
  std::ostringstream out;
  out << "row_id,pattern_id,algorithm,metric,value\n";
  for (std::size_t i = 0; i < rep.row_ids.size(); ++i)
    for (std::size_t a = 0; a < rep.algorithms.size(); ++a)
      for (std::size_t m = 0; m < rep.metrics.size(); ++m)
        out << rep.row_ids[i] << ',' << rep.row_pattern[i] << ',' << rep.algorithms[a] << ','
            << metric_name(rep.metrics[m].metric) << ',' << detail::format_double(rep.scores[m][i][a]) << '\n';
  return out.str();
}

inline nlohmann::json manifest_json(const EvaluationReport& rep) {
  return {{"tool", "imputerank"},
          {"version", kVersion},
          {"seed", rep.config.seed},
          {"config", to_json(rep.config)},
          {"counts", {{"complete_rows", rep.num_complete}, {"evaluated_rows", rep.row_ids.size()},
                      {"patterns", rep.num_patterns}}},
          {"warnings", rep.warnings}};
}

inline constexpr std::array<const char*, 4> kReportFiles{"ranking.json", "ranks.csv", "scores.csv",
                                                         "run_manifest.json"};

namespace detail {

/// Writes every file under a temporary name, then renames them into place.
/// On failure the temporaries and any files already moved into place by this
/// call are removed, so no partial report set survives.
inline void write_files_atomically(const std::filesystem::path& dir,
                                   const std::vector<std::pair<std::string, std::string>>& files) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create '" + dir.string() + "': " + ec.message());
  std::vector<fs::path> temps, placed;
  try {
    for (const auto& [name, body] : files) {
      const fs::path tmp = dir / ("." + name + ".tmp");
      temps.push_back(tmp);
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("cannot write '" + tmp.string() + "'");
      out << body;
      out.close();
      if (!out) throw Error("failed writing '" + tmp.string() + "'");
    }
    for (std::size_t i = 0; i < files.size(); ++i) {
      fs::rename(temps[i], dir / files[i].first, ec);
      if (ec) throw Error("cannot replace '" + (dir / files[i].first).string() + "': " + ec.message());
      placed.push_back(dir / files[i].first);
    }
  } catch (...) {
    for (const auto& t : temps) fs::remove(t, ec);
    for (const auto& f : placed) fs::remove(f, ec);
    throw;
  }
}

}  // namespace detail

/// Writes ranking.json, ranks.csv, scores.csv and run_manifest.json.
inline std::vector<std::filesystem::path> emit_report(const EvaluationReport& rep, const std::filesystem::path& dir) {
  detail::write_files_atomically(dir, {{"ranking.json", ranking_json(rep).dump(2) + "\n"},
                                       {"ranks.csv", ranks_csv(rep)},
                                       {"scores.csv", scores_csv(rep)},
                                       {"run_manifest.json", manifest_json(rep).dump(2) + "\n"}});
  std::vector<std::filesystem::path> out;
  for (const char* f : kReportFiles) out.push_back(dir / f);
  return out;
}

// ---------------------------------------------------------------------------
// Per-pattern versus single-model comparison.

struct MetricComparison {
  Metric metric = Metric::Nds;
  double percent_change = 0.0;  // mean over algorithms of |r_pp - r_single| / r_pp * 100
  std::vector<std::string> ordering_per_pattern;
  std::vector<std::string> ordering_single;
  bool identical_ordering = false;
  /// Pairs significantly different under both models whose order flips.
  std::vector<std::pair<std::string, std::string>> significant_reversals;
};

struct ModelComparisonReport {
  EvaluationReport per_pattern;
  EvaluationReport single_model;
  std::vector<MetricComparison> metrics;
  bool single_pattern = false;  // J = 1: both variants share one pattern's conditionals
  bool all_identical() const {
    return std::all_of(metrics.begin(), metrics.end(), [](const auto& m) { return m.identical_ordering; });
  }
};

inline ModelComparisonReport compare_models(const RunConfig& cfg) {
  ModelComparisonReport out;
  RunConfig pp = cfg;
  pp.model = ModelScope::PerPattern;
  RunConfig sm = cfg;
  sm.model = ModelScope::SingleModel;
  out.per_pattern = run_evaluation(pp);
  out.single_model = run_evaluation(sm);
  out.single_pattern = out.per_pattern.num_patterns == 1;
  const auto& names = out.per_pattern.algorithms;
  for (std::size_t m = 0; m < cfg.metrics.size(); ++m) {
    const auto& a = out.per_pattern.metrics[m].ranking;
    const auto& b = out.single_model.metrics[m].ranking;
    MetricComparison mc;
    mc.metric = cfg.metrics[m];
    double pct = 0.0;
    for (std::size_t k = 0; k < names.size(); ++k) pct += std::abs(a.avg_ranks[k] - b.avg_ranks[k]) / a.avg_ranks[k];
    mc.percent_change = 100.0 * pct / static_cast<double>(names.size());
    for (std::size_t k : ordering_of(a.avg_ranks)) mc.ordering_per_pattern.push_back(names[k]);
    for (std::size_t k : ordering_of(b.avg_ranks)) mc.ordering_single.push_back(names[k]);
    mc.identical_ordering = mc.ordering_per_pattern == mc.ordering_single;
    for (std::size_t x = 0; x < names.size(); ++x)
      for (std::size_t y = x + 1; y < names.size(); ++y)
        if (a.significantly_different(x, y) && b.significantly_different(x, y) &&
            (a.avg_ranks[x] < a.avg_ranks[y]) != (b.avg_ranks[x] < b.avg_ranks[y]))
          mc.significant_reversals.emplace_back(names[x], names[y]);
    out.metrics.push_back(std::move(mc));
  }
  return out;
}

inline nlohmann::json comparison_json(const ModelComparisonReport& r) {
  nlohmann::json j;
  j["single_pattern"] = r.single_pattern;
  j["all_identical"] = r.all_identical();
  for (const auto& m : r.metrics) {
    nlohmann::json reversals = nlohmann::json::array();
    for (const auto& [x, y] : m.significant_reversals) reversals.push_back({x, y});
    j["metrics"][std::string(metric_name(m.metric))] = {{"percent_change", m.percent_change},
                                                        {"ordering_per_pattern", m.ordering_per_pattern},
                                                        {"ordering_single_model", m.ordering_single},
                                                        {"identical_ordering", m.identical_ordering},
                                                        {"significant_reversals", reversals}};
  }
  return j;
}

/// Writes per_pattern/ and single_model/ report sets plus model_comparison.json.
inline void emit_comparison(const ModelComparisonReport& r, const std::filesystem::path& dir) {
  emit_report(r.per_pattern, dir / "per_pattern");
  emit_report(r.single_model, dir / "single_model");
  detail::write_files_atomically(dir, {{"model_comparison.json", comparison_json(r).dump(2) + "\n"}});
}

}  // namespace imputerank
