#pragma once

// Conditional pairwise Markov random fields over categorical columns:
// unary weights per (column, level) and pairwise weights per
// (column pair, level pair). Trained by L2-regularized pseudo-likelihood,
// sampled by single-site Gibbs sweeps over the missing columns.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "imputerank/dataset.hpp"
#include "imputerank/error.hpp"
#include "imputerank/optimize.hpp"
#include "imputerank/random.hpp"
#include "imputerank/sample_set.hpp"

namespace imputerank {

enum class ModelScope { PerPattern, SingleModel };

inline const char* to_string(ModelScope s) { return s == ModelScope::PerPattern ? "per_pattern" : "single_model"; }

struct TrainConfig {
  double l2 = 1e-2;
  double step = 1.0;
  std::size_t max_iters = 500;  // 0 returns the all-zero initialization
  double tol = 1e-5;
  std::uint64_t seed = 0;       // the optimizer is deterministic; kept for manifests

  void validate() const {
    if (!(l2 >= 0.0)) throw ContractError("l2 must be nonnegative");
    if (!(step > 0.0)) throw ContractError("step must be positive");
    if (!(tol > 0.0)) throw ContractError("tol must be positive");
  }
};

struct GibbsConfig {
  std::size_t burn_in = 100;
  std::size_t thin = 10;
  std::size_t num_samples = 25;
  std::uint64_t seed = 0;

  void validate() const {
    if (thin < 1) throw ContractError("thin must be >= 1");
    if (num_samples < 1) throw ContractError("num_samples must be >= 1");
  }
};

/// Weights of a conditional pairwise MRF stored in one flat vector.
/// Pairwise blocks are keyed by canonical (a < b) column pairs and laid out
/// row-major over (level of a, level of b).
class MrfParams {
 public:
  /// Edge of the graph seen from one target column.
  struct Neighbor {
    std::size_t column;
    std::size_t offset;    // base of the pair block
    std::size_t stride_target;
    std::size_t stride_neighbor;
  };

  MrfParams() = default;

  static MrfParams per_pattern(std::vector<int> cardinalities, MissingPattern pattern) {
    if (pattern.num_cols() != cardinalities.size()) throw ContractError("pattern width mismatch");
    MrfParams p;
    p.scope_ = ModelScope::PerPattern;
    p.cards_ = std::move(cardinalities);
    std::vector<bool> target(p.cards_.size(), false);
    for (std::size_t k : pattern.missing()) target[k] = true;
    p.pattern_ = std::move(pattern);
    p.build(target);
    return p;
  }

  static MrfParams single_model(std::vector<int> cardinalities) {
    MrfParams p;
    p.scope_ = ModelScope::SingleModel;
    p.cards_ = std::move(cardinalities);
    p.build(std::vector<bool>(p.cards_.size(), true));
    return p;
  }

  ModelScope scope() const noexcept { return scope_; }
  const std::optional<MissingPattern>& pattern() const noexcept { return pattern_; }
  const std::vector<int>& cardinalities() const noexcept { return cards_; }
  std::size_t num_cols() const noexcept { return cards_.size(); }

  bool is_target(std::size_t k) const { return unary_off_[k] >= 0; }
  bool has_pair(std::size_t a, std::size_t b) const { return a != b && pair_off(a, b) >= 0; }

  /// Column pairs (a < b) that carry weights.
  std::vector<std::pair<std::size_t, std::size_t>> pairs() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t a = 0; a < num_cols(); ++a)
      for (std::size_t b = a + 1; b < num_cols(); ++b)
        if (pair_off(a, b) >= 0) out.emplace_back(a, b);
    return out;
  }

  double unary(std::size_t k, int l) const { return weights_[unary_index(k, l)]; }
  void set_unary(std::size_t k, int l, double w) { weights_[unary_index(k, l)] = w; }

  double pairwise(std::size_t a, int la, std::size_t b, int lb) const { return weights_[pair_index(a, la, b, lb)]; }
  void set_pairwise(std::size_t a, int la, std::size_t b, int lb, double w) {
    weights_[pair_index(a, la, b, lb)] = w;
  }

  std::span<const double> weights() const noexcept { return weights_; }
  std::span<double> weights() noexcept { return weights_; }

  std::size_t unary_offset(std::size_t k) const {
    if (unary_off_[k] < 0) throw ContractError("column " + std::to_string(k) + " is not a target of this model");
    return static_cast<std::size_t>(unary_off_[k]);
  }
  const std::vector<Neighbor>& neighbors(std::size_t k) const { return neighbors_[k]; }

  /// Number of pairwise weights (for bookkeeping/tests).
  std::size_t num_pairwise() const noexcept { return weights_.size() - num_unary_; }

 private:
  std::ptrdiff_t pair_off(std::size_t a, std::size_t b) const {
    if (a > b) std::swap(a, b);
    return pair_off_[a * num_cols() + b];
  }

  std::size_t unary_index(std::size_t k, int l) const {
    if (k >= num_cols() || l < 0 || l >= cards_[k]) throw ContractError("unary key out of range");
    return unary_offset(k) + static_cast<std::size_t>(l);
  }

  std::size_t pair_index(std::size_t a, int la, std::size_t b, int lb) const {
    if (a >= num_cols() || b >= num_cols() || a == b) throw ContractError("pairwise key out of range");
    if (a > b) {
      std::swap(a, b);
      std::swap(la, lb);
    }
    if (la < 0 || la >= cards_[a] || lb < 0 || lb >= cards_[b]) throw ContractError("pairwise level out of range");
    const auto off = pair_off(a, b);
    if (off < 0) throw ContractError("pair (" + std::to_string(a) + "," + std::to_string(b) + ") not in model");
    return static_cast<std::size_t>(off) + static_cast<std::size_t>(la * cards_[b] + lb);
  }

  void build(const std::vector<bool>& target) {
    const std::size_t d = cards_.size();
    for (int c : cards_)
      if (c < 2) throw ContractError("cardinality must be >= 2");
    unary_off_.assign(d, -1);
    pair_off_.assign(d * d, -1);
    std::size_t off = 0;
    for (std::size_t k = 0; k < d; ++k) {
      if (!target[k]) continue;
      unary_off_[k] = static_cast<std::ptrdiff_t>(off);
      off += static_cast<std::size_t>(cards_[k]);
    }
    num_unary_ = off;
    // No edges between two conditioning columns: they are constants.
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = a + 1; b < d; ++b) {
        if (!target[a] && !target[b]) continue;
        pair_off_[a * d + b] = static_cast<std::ptrdiff_t>(off);
        off += static_cast<std::size_t>(cards_[a] * cards_[b]);
      }
    }
    weights_.assign(off, 0.0);
    neighbors_.assign(d, {});
    for (std::size_t k = 0; k < d; ++k) {
      if (!target[k]) continue;
      for (std::size_t j = 0; j < d; ++j) {
        if (j == k || pair_off(k, j) < 0) continue;
        const auto base = static_cast<std::size_t>(pair_off(k, j));
        if (k < j) {
          neighbors_[k].push_back({j, base, static_cast<std::size_t>(cards_[j]), 1});
        } else {
          neighbors_[k].push_back({j, base, 1, static_cast<std::size_t>(cards_[k])});
        }
      }
    }
  }

  ModelScope scope_ = ModelScope::SingleModel;
  std::optional<MissingPattern> pattern_;
  std::vector<int> cards_;
  std::vector<std::ptrdiff_t> unary_off_;
  std::vector<std::ptrdiff_t> pair_off_;
  std::vector<std::vector<Neighbor>> neighbors_;
  std::vector<double> weights_;
  std::size_t num_unary_ = 0;
};

namespace detail {

/// Unnormalized log-probabilities of column k given the other values,
/// reading weights from `theta` (laid out as in `params`).
inline void conditional_logits(const MrfParams& params, std::span<const double> theta, std::span<const int> values,
                               std::size_t k, std::span<double> out) {
  const int card = params.cardinalities()[k];
  const std::size_t u = params.unary_offset(k);
  for (int l = 0; l < card; ++l) out[l] = theta[u + l];
  for (const auto& nb : params.neighbors(k)) {
    const int v = values[nb.column];
    if (v < 0 || v >= params.cardinalities()[nb.column])
      throw ContractError("neighbor column " + std::to_string(nb.column) + " is unassigned");
    const std::size_t base = nb.offset + static_cast<std::size_t>(v) * nb.stride_neighbor;
    for (int l = 0; l < card; ++l) out[l] += theta[base + static_cast<std::size_t>(l) * nb.stride_target];
  }
}

/// In-place softmax; returns log of the normalizer.
inline double softmax_inplace(std::span<double> x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  double z = 0.0;
  for (double& v : x) z += v = std::exp(v - mx);
  for (double& v : x) v /= z;
  return mx + std::log(z);
}

}  // namespace detail

/// P(y_k | all other columns). `values` must assign every neighbor of k;
/// the entry at k itself is ignored.
inline std::vector<double> conditional_distribution(const MrfParams& params, std::span<const int> values,
                                                    std::size_t k) {
  if (values.size() != params.num_cols()) throw ContractError("assignment has wrong width");
  if (k >= params.num_cols() || !params.is_target(k)) throw ContractError("column is outside the model's scope");
  std::vector<double> p(static_cast<std::size_t>(params.cardinalities()[k]));
  detail::conditional_logits(params, params.weights(), values, k, p);
  detail::softmax_inplace(p);
  return p;
}

/// Fully observed training rows packed row-major.
struct TrainingRows {
  std::size_t cols = 0;
  std::vector<int> values;

  std::size_t size() const noexcept { return cols == 0 ? 0 : values.size() / cols; }
  std::span<const int> row(std::size_t i) const { return {values.data() + i * cols, cols}; }

  /// Reads raw cell values of `rows`. Values retained under the mask (after
  /// MCAR injection) are accepted; unassigned cells are not.
  static TrainingRows from(const Dataset& data, std::span<const std::size_t> rows) {
    TrainingRows t;
    t.cols = data.cols();
    t.values.reserve(rows.size() * t.cols);
    for (std::size_t r : rows) {
      auto raw = data.raw_row(r);
      for (std::size_t c = 0; c < raw.size(); ++c) {
        if (raw[c] < 0 || raw[c] >= data.cardinality(c))
          throw ContractError("training row " + std::to_string(r) + " has an unassigned cell");
      }
      t.values.insert(t.values.end(), raw.begin(), raw.end());
    }
    return t;
  }
};

/// Mean pseudo-log-likelihood over the model's target columns minus
/// (l2/2)||theta||^2. Fills `grad` when non-empty.
inline double pseudo_likelihood(const MrfParams& params, std::span<const double> theta, const TrainingRows& rows,
                                double l2, std::span<double> grad) {
  const std::size_t d = params.num_cols();
  const bool want_grad = !grad.empty();
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
  const std::size_t n = rows.size();
  const double inv_n = n ? 1.0 / static_cast<double>(n) : 0.0;
  int max_card = 0;
  for (int c : params.cardinalities()) max_card = std::max(max_card, c);
  std::vector<double> buf(static_cast<std::size_t>(max_card));

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto y = rows.row(i);
    for (std::size_t k = 0; k < d; ++k) {
      if (!params.is_target(k)) continue;
      const int card = params.cardinalities()[k];
      std::span<double> logits(buf.data(), static_cast<std::size_t>(card));
      detail::conditional_logits(params, theta, y, k, logits);
      const double picked = logits[y[k]];
      const double log_z = detail::softmax_inplace(logits);
      total += picked - log_z;
      if (!want_grad) continue;
      // logits now holds probabilities
      const std::size_t u = params.unary_offset(k);
      for (int l = 0; l < card; ++l) {
        const double coef = ((l == y[k]) ? 1.0 : 0.0) - logits[l];
        grad[u + l] += coef * inv_n;
      }
      for (const auto& nb : params.neighbors(k)) {
        const std::size_t base = nb.offset + static_cast<std::size_t>(y[nb.column]) * nb.stride_neighbor;
        for (int l = 0; l < card; ++l) {
          const double coef = ((l == y[k]) ? 1.0 : 0.0) - logits[l];
          grad[base + static_cast<std::size_t>(l) * nb.stride_target] += coef * inv_n;
        }
      }
    }
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    sq += theta[i] * theta[i];
    if (want_grad) grad[i] -= l2 * theta[i];
  }
  return total * inv_n - 0.5 * l2 * sq;
}

struct TrainReport {
  double objective = 0.0;
  double grad_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // accepted objective values
};

/// Maximizes the pseudo-likelihood of `structure`'s target columns, starting
/// from all-zero weights.
inline MrfParams train_mrf(MrfParams structure, const TrainingRows& rows, const TrainConfig& cfg,
                           TrainReport* report = nullptr) {
  cfg.validate();
  if (rows.size() == 0) throw InsufficientDataError("no training rows");
  std::fill(structure.weights().begin(), structure.weights().end(), 0.0);
  optim::Options opt;
  opt.step = cfg.step;
  opt.max_iters = cfg.max_iters;
  opt.tol = cfg.tol;
  opt.keep_trace = report != nullptr;
  auto objective = [&](std::span<const double> theta, std::span<double> grad) {
    return pseudo_likelihood(structure, theta, rows, cfg.l2, grad);
  };
  auto res = optim::maximize(objective, std::vector<double>(structure.weights().size(), 0.0), opt);
  if (!std::isfinite(res.value)) throw TrainingDivergedError("pseudo-likelihood is not finite");
  for (double w : res.x)
    if (!std::isfinite(w)) throw TrainingDivergedError("non-finite MRF weight");
  std::copy(res.x.begin(), res.x.end(), structure.weights().begin());
  if (report) {
    report->objective = res.value;
    report->grad_norm = res.grad_norm;
    report->iterations = res.iterations;
    report->converged = res.converged;
    report->trace = std::move(res.trace);
  }
  return structure;
}

/// Model for one missing pattern: targets are the missing columns, edges
/// join missing-missing and missing-observed pairs.
inline MrfParams train_per_pattern(const Dataset& data, std::span<const std::size_t> training_rows,
                                   const MissingPattern& pattern, const TrainConfig& cfg,
                                   TrainReport* report = nullptr) {
  if (training_rows.empty()) throw InsufficientDataError("per-pattern training needs at least one row");
  if (pattern.num_cols() != data.cols()) throw ContractError("pattern does not match dataset width");
  return train_mrf(MrfParams::per_pattern(data.cardinalities(), pattern), TrainingRows::from(data, training_rows),
                   cfg, report);
}

/// One model usable for every pattern: all columns are targets on a
/// complete graph. `catalog` is only validated against the dataset.
inline MrfParams train_single_model(const Dataset& data, std::span<const std::size_t> training_rows,
                                    const PatternCatalog& catalog, const TrainConfig& cfg,
                                    TrainReport* report = nullptr) {
  if (training_rows.empty()) throw InsufficientDataError("single-model training needs at least one row");
  for (const auto& g : catalog.groups)
    if (g.pattern.num_cols() != data.cols()) throw ContractError("catalog pattern does not match dataset width");
  return train_mrf(MrfParams::single_model(data.cardinalities()), TrainingRows::from(data, training_rows), cfg,
                   report);
}

/// Draws `cfg.num_samples` imputations of `pattern.missing()` given the
/// observed entries of `observed` (full-width vector; missing entries are
/// ignored).
inline SampleSet gibbs_sample(const MrfParams& params, std::span<const int> observed, const MissingPattern& pattern,
                              const GibbsConfig& cfg) {
  cfg.validate();
  if (pattern.num_cols() != params.num_cols() || observed.size() != params.num_cols())
    throw ContractError("pattern/observed width does not match the model");
  if (params.scope() == ModelScope::PerPattern && !(params.pattern() && *params.pattern() == pattern))
    throw ContractError("pattern differs from the per-pattern model's scope");
  for (std::size_t k : pattern.missing())
    if (!params.is_target(k)) throw ContractError("missing column is outside the model's scope");
  for (std::size_t k : pattern.observed())
    if (observed[k] < 0 || observed[k] >= params.cardinalities()[k])
      throw ContractError("observed column " + std::to_string(k) + " is unassigned");

  const auto& miss = pattern.missing();
  Rng rng(cfg.seed);
  std::vector<int> state(observed.begin(), observed.end());
  int max_card = 0;
  for (int c : params.cardinalities()) max_card = std::max(max_card, c);
  std::vector<double> buf(static_cast<std::size_t>(max_card));

  auto draw = [&](std::size_t k) {
    std::span<double> p(buf.data(), static_cast<std::size_t>(params.cardinalities()[k]));
    detail::conditional_logits(params, params.weights(), state, k, p);
    detail::softmax_inplace(p);
    return static_cast<int>(rng.categorical(p));
  };

  // Start: missing neighbours at a unary-softmax draw, then one conditional
  // draw per missing column against that provisional state.
  for (std::size_t k : miss) {
    std::span<double> p(buf.data(), static_cast<std::size_t>(params.cardinalities()[k]));
    const std::size_t u = params.unary_offset(k);
    for (std::size_t l = 0; l < p.size(); ++l) p[l] = params.weights()[u + l];
    detail::softmax_inplace(p);
    state[k] = static_cast<int>(rng.categorical(p));
  }
  std::vector<int> init(miss.size());
  for (std::size_t j = 0; j < miss.size(); ++j) init[j] = draw(miss[j]);
  for (std::size_t j = 0; j < miss.size(); ++j) state[miss[j]] = init[j];

  auto sweep = [&] {
    for (std::size_t k : miss) state[k] = draw(k);
  };
  for (std::size_t s = 0; s < cfg.burn_in; ++s) sweep();

  SampleSet out(pattern, params.cardinalities());
  out.reserve(cfg.num_samples);
  std::vector<int> kept(miss.size());
  for (std::size_t i = 0; i < cfg.num_samples; ++i) {
    for (std::size_t s = 0; s < cfg.thin; ++s) sweep();
    for (std::size_t j = 0; j < miss.size(); ++j) kept[j] = state[miss[j]];
    out.push_back(kept);
  }
  return out;
}

// JSON persistence. Doubles are written in shortest round-trip form, so a
// save/load cycle is bit-exact.

inline nlohmann::json mrf_to_json(const MrfParams& p, const std::vector<ColumnSpec>* columns = nullptr) {
  nlohmann::json j;
  j["scope"] = to_string(p.scope());
  if (p.pattern()) j["missing"] = p.pattern()->missing();
  nlohmann::json cols = nlohmann::json::array();
  for (std::size_t k = 0; k < p.num_cols(); ++k) {
    nlohmann::json c{{"cardinality", p.cardinalities()[k]}};
    if (columns) c["name"] = (*columns)[k].name;
    cols.push_back(std::move(c));
  }
  j["columns"] = std::move(cols);
  nlohmann::json unary = nlohmann::json::array();
  for (std::size_t k = 0; k < p.num_cols(); ++k) {
    if (!p.is_target(k)) continue;
    std::vector<double> w;
    for (int l = 0; l < p.cardinalities()[k]; ++l) w.push_back(p.unary(k, l));
    unary.push_back({{"column", k}, {"weights", w}});
  }
  j["unary"] = std::move(unary);
  nlohmann::json pairwise = nlohmann::json::array();
  for (auto [a, b] : p.pairs()) {
    std::vector<std::vector<double>> w(static_cast<std::size_t>(p.cardinalities()[a]));
    for (int la = 0; la < p.cardinalities()[a]; ++la)
      for (int lb = 0; lb < p.cardinalities()[b]; ++lb) w[la].push_back(p.pairwise(a, la, b, lb));
    pairwise.push_back({{"columns", {a, b}}, {"weights", w}});
  }
  j["pairwise"] = std::move(pairwise);
  return j;
}

inline MrfParams mrf_from_json(const nlohmann::json& j) {
  std::vector<int> cards;
  for (const auto& c : j.at("columns")) cards.push_back(c.at("cardinality").get<int>());
  const auto scope = j.at("scope").get<std::string>();
  MrfParams p;
  if (scope == "per_pattern") {
    p = MrfParams::per_pattern(cards, MissingPattern(j.at("missing").get<std::vector<std::size_t>>(), cards.size()));
  } else if (scope == "single_model") {
    p = MrfParams::single_model(cards);
  } else {
    throw ParseError("unknown MRF scope '" + scope + "'");
  }
  for (const auto& u : j.at("unary")) {
    const auto k = u.at("column").get<std::size_t>();
    const auto w = u.at("weights").get<std::vector<double>>();
    if (static_cast<int>(w.size()) != cards.at(k)) throw ParseError("unary block has wrong size");
    for (int l = 0; l < cards[k]; ++l) p.set_unary(k, l, w[l]);
  }
  for (const auto& e : j.at("pairwise")) {
    const auto ab = e.at("columns").get<std::vector<std::size_t>>();
    if (ab.size() != 2 || ab[0] >= ab[1]) throw ParseError("pairwise keys must be ordered column pairs");
    const auto w = e.at("weights").get<std::vector<std::vector<double>>>();
    for (int la = 0; la < cards.at(ab[0]); ++la)
      for (int lb = 0; lb < cards.at(ab[1]); ++lb) p.set_pairwise(ab[0], la, ab[1], lb, w.at(la).at(lb));
  }
  for (double w : p.weights())
    if (!std::isfinite(w)) throw ParseError("non-finite MRF weight");
  return p;
}

}  // namespace imputerank
