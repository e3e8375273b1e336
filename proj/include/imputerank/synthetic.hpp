#pragma once

// Synthetic categorical data drawn from a finite mixture of product
// multinomials. The generator doubles as the ground truth: conditionals
// P(Y_m | Y_o) are available in closed form.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "imputerank/dataset.hpp"
#include "imputerank/error.hpp"
#include "imputerank/random.hpp"

namespace imputerank {

struct MixtureComponent {
  double prior = 1.0;
  std::vector<std::vector<double>> columns;  // columns[k][l] = P(y_k = l | component)
};

struct SyntheticSpec {
  std::vector<int> cardinalities;
  std::vector<MixtureComponent> components;
  std::size_t rows = 0;
  std::uint64_t seed = 0;

  std::size_t num_cols() const noexcept { return cardinalities.size(); }

  void validate() const {
    if (cardinalities.empty()) throw ContractError("synthetic spec needs at least one column");
    for (int c : cardinalities)
      if (c < 2) throw ContractError("synthetic cardinalities must be >= 2");
    if (components.empty()) throw ContractError("synthetic spec needs at least one component");
    double prior_sum = 0.0;
    for (const auto& comp : components) {
      if (!(comp.prior >= 0.0)) throw ContractError("component prior must be nonnegative");
      prior_sum += comp.prior;
      if (comp.columns.size() != cardinalities.size()) throw ContractError("component column count mismatch");
      for (std::size_t k = 0; k < cardinalities.size(); ++k) {
        const auto& p = comp.columns[k];
        if (static_cast<int>(p.size()) != cardinalities[k])
          throw ContractError("component multinomial size mismatch in column " + std::to_string(k));
        double s = 0.0;
        for (double v : p) {
          if (!(v >= 0.0)) throw ContractError("multinomial probabilities must be nonnegative");
          s += v;
        }
        if (std::abs(s - 1.0) > 1e-12) throw ContractError("multinomial in column " + std::to_string(k) +
                                                           " does not sum to 1");
      }
    }
    if (std::abs(prior_sum - 1.0) > 1e-12) throw ContractError("component priors do not sum to 1");
  }
};

/// Exact access to the generating distribution.
class GroundTruth {
 public:
  GroundTruth() = default;
  explicit GroundTruth(SyntheticSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

  const SyntheticSpec& spec() const noexcept { return spec_; }
  std::size_t num_cols() const noexcept { return spec_.num_cols(); }

  /// P(component | y_o). Observed entries are those != kUnassigned.
  std::vector<double> component_posterior(std::span<const int> observed) const {
    check_width(observed);
    const auto& comps = spec_.components;
    std::vector<double> logw(comps.size());
    double best = -INFINITY;
    for (std::size_t c = 0; c < comps.size(); ++c) {
      double lw = std::log(comps[c].prior);
      for (std::size_t k = 0; k < observed.size(); ++k)
        if (observed[k] != kUnassigned) lw += std::log(comps[c].columns[k][observed[k]]);
      logw[c] = lw;
      best = std::max(best, lw);
    }
    std::vector<double> post(comps.size());
    if (best == -INFINITY) {
      // Observed values impossible under every component: fall back to priors.
      for (std::size_t c = 0; c < comps.size(); ++c) post[c] = comps[c].prior;
      return post;
    }
    double z = 0.0;
    for (std::size_t c = 0; c < comps.size(); ++c) z += post[c] = std::exp(logw[c] - best);
    for (double& p : post) p /= z;
    return post;
  }

  /// P(y_m = values | y_o) where `missing` lists the columns of `values`.
  double conditional_probability(std::span<const int> observed, std::span<const std::size_t> missing,
                                 std::span<const int> values) const {
    const auto post = component_posterior(observed);
    double p = 0.0;
    for (std::size_t c = 0; c < post.size(); ++c) {
      double term = post[c];
      for (std::size_t j = 0; j < missing.size(); ++j) term *= spec_.components[c].columns[missing[j]][values[j]];
      p += term;
    }
    return p;
  }

  /// Draws Y_m ~ P(Y_m | Y_o): component from its posterior, then columns.
  std::vector<int> sample_conditional(std::span<const int> observed, std::span<const std::size_t> missing,
                                      Rng& rng) const {
    const auto post = component_posterior(observed);
    return sample_given_posterior(post, missing, rng);
  }

  std::vector<int> sample_given_posterior(std::span<const double> posterior, std::span<const std::size_t> missing,
                                          Rng& rng) const {
    const std::size_t c = rng.categorical(posterior);
    std::vector<int> out(missing.size());
    for (std::size_t j = 0; j < missing.size(); ++j)
      out[j] = static_cast<int>(rng.categorical(spec_.components[c].columns[missing[j]]));
    return out;
  }

 private:
  void check_width(std::span<const int> observed) const {
    if (observed.size() != num_cols()) throw ContractError("observed vector has wrong width");
  }

  SyntheticSpec spec_;
};

inline std::vector<ColumnSpec> synthetic_columns(const std::vector<int>& cardinalities) {
  std::vector<ColumnSpec> cols;
  for (std::size_t k = 0; k < cardinalities.size(); ++k) {
    ColumnSpec c{"c" + std::to_string(k), cardinalities[k], {}};
    for (int l = 0; l < cardinalities[k]; ++l) c.levels.push_back(std::to_string(l));
    cols.push_back(std::move(c));
  }
  return cols;
}

inline std::pair<Dataset, GroundTruth> generate_synthetic(const SyntheticSpec& spec) {
  GroundTruth truth(spec);
  Dataset data(synthetic_columns(spec.cardinalities), spec.rows);
  Rng rng(spec.seed);
  std::vector<double> priors;
  for (const auto& comp : spec.components) priors.push_back(comp.prior);
  for (std::size_t r = 0; r < spec.rows; ++r) {
    const auto& comp = spec.components[rng.categorical(priors)];
    for (std::size_t k = 0; k < spec.num_cols(); ++k)
      data.set_cell(r, k, static_cast<int>(rng.categorical(comp.columns[k])));
  }
  return {std::move(data), std::move(truth)};
}

inline void from_json(const nlohmann::json& j, MixtureComponent& c) {
  j.at("prior").get_to(c.prior);
  j.at("columns").get_to(c.columns);
}

inline void to_json(nlohmann::json& j, const MixtureComponent& c) {
  j = nlohmann::json{{"prior", c.prior}, {"columns", c.columns}};
}

inline void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  j.at("cardinalities").get_to(s.cardinalities);
  j.at("components").get_to(s.components);
  j.at("rows").get_to(s.rows);
  s.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("d") && j.at("d").get<std::size_t>() != s.cardinalities.size())
    throw ContractError("synthetic spec 'd' disagrees with cardinalities");
}

inline void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = nlohmann::json{{"d", s.cardinalities.size()},
                     {"cardinalities", s.cardinalities},
                     {"components", s.components},
                     {"rows", s.rows},
                     {"seed", s.seed}};
}

}  // namespace imputerank
