#pragma once

// Imputation algorithms behind one interface. Every imputer is fitted on
// fully observed rows and, at imputation time, only reads the observed
// columns of the query row.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "imputerank/dataset.hpp"
#include "imputerank/error.hpp"
#include "imputerank/optimize.hpp"
#include "imputerank/random.hpp"
#include "imputerank/sample_set.hpp"
#include "imputerank/synthetic.hpp"

namespace imputerank {

class Imputer {
 public:
  virtual ~Imputer() = default;

  virtual std::string_view kind() const = 0;

  /// Fits on the listed rows. Only unmasked cells are read.
  virtual void fit(const Dataset& data, std::span<const std::size_t> rows) = 0;

  /// Draws `num_samples` completions of `pattern.missing()`. `observed` is a
  /// full-width row; entries at missing positions are never read.
  virtual SampleSet impute(std::span<const int> observed, const MissingPattern& pattern, std::size_t num_samples,
                           std::uint64_t seed) const = 0;

 protected:
  void check_query(std::span<const int> observed, const MissingPattern& pattern) const {
    if (cards_.empty()) throw ContractError(std::string(kind()) + " imputer used before fit");
    if (observed.size() != cards_.size() || pattern.num_cols() != cards_.size())
      throw ContractError("query row width does not match the fitted data");
    for (std::size_t k : pattern.observed())
      if (observed[k] < 0 || observed[k] >= cards_[k])
        throw ContractError("observed column " + std::to_string(k) + " is unassigned");
  }

  /// Packs the listed rows, requiring every cell to be observed.
  std::vector<int> complete_rows(const Dataset& data, std::span<const std::size_t> rows) const {
    std::vector<int> out;
    out.reserve(rows.size() * data.cols());
    for (std::size_t r : rows) {
      if (!data.row_complete(r)) throw ContractError(std::string(kind()) + " fits on fully observed rows only");
      auto raw = data.raw_row(r);
      out.insert(out.end(), raw.begin(), raw.end());
    }
    return out;
  }

  std::vector<int> cards_;
};

// ---------------------------------------------------------------------------

/// Samples every missing column independently from its marginal.
class ModeMeanImputer final : public Imputer {
 public:
  std::string_view kind() const override { return "mode_mean"; }

  void fit(const Dataset& data, std::span<const std::size_t> rows) override {
    cards_ = data.cardinalities();
    probs_.assign(data.cols(), {});
    for (std::size_t k = 0; k < data.cols(); ++k) {
      std::vector<double> counts(static_cast<std::size_t>(cards_[k]), 0.0);
      double total = 0.0;
      for (std::size_t r : rows) {
        if (data.missing(r, k)) continue;
        counts[static_cast<std::size_t>(data.cell(r, k))] += 1.0;
        total += 1.0;
      }
      if (total == 0.0) throw FitError("column '" + data.columns()[k].name + "' has no observed values");
      for (double& c : counts) c /= total;
      probs_[k] = std::move(counts);
    }
  }

  SampleSet impute(std::span<const int> observed, const MissingPattern& pattern, std::size_t num_samples,
                   std::uint64_t seed) const override {
    check_query(observed, pattern);
    Rng rng(seed);
    SampleSet out(pattern, cards_);
    out.reserve(num_samples);
    std::vector<int> s(pattern.missing().size());
    for (std::size_t i = 0; i < num_samples; ++i) {
      for (std::size_t j = 0; j < s.size(); ++j)
        s[j] = static_cast<int>(rng.categorical(probs_[pattern.missing()[j]]));
      out.push_back(s);
    }
    return out;
  }

  const std::vector<double>& marginal(std::size_t k) const { return probs_.at(k); }

 private:
  std::vector<std::vector<double>> probs_;
};

// ---------------------------------------------------------------------------

/// Mixture of product multinomials fitted by EM with random restarts.
class MixtureImputer final : public Imputer {
 public:
  struct Options {
    std::size_t num_components = 5;
    std::size_t em_iters = 100;
    std::size_t restarts = 3;
    std::uint64_t seed = 0;
  };

  MixtureImputer() : MixtureImputer(Options{}) {}
  explicit MixtureImputer(Options opt) : opt_(opt) {
    if (opt_.num_components < 1) throw ContractError("mixture needs at least one component");
    if (opt_.em_iters < 1) throw ContractError("mixture needs at least one EM iteration");
    if (opt_.restarts < 1) throw ContractError("mixture needs at least one restart");
  }

  std::string_view kind() const override { return "mixture"; }

  void fit(const Dataset& data, std::span<const std::size_t> rows) override {
    cards_ = data.cardinalities();
    if (rows.empty()) throw FitError("mixture needs at least one complete row");
    const auto packed = complete_rows(data, rows);
    bool have_best = false;
    for (std::size_t r = 0; r < opt_.restarts; ++r) {
      Fit f = run_em(packed, rows.size(), derive_seed(opt_.seed, {r}));
      if (!have_best || f.loglik.back() > best_.loglik.back()) {
        best_ = std::move(f);
        have_best = true;
      }
    }
  }

  SampleSet impute(std::span<const int> observed, const MissingPattern& pattern, std::size_t num_samples,
                   std::uint64_t seed) const override {
    check_query(observed, pattern);
    const auto post = posterior(observed, pattern);
    Rng rng(seed);
    SampleSet out(pattern, cards_);
    out.reserve(num_samples);
    std::vector<int> s(pattern.missing().size());
    const std::size_t C = best_.prior.size();
    for (std::size_t i = 0; i < num_samples; ++i) {
      const std::size_t c = C == 1 ? 0 : rng.categorical(post);
      for (std::size_t j = 0; j < s.size(); ++j)
        s[j] = static_cast<int>(rng.categorical(best_.columns[c][pattern.missing()[j]]));
      out.push_back(s);
    }
    return out;
  }

  /// P(component | observed columns); falls back to the prior when the
  /// observed values are impossible under every component.
  std::vector<double> posterior(std::span<const int> observed, const MissingPattern& pattern) const {
    const std::size_t C = best_.prior.size();
    std::vector<double> logw(C);
    double best = -INFINITY;
    for (std::size_t c = 0; c < C; ++c) {
      double lw = std::log(best_.prior[c]);
      for (std::size_t k : pattern.observed()) lw += std::log(best_.columns[c][k][observed[k]]);
      logw[c] = lw;
      best = std::max(best, lw);
    }
    if (best == -INFINITY) return best_.prior;
    std::vector<double> post(C);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += post[c] = std::exp(logw[c] - best);
    for (double& p : post) p /= z;
    return post;
  }

  /// Log-likelihood after each EM iteration of the retained restart.
  const std::vector<double>& loglik_trace() const noexcept { return best_.loglik; }
  const std::vector<double>& priors() const noexcept { return best_.prior; }
  const std::vector<double>& component_column(std::size_t c, std::size_t k) const { return best_.columns.at(c).at(k); }

 private:
  struct Fit {
    std::vector<double> prior;
    std::vector<std::vector<std::vector<double>>> columns;  // [c][k][l]
    std::vector<double> loglik;
  };

  void m_step(const std::vector<int>& y, std::size_t n, const std::vector<double>& resp, Fit& f) const {
    const std::size_t C = opt_.num_components, d = cards_.size();
    for (std::size_t c = 0; c < C; ++c) {
      double mass = 0.0;
      for (std::size_t i = 0; i < n; ++i) mass += resp[i * C + c];
      f.prior[c] = mass / static_cast<double>(n);
      for (std::size_t k = 0; k < d; ++k) {
        auto& p = f.columns[c][k];
        std::fill(p.begin(), p.end(), 0.0);
        if (mass == 0.0) {
          std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
          continue;
        }
        for (std::size_t i = 0; i < n; ++i) p[static_cast<std::size_t>(y[i * d + k])] += resp[i * C + c];
        for (double& v : p) v /= mass;
      }
    }
  }

  /// Fills responsibilities, returns the log-likelihood.
  double e_step(const std::vector<int>& y, std::size_t n, const Fit& f, std::vector<double>& resp) const {
    const std::size_t C = opt_.num_components, d = cards_.size();
    std::vector<double> logw(C);
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = -INFINITY;
      for (std::size_t c = 0; c < C; ++c) {
        double lw = std::log(f.prior[c]);
        for (std::size_t k = 0; k < d && lw > -INFINITY; ++k)
          lw += std::log(f.columns[c][k][static_cast<std::size_t>(y[i * d + k])]);
        logw[c] = lw;
        best = std::max(best, lw);
      }
      if (best == -INFINITY) throw InternalError("training row has zero likelihood under every component");
      double z = 0.0;
      for (std::size_t c = 0; c < C; ++c) z += resp[i * C + c] = std::exp(logw[c] - best);
      for (std::size_t c = 0; c < C; ++c) resp[i * C + c] /= z;
      ll += best + std::log(z);
    }
    return ll;
  }

  Fit run_em(const std::vector<int>& y, std::size_t n, std::uint64_t seed) const {
    const std::size_t C = opt_.num_components, d = cards_.size();
    Fit f;
    f.prior.assign(C, 0.0);
    f.columns.assign(C, std::vector<std::vector<double>>(d));
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < d; ++k) f.columns[c][k].assign(static_cast<std::size_t>(cards_[k]), 0.0);
    std::vector<double> resp(n * C);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
      double z = 0.0;
      for (std::size_t c = 0; c < C; ++c) z += resp[i * C + c] = 0.1 + rng.uniform();
      for (std::size_t c = 0; c < C; ++c) resp[i * C + c] /= z;
    }
    m_step(y, n, resp, f);
    for (std::size_t it = 0; it < opt_.em_iters; ++it) {
      const double ll = e_step(y, n, f, resp);
      if (!f.loglik.empty()) {
        const double prev = f.loglik.back();
        if (ll < prev - 1e-9 * std::max(1.0, std::abs(prev)))
          throw InternalError("EM log-likelihood decreased from " + std::to_string(prev) + " to " + std::to_string(ll));
      }
      f.loglik.push_back(ll);
      m_step(y, n, resp, f);
      if (f.loglik.size() >= 2 && std::abs(ll - f.loglik[f.loglik.size() - 2]) <= 1e-12 * std::max(1.0, std::abs(ll)))
        break;
    }
    // Parameters after the final M-step pair with one more likelihood value.
    f.loglik.push_back(e_step(y, n, f, resp));
    if (f.loglik.back() < f.loglik[f.loglik.size() - 2] - 1e-9 * std::max(1.0, std::abs(f.loglik.back())))
      throw InternalError("EM log-likelihood decreased in the final step");
    return f;
  }

  Options opt_;
  Fit best_;
};

// ---------------------------------------------------------------------------

/// Samples each missing column from its empirical distribution among the k
/// training rows nearest in Hamming distance on the observed columns (ties
/// go to the lower row index).
class KnnImputer final : public Imputer {
 public:
  explicit KnnImputer(std::size_t k = 10) : k_(k) {
    if (k_ < 1) throw ContractError("k must be positive");
  }

  std::string_view kind() const override { return "knn"; }

  void fit(const Dataset& data, std::span<const std::size_t> rows) override {
    if (rows.size() < k_)
      throw FitError("k = " + std::to_string(k_) + " exceeds the " + std::to_string(rows.size()) + " training rows");
    cards_ = data.cardinalities();
    train_ = complete_rows(data, rows);
    n_ = rows.size();
  }

  /// Training-row positions (0-based within the fit rows) of the neighbours.
  std::vector<std::size_t> neighbors(std::span<const int> observed, const MissingPattern& pattern) const {
    check_query(observed, pattern);
    const std::size_t d = cards_.size();
    std::vector<int> dist(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      int h = 0;
      for (std::size_t k : pattern.observed()) h += train_[i * d + k] != observed[k];
      dist[i] = h;
    }
    std::vector<std::size_t> idx(n_);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k_), idx.end(),
                      [&](std::size_t a, std::size_t b) { return dist[a] != dist[b] ? dist[a] < dist[b] : a < b; });
    idx.resize(k_);
    return idx;
  }

  SampleSet impute(std::span<const int> observed, const MissingPattern& pattern, std::size_t num_samples,
                   std::uint64_t seed) const override {
    const auto nb = neighbors(observed, pattern);
    const std::size_t d = cards_.size();
    const auto& miss = pattern.missing();
    std::vector<std::vector<double>> freq(miss.size());
    for (std::size_t j = 0; j < miss.size(); ++j) {
      freq[j].assign(static_cast<std::size_t>(cards_[miss[j]]), 0.0);
      for (std::size_t i : nb) freq[j][static_cast<std::size_t>(train_[i * d + miss[j]])] += 1.0;
    }
    Rng rng(seed);
    SampleSet out(pattern, cards_);
    out.reserve(num_samples);
    std::vector<int> s(miss.size());
    for (std::size_t t = 0; t < num_samples; ++t) {
      for (std::size_t j = 0; j < miss.size(); ++j) s[j] = static_cast<int>(rng.categorical(freq[j]));
      out.push_back(s);
    }
    return out;
  }

 private:
  std::size_t k_;
  std::vector<int> train_;
  std::size_t n_ = 0;
};

// ---------------------------------------------------------------------------

/// Chained equations with one multinomial-logistic predictor per column.
/// Predictors are fitted once on complete rows; each imputation runs its own
/// chain from marginal draws for `sweeps` passes over the missing columns.
class MiceImputer final : public Imputer {
 public:
  struct Options {
    std::size_t sweeps = 10;
    double l2 = 1e-2;
    std::size_t max_iters = 300;
    std::uint64_t seed = 0;
  };

  MiceImputer() : MiceImputer(Options{}) {}
  explicit MiceImputer(Options opt) : opt_(opt) {
    if (opt_.sweeps < 1) throw ContractError("MICE needs at least one sweep");
  }

  std::string_view kind() const override { return "mice"; }

  void fit(const Dataset& data, std::span<const std::size_t> rows) override {
    if (rows.empty()) throw FitError("MICE needs at least one complete row");
    cards_ = data.cardinalities();
    const std::size_t d = cards_.size();
    const auto y = complete_rows(data, rows);
    const std::size_t n = rows.size();

    offsets_.assign(d + 1, 0);
    for (std::size_t k = 0; k < d; ++k) offsets_[k + 1] = offsets_[k] + static_cast<std::size_t>(cards_[k]);
    width_ = offsets_[d] + 1;  // one-hot of all columns + intercept; own column is skipped

    marginals_.assign(d, {});
    for (std::size_t k = 0; k < d; ++k) {
      marginals_[k].assign(static_cast<std::size_t>(cards_[k]), 0.0);
      for (std::size_t i = 0; i < n; ++i) marginals_[k][static_cast<std::size_t>(y[i * d + k])] += 1.0;
      for (double& v : marginals_[k]) v /= static_cast<double>(n);
    }

    weights_.assign(d, {});
    for (std::size_t k = 0; k < d; ++k) {
      const std::size_t ck = static_cast<std::size_t>(cards_[k]);
      auto objective = [&](std::span<const double> w, std::span<double> grad) {
        std::fill(grad.begin(), grad.end(), 0.0);
        std::vector<double> z(ck);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          std::span<const int> row(y.data() + i * d, d);
          logits(w, k, row, z);
          const double picked = z[static_cast<std::size_t>(row[k])];
          double mx = z[0];
          for (double v : z) mx = std::max(mx, v);
          double s = 0.0;
          for (double& v : z) s += v = std::exp(v - mx);
          total += picked - mx - std::log(s);
          for (std::size_t l = 0; l < ck; ++l) {
            const double coef = ((static_cast<int>(l) == row[k]) ? 1.0 : 0.0) - z[l] / s;
            double* g = grad.data() + l * width_;
            for (std::size_t j = 0; j < d; ++j)
              if (j != k) g[offsets_[j] + static_cast<std::size_t>(row[j])] += coef / static_cast<double>(n);
            g[width_ - 1] += coef / static_cast<double>(n);
          }
        }
        double sq = 0.0;
        for (std::size_t t = 0; t < w.size(); ++t) {
          sq += w[t] * w[t];
          grad[t] -= opt_.l2 * w[t];
        }
        return total / static_cast<double>(n) - 0.5 * opt_.l2 * sq;
      };
      optim::Options o;
      o.max_iters = opt_.max_iters;
      o.tol = 1e-6;
      auto res = optim::maximize(objective, std::vector<double>(ck * width_, 0.0), o);
      if (!std::isfinite(res.value)) throw TrainingDivergedError("MICE predictor objective is not finite");
      for (double v : res.x)
        if (!std::isfinite(v)) throw TrainingDivergedError("non-finite MICE predictor weight");
      weights_[k] = std::move(res.x);
    }
  }

  /// Predictive distribution of column k given every other entry of `row`.
  std::vector<double> predictive(std::size_t k, std::span<const int> row) const {
    std::vector<double> z(static_cast<std::size_t>(cards_[k]));
    logits(weights_[k], k, row, z);
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    double s = 0.0;
    for (double& v : z) s += v = std::exp(v - mx);
    for (double& v : z) v /= s;
    return z;
  }

  SampleSet impute(std::span<const int> observed, const MissingPattern& pattern, std::size_t num_samples,
                   std::uint64_t seed) const override {
    check_query(observed, pattern);
    const auto& miss = pattern.missing();
    Rng rng(seed);
    std::vector<int> state(cards_.size(), kUnassigned);
    for (std::size_t k : pattern.observed()) state[k] = observed[k];
    SampleSet out(pattern, cards_);
    out.reserve(num_samples);
    std::vector<int> s(miss.size());
    for (std::size_t t = 0; t < num_samples; ++t) {
      for (std::size_t k : miss) state[k] = static_cast<int>(rng.categorical(marginals_[k]));
      for (std::size_t sweep = 0; sweep < opt_.sweeps; ++sweep)
        for (std::size_t k : miss) state[k] = static_cast<int>(rng.categorical(predictive(k, state)));
      for (std::size_t j = 0; j < miss.size(); ++j) s[j] = state[miss[j]];
      out.push_back(s);
    }
    return out;
  }

 private:
  void logits(std::span<const double> w, std::size_t k, std::span<const int> row, std::span<double> z) const {
    const std::size_t d = cards_.size();
    for (std::size_t l = 0; l < z.size(); ++l) {
      const double* wl = w.data() + l * width_;
      double acc = wl[width_ - 1];
      for (std::size_t j = 0; j < d; ++j)
        if (j != k) acc += wl[offsets_[j] + static_cast<std::size_t>(row[j])];
      z[l] = acc;
    }
  }

  Options opt_;
  std::vector<std::size_t> offsets_;
  std::size_t width_ = 0;
  std::vector<std::vector<double>> marginals_;
  std::vector<std::vector<double>> weights_;  // per column: card_k x width_
};

// ---------------------------------------------------------------------------

/// Exact conditional draws from a synthetic generator.
class TrueSamplerImputer final : public Imputer {
 public:
  explicit TrueSamplerImputer(GroundTruth truth) : truth_(std::move(truth)) {}

  std::string_view kind() const override { return "true_sampler"; }

  void fit(const Dataset& data, std::span<const std::size_t>) override {
    if (data.cardinalities() != truth_.spec().cardinalities)
      throw UnsupportedError("true sampler only applies to data from its own generator");
    cards_ = data.cardinalities();
  }

  SampleSet impute(std::span<const int> observed, const MissingPattern& pattern, std::size_t num_samples,
                   std::uint64_t seed) const override {
    check_query(observed, pattern);
    std::vector<int> obs(cards_.size(), kUnassigned);
    for (std::size_t k : pattern.observed()) obs[k] = observed[k];
    const auto post = truth_.component_posterior(obs);
    Rng rng(seed);
    SampleSet out(pattern, cards_);
    out.reserve(num_samples);
    for (std::size_t t = 0; t < num_samples; ++t) out.push_back(truth_.sample_given_posterior(post, pattern.missing(), rng));
    return out;
  }

 private:
  GroundTruth truth_;
};

}  // namespace imputerank
