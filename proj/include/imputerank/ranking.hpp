#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "imputerank/error.hpp"
#include "imputerank/metrics.hpp"
#include "imputerank/sample_set.hpp"

namespace imputerank {

/// Per-row ranks (1 = best) of the algorithms under one metric.
struct RankMatrix {
  Metric metric = Metric::Nds;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> ranks;  // row-major

  double at(std::size_t r, std::size_t c) const { return ranks[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {ranks.data() + r * cols, cols}; }

  std::vector<double> average_ranks() const {
    std::vector<double> avg(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) avg[c] += at(r, c);
    for (double& a : avg) a /= static_cast<double>(rows);
    return avg;
  }
};

/// Ascending ranks with ties sharing the average of the positions they span.
inline std::vector<double> rank_with_ties(std::span<const double> scores) {
  const std::size_t k = scores.size();
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> ranks(k);
  for (std::size_t i = 0; i < k;) {
    std::size_t j = i;
    while (j + 1 < k && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

/// `scores[row][algorithm]`, lower is better. Every row must score every
/// algorithm with a finite value.
inline RankMatrix scores_to_ranks(Metric metric, const std::vector<std::vector<double>>& scores,
                                  std::size_t num_algorithms) {
  RankMatrix rm;
  rm.metric = metric;
  rm.rows = scores.size();
  rm.cols = num_algorithms;
  rm.ranks.reserve(rm.rows * rm.cols);
  for (std::size_t r = 0; r < scores.size(); ++r) {
    if (scores[r].size() != num_algorithms)
      throw ContractError("row " + std::to_string(r) + " is missing an algorithm score");
    for (double s : scores[r])
      if (!std::isfinite(s)) throw ContractError("row " + std::to_string(r) + " has a non-finite score");
    const auto ranks = rank_with_ties(scores[r]);
    rm.ranks.insert(rm.ranks.end(), ranks.begin(), ranks.end());
  }
  return rm;
}

struct FriedmanResult {
  double statistic = 0.0;
  double critical = 0.0;  // chi-square(k-1) quantile at 1 - beta
  bool reject = false;
};

/// Friedman chi-square on average ranks (no tie correction).
inline FriedmanResult friedman_test(const RankMatrix& rm, double beta = 0.05) {
  if (rm.rows < 2 || rm.cols < 2) throw ContractError("Friedman test needs at least 2 rows and 2 algorithms");
  if (!(beta > 0.0 && beta < 1.0)) throw ContractError("beta must lie in (0, 1)");
  const auto avg = rm.average_ranks();
  const double n = static_cast<double>(rm.rows);
  const double k = static_cast<double>(rm.cols);
  double sum_sq = 0.0;
  for (double r : avg) sum_sq += r * r;
  FriedmanResult f;
  f.statistic = 12.0 * n / (k * (k + 1.0)) * (sum_sq - k * (k + 1.0) * (k + 1.0) / 4.0);
  if (f.statistic < 0.0 && f.statistic > -1e-9) f.statistic = 0.0;
  f.critical = boost::math::quantile(boost::math::chi_squared_distribution<double>(k - 1.0), 1.0 - beta);
  f.reject = f.statistic > f.critical;
  return f;
}

/// Two-tailed Nemenyi critical values q_beta for k = 2..10 algorithms
/// (studentized range statistic divided by sqrt(2)).
inline constexpr std::array<double, 9> kNemenyiQ005{1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164};
inline constexpr std::array<double, 9> kNemenyiQ010{1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920};

inline double nemenyi_q(std::size_t k, double beta) {
  if (k < 2 || k > 10) throw UnsupportedError("Nemenyi table covers 2..10 algorithms, got " + std::to_string(k));
  if (std::abs(beta - 0.05) < 1e-12) return kNemenyiQ005[k - 2];
  if (std::abs(beta - 0.10) < 1e-12) return kNemenyiQ010[k - 2];
  throw UnsupportedError("Nemenyi table covers beta in {0.05, 0.10}");
}

/// q_beta * sqrt(k (k + 1) / (6 N)).
inline double nemenyi_cd(std::size_t num_algorithms, std::size_t num_rows, double beta = 0.05) {
  if (num_rows < 1) throw ContractError("critical difference needs at least one row");
  const double k = static_cast<double>(num_algorithms);
  return nemenyi_q(num_algorithms, beta) * std::sqrt(k * (k + 1.0) / (6.0 * static_cast<double>(num_rows)));
}

struct RankingResult {
  Metric metric = Metric::Nds;
  std::vector<double> avg_ranks;
  double friedman_stat = 0.0;
  double friedman_critical = 0.0;
  bool reject_null = false;
  double cd = 0.0;
  double beta = 0.05;
  /// Pairs (i < j) whose average ranks differ by more than cd. Empty when the
  /// Friedman test does not reject.
  std::vector<std::pair<std::size_t, std::size_t>> significant_pairs;

  bool significantly_different(std::size_t a, std::size_t b) const {
    if (a > b) std::swap(a, b);
    return std::find(significant_pairs.begin(), significant_pairs.end(), std::pair{a, b}) != significant_pairs.end();
  }
};

inline RankingResult aggregate(const RankMatrix& rm, double beta = 0.05) {
  const auto f = friedman_test(rm, beta);
  RankingResult res;
  res.metric = rm.metric;
  res.avg_ranks = rm.average_ranks();
  res.friedman_stat = f.statistic;
  res.friedman_critical = f.critical;
  res.reject_null = f.reject;
  res.beta = beta;
  res.cd = nemenyi_cd(rm.cols, rm.rows, beta);
  if (res.reject_null) {
    for (std::size_t a = 0; a < rm.cols; ++a)
      for (std::size_t b = a + 1; b < rm.cols; ++b)
        if (std::abs(res.avg_ranks[a] - res.avg_ranks[b]) > res.cd) res.significant_pairs.emplace_back(a, b);
  }
  return res;
}

/// Indices sorted by ascending value (stable).
inline std::vector<std::size_t> ordering_of(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  return order;
}

/// Number of item pairs ordered oppositely by the two score vectors (lower
/// score = earlier). A pair tied in exactly one vector counts 1/2.
inline double kendall_tau_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("rankings differ in length");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const double sa = (a[i] > a[j]) - (a[i] < a[j]);
      const double sb = (b[i] > b[j]) - (b[i] < b[j]);
      if (sa * sb < 0) {
        d += 1.0;
      } else if ((sa == 0) != (sb == 0)) {
        d += 0.5;
      }
    }
  }
  return d;
}

using SampleScorer = std::function<double(const SampleSet& ref, const SampleSet& imp)>;

/// Average ranks of every algorithm when algorithm `reference` supplies the
/// reference samples. Entry `reference` is left at 0.
inline std::vector<double> ranks_against(const std::vector<std::vector<SampleSet>>& per_row, std::size_t reference,
                                         const SampleScorer& scorer) {
  const std::size_t K = per_row.front().size();
  std::vector<double> avg(K, 0.0);
  std::vector<double> scores;
  for (const auto& sets : per_row) {
    scores.clear();
    for (std::size_t a = 0; a < K; ++a)
      if (a != reference) scores.push_back(scorer(sets[reference], sets[a]));
    const auto r = rank_with_ties(scores);
    for (std::size_t a = 0, t = 0; a < K; ++a)
      if (a != reference) avg[a] += r[t++];
  }
  for (double& v : avg) v /= static_cast<double>(per_row.size());
  return avg;
}

/// Mean Kendall-Tau distance over ordered pairs (i, j): the remaining K - 2
/// algorithms ordered by |avg rank - avg rank of j| with i as reference,
/// versus their average ranks with j as reference.
inline double inconsistency_score(const std::vector<std::vector<SampleSet>>& per_row, const SampleScorer& scorer) {
  if (per_row.empty()) throw ContractError("inconsistency needs at least one row");
  const std::size_t K = per_row.front().size();
  if (K < 3) throw ContractError("inconsistency needs at least 3 algorithms");
  for (const auto& sets : per_row)
    if (sets.size() != K) throw ContractError("every row needs sample sets for all algorithms");
  std::vector<std::vector<double>> avg(K);
  for (std::size_t i = 0; i < K; ++i) avg[i] = ranks_against(per_row, i, scorer);

  double total = 0.0;
  std::size_t pairs = 0;
  std::vector<double> a, b;
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = 0; j < K; ++j) {
      if (i == j) continue;
      a.clear();
      b.clear();
      for (std::size_t t = 0; t < K; ++t) {
        if (t == i || t == j) continue;
        a.push_back(std::abs(avg[i][t] - avg[i][j]));
        b.push_back(avg[j][t]);
      }
      total += kendall_tau_distance(a, b);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

inline double inconsistency_score(const std::vector<std::vector<SampleSet>>& per_row, Metric metric,
                                  const MetricSuite& suite = {}) {
  return inconsistency_score(per_row, [&](const SampleSet& ref, const SampleSet& imp) {
    return suite.score(metric, ref, imp).value;
  });
}

}  // namespace imputerank
