#pragma once

// Sample-based discrepancies between a reference SampleSet (drawn from the
// model of the true conditional) and an imputer's SampleSet. Every score is
// oriented so that lower means closer to the reference.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "imputerank/error.hpp"
#include "imputerank/optimize.hpp"
#include "imputerank/sample_set.hpp"

namespace imputerank {

enum class Metric { KL, SymKL, MmdScore, MmdBTest, Nds };

inline constexpr std::array<Metric, 5> kAllMetrics{Metric::KL, Metric::SymKL, Metric::MmdBTest, Metric::MmdScore,
                                                   Metric::Nds};

inline std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::KL: return "kl";
    case Metric::SymKL: return "sym_kl";
    case Metric::MmdScore: return "mmd_score";
    case Metric::MmdBTest: return "mmd_btest";
    case Metric::Nds: return "nds";
  }
  return "?";
}

inline Metric parse_metric(std::string_view s) {
  for (Metric m : kAllMetrics)
    if (metric_name(m) == s) return m;
  throw ConfigError("unknown metric '" + std::string(s) + "'");
}

struct MetricScore {
  Metric metric = Metric::Nds;
  double value = 0.0;
  bool converged = true;  // false only for a KL solve that hit max_iters
};

struct KernelConfig {
  double sigma = 1.0;

  void validate() const {
    if (!(sigma > 0.0)) throw ContractError("kernel sigma must be positive");
  }
};

struct KlSolverConfig {
  std::optional<double> lambda_L;  // default 0.1 / sqrt(L)
  std::size_t max_iters = 5000;
  double tol = 1e-8;
  double alpha_floor = 1e-10;

  double lambda_for(std::size_t L) const { return lambda_L.value_or(0.1 / std::sqrt(static_cast<double>(L))); }

  void validate() const {
    if (lambda_L && !(*lambda_L > 0.0)) throw ContractError("lambda_L must be positive");
    if (!(alpha_floor > 0.0)) throw ContractError("alpha_floor must be positive");
    if (!(tol > 0.0)) throw ContractError("tol must be positive");
  }
};

struct NdsConfig {
  double lambda = 0.1;

  void validate() const {
    if (!(lambda > 0.0 && lambda < 1.0)) throw ContractError("NDS lambda must lie in (0, 1)");
  }
};

/// exp(-||x - y||^2 / sigma).
inline double gaussian_kernel(std::span<const double> x, std::span<const double> y, const KernelConfig& cfg = {}) {
  if (x.size() != y.size()) throw ContractError("kernel arguments differ in dimension");
  cfg.validate();
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - y[i]) * (x[i] - y[i]);
  return std::exp(-sq / cfg.sigma);
}

namespace detail {

inline void check_same_pattern(const SampleSet& a, const SampleSet& b) {
  if (a.pattern() != b.pattern() || a.cardinalities() != b.cardinalities())
    throw ContractError("sample sets cover different missing patterns");
}

/// Kernel values indexed by Hamming distance. For one-hot encodings the
/// squared Euclidean distance is exactly twice the Hamming distance.
inline std::vector<double> kernel_by_hamming(std::size_t arity, const KernelConfig& cfg) {
  std::vector<double> k(arity + 1);
  for (std::size_t h = 0; h <= arity; ++h) k[h] = std::exp(-2.0 * static_cast<double>(h) / cfg.sigma);
  return k;
}

/// Row-major |a| x |b| Gram matrix.
inline std::vector<double> gram(const SampleSet& a, const SampleSet& b, std::span<const double> kh) {
  std::vector<double> g(a.size() * b.size());
  for (std::size_t u = 0; u < a.size(); ++u)
    for (std::size_t v = 0; v < b.size(); ++v) g[u * b.size() + v] = kh[static_cast<std::size_t>(hamming(a, u, b, v))];
  return g;
}

/// Unbiased MMD^2 over the index range [begin, end) of two paired sets.
inline double mmd_u_range(const SampleSet& x, const SampleSet& y, std::size_t begin, std::size_t end,
                          std::span<const double> kh) {
  double sum = 0.0;
  for (std::size_t u = begin; u < end; ++u) {
    for (std::size_t v = begin; v < end; ++v) {
      if (u == v) continue;
      const double kxx = kh[static_cast<std::size_t>(hamming(x, u, x, v))];
      const double kyy = kh[static_cast<std::size_t>(hamming(y, u, y, v))];
      const double kxy = kh[static_cast<std::size_t>(hamming(x, u, y, v))];
      const double kyx = kh[static_cast<std::size_t>(hamming(x, v, y, u))];
      sum += (kxx + kyy) - (kxy + kyx);
    }
  }
  const auto n = static_cast<double>(end - begin);
  return sum / (n * (n - 1.0));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// KL divergence via the convex dual of the likelihood-ratio risk.

struct KlSolution {
  double value = 0.0;         // -(1/L) sum log(L alpha_u)
  std::vector<double> alpha;  // one weight per reference sample
  double objective = 0.0;     // F at alpha
  double grad_norm = 0.0;     // projected-gradient norm at alpha
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // accepted F values
};

/// Solves
///   min_{alpha >= floor}  -(1/L) sum_u log(L alpha_u)
///                         + 1/(2 lambda) || sum_u alpha_u phi(y_u) - (1/L) sum_v phi(yhat_v) ||^2
/// where y are reference samples and yhat imputer samples; the norm is
/// expanded with the Gaussian kernel. At the optimum 1/(L alpha_u) estimates
/// the density ratio p/phat at y_u.
inline KlSolution kl_solve(const SampleSet& ref, const SampleSet& imp, const KernelConfig& kcfg = {},
                           const KlSolverConfig& scfg = {}, bool keep_trace = false) {
  detail::check_same_pattern(ref, imp);
  kcfg.validate();
  scfg.validate();
  const std::size_t L = ref.size();
  if (L == 0 || imp.size() != L) throw ContractError("KL estimation needs equally sized, nonempty sample sets");
  const double Ld = static_cast<double>(L);
  const double lambda = scfg.lambda_for(L);
  const auto kh = detail::kernel_by_hamming(ref.arity(), kcfg);
  const auto k_rr = detail::gram(ref, ref, kh);
  const auto k_ri = detail::gram(ref, imp, kh);
  const auto k_ii = detail::gram(imp, imp, kh);
  std::vector<double> b(L, 0.0);
  for (std::size_t u = 0; u < L; ++u) {
    for (std::size_t v = 0; v < L; ++v) b[u] += k_ri[u * L + v];
    b[u] /= Ld;
  }
  double c = 0.0;
  for (double v : k_ii) c += v;
  c /= Ld * Ld;

  std::vector<double> ka(L);
  auto objective = [&](std::span<const double> a, std::span<double> grad) {
    double logs = 0.0;
    for (std::size_t u = 0; u < L; ++u) {
      if (!(a[u] > 0.0)) return std::numeric_limits<double>::infinity();
      logs += std::log(Ld * a[u]);
    }
    double quad = 0.0, lin = 0.0;
    for (std::size_t u = 0; u < L; ++u) {
      double s = 0.0;
      for (std::size_t v = 0; v < L; ++v) s += k_rr[u * L + v] * a[v];
      ka[u] = s;
      quad += a[u] * s;
      lin += a[u] * b[u];
    }
    for (std::size_t u = 0; u < L; ++u) grad[u] = -1.0 / (Ld * a[u]) + (ka[u] - b[u]) / lambda;
    return -logs / Ld + (quad - 2.0 * lin + c) / (2.0 * lambda);
  };

  optim::Options opt;
  opt.step = lambda / Ld;
  opt.max_iters = scfg.max_iters;
  opt.tol = scfg.tol;
  opt.keep_trace = keep_trace;
  auto res = optim::minimize_bounded(objective, std::vector<double>(L, 1.0 / Ld), scfg.alpha_floor, opt);

  KlSolution sol;
  sol.alpha = std::move(res.x);
  sol.objective = res.value;
  sol.grad_norm = res.grad_norm;
  sol.iterations = res.iterations;
  // A stalled line search at the floating-point floor counts as converged
  // when the projected gradient is already tiny relative to the gradient scale.
  sol.converged = res.converged || (res.stalled && res.grad_norm <= 1e3 * scfg.tol);
  sol.trace = std::move(res.trace);
  double s = 0.0;
  for (double a : sol.alpha) s += std::log(Ld * a);
  sol.value = -s / Ld;
  return sol;
}

inline MetricScore kl_divergence(const SampleSet& ref, const SampleSet& imp, const KernelConfig& kcfg = {},
                                 const KlSolverConfig& scfg = {}) {
  auto sol = kl_solve(ref, imp, kcfg, scfg);
  return {Metric::KL, sol.value, sol.converged};
}

// ---------------------------------------------------------------------------
// Symmetric KL proxy: cross-validated accuracy of a logistic classifier
// separating reference (+1) from imputer (-1) samples.

namespace detail {

struct LabelCounts {
  double pos = 0.0;
  double neg = 0.0;
};

/// Encoded sample -> class counts, iterated in a canonical order so that
/// swapping the classes yields exactly negated weights.
using CountTable = std::map<std::vector<int>, LabelCounts>;

inline double log1pexp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
inline double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

/// Dot product of w with [one_hot(x), 1].
inline double linear_score(std::span<const double> w, std::span<const int> x, std::span<const int> cards) {
  double z = 0.0;
  std::size_t off = 0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    z += w[off + static_cast<std::size_t>(x[j])];
    off += static_cast<std::size_t>(cards[j]);
  }
  return z + w[off];
}

/// Solves A x = rhs for symmetric positive definite A (row-major, n x n).
inline std::vector<double> cholesky_solve(std::vector<double> a, std::vector<double> rhs, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0)) throw InternalError("logistic Hessian is not positive definite");
    d = std::sqrt(d);
    a[j * n + j] = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / d;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = rhs[i];
    for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * rhs[k];
    rhs[i] = s / a[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = rhs[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[k * n + i] * rhs[k];
    rhs[i] = s / a[i * n + i];
  }
  return rhs;
}

/// L2-regularized logistic regression on one-hot features plus intercept,
/// fitted by damped Newton steps.
inline std::vector<double> fit_logistic(const CountTable& table, std::span<const int> cards, double l2) {
  std::size_t dim = 1;
  for (int c : cards) dim += static_cast<std::size_t>(c);
  std::vector<double> w(dim, 0.0);
  auto loss = [&](std::span<const double> wt) {
    double f = 0.0;
    for (const auto& [x, n] : table) {
      const double z = linear_score(wt, x, cards);
      f += n.pos * log1pexp(-z) + n.neg * log1pexp(z);
    }
    double sq = 0.0;
    for (double v : wt) sq += v * v;
    return f + 0.5 * l2 * sq;
  };
  std::vector<std::size_t> idx;
  auto active = [&](std::span<const int> x) {
    idx.clear();
    std::size_t off = 0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      idx.push_back(off + static_cast<std::size_t>(x[j]));
      off += static_cast<std::size_t>(cards[j]);
    }
    idx.push_back(off);
  };
  double f = loss(w);
  for (int it = 0; it < 100; ++it) {
    std::vector<double> grad(dim, 0.0), hess(dim * dim, 0.0);
    for (const auto& [x, n] : table) {
      const double z = linear_score(w, x, cards);
      const double sp = sigmoid(z), sn = sigmoid(-z);
      const double gcoef = n.pos * sn - n.neg * sp;  // -(d loss / d z)
      const double hcoef = (n.pos + n.neg) * sp * sn;
      active(x);
      for (std::size_t a : idx) {
        grad[a] += gcoef;
        for (std::size_t b : idx) hess[a * dim + b] += hcoef;
      }
    }
    for (std::size_t a = 0; a < dim; ++a) {
      grad[a] -= l2 * w[a];
      hess[a * dim + a] += l2;
    }
    const auto step = cholesky_solve(std::move(hess), grad, dim);
    double t = 1.0, f_new = f;
    std::vector<double> w_new(dim);
    for (int bt = 0; bt < 40; ++bt) {
      for (std::size_t a = 0; a < dim; ++a) w_new[a] = w[a] + t * step[a];
      f_new = loss(w_new);
      if (f_new <= f) break;
      t *= 0.5;
    }
    if (!(f_new <= f)) break;
    double max_step = 0.0;
    for (std::size_t a = 0; a < dim; ++a) max_step = std::max(max_step, std::abs(w_new[a] - w[a]));
    w.swap(w_new);
    f = f_new;
    if (max_step < 1e-10) break;
  }
  return w;
}

}  // namespace detail

inline constexpr std::size_t kSymKlFolds = 5;
inline constexpr double kSymKlL2 = 1.0;

/// 1 - (stratified 5-fold cross-validated error) of a logistic classifier.
/// About 0.5 for indistinguishable sets, about 1 for disjoint ones.
/// Fold of sample u within its class is u mod folds. When either class has
/// fewer than two samples the training error is used instead.
inline MetricScore symmetric_kl(const SampleSet& ref, const SampleSet& imp) {
  detail::check_same_pattern(ref, imp);
  if (ref.empty() || imp.empty()) throw ContractError("symmetric KL needs two nonempty classes");
  const auto& cards = ref.cardinalities();
  const std::size_t folds = std::min({kSymKlFolds, ref.size(), imp.size()});

  auto key = [](const SampleSet& s, std::size_t u) {
    auto v = s.sample(u);
    return std::vector<int>(v.begin(), v.end());
  };
  auto error_of = [](double z, bool positive) {
    if (z == 0.0) return 0.5;
    return (z > 0.0) == positive ? 0.0 : 1.0;
  };

  double errors = 0.0;
  if (folds < 2) {
    detail::CountTable table;
    for (std::size_t u = 0; u < ref.size(); ++u) table[key(ref, u)].pos += 1.0;
    for (std::size_t v = 0; v < imp.size(); ++v) table[key(imp, v)].neg += 1.0;
    const auto w = detail::fit_logistic(table, cards, kSymKlL2);
    for (std::size_t u = 0; u < ref.size(); ++u) errors += error_of(detail::linear_score(w, ref.sample(u), cards), true);
    for (std::size_t v = 0; v < imp.size(); ++v) errors += error_of(detail::linear_score(w, imp.sample(v), cards), false);
  } else {
    for (std::size_t f = 0; f < folds; ++f) {
      detail::CountTable table;
      for (std::size_t u = 0; u < ref.size(); ++u)
        if (u % folds != f) table[key(ref, u)].pos += 1.0;
      for (std::size_t v = 0; v < imp.size(); ++v)
        if (v % folds != f) table[key(imp, v)].neg += 1.0;
      const auto w = detail::fit_logistic(table, cards, kSymKlL2);
      for (std::size_t u = f; u < ref.size(); u += folds)
        errors += error_of(detail::linear_score(w, ref.sample(u), cards), true);
      for (std::size_t v = f; v < imp.size(); v += folds)
        errors += error_of(detail::linear_score(w, imp.sample(v), cards), false);
    }
  }
  const double err_rate = errors / static_cast<double>(ref.size() + imp.size());
  return {Metric::SymKL, 1.0 - err_rate, true};
}

// ---------------------------------------------------------------------------
// Maximum mean discrepancy.

/// Unbiased MMD^2_u over paired samples. Exactly zero for identical sets in
/// identical order; may be negative.
inline MetricScore mmd_score(const SampleSet& ref, const SampleSet& imp, const KernelConfig& kcfg = {}) {
  detail::check_same_pattern(ref, imp);
  kcfg.validate();
  if (ref.size() != imp.size()) throw ContractError("MMD needs equally sized sample sets");
  if (ref.size() < 2) throw ContractError("MMD needs at least two samples per set");
  const auto kh = detail::kernel_by_hamming(ref.arity(), kcfg);
  return {Metric::MmdScore, detail::mmd_u_range(ref, imp, 0, ref.size(), kh), true};
}

struct BTestResult {
  std::size_t block_size = 0;
  std::size_t num_blocks = 0;
  double mean = 0.0;       // mean block MMD^2_u
  double std_error = 0.0;
  double critical = 0.0;   // one-sided Gaussian quantile at 1 - beta
  bool accept = true;      // H0: both samples share a distribution
};

/// Block test: floor(sqrt(L)) samples per block, one MMD^2_u per block,
/// Gaussian null on the block mean.
inline BTestResult b_test_detail(const SampleSet& ref, const SampleSet& imp, const KernelConfig& kcfg = {},
                                 double beta = 0.05) {
  detail::check_same_pattern(ref, imp);
  kcfg.validate();
  if (!(beta > 0.0 && beta < 1.0)) throw ContractError("beta must lie in (0, 1)");
  if (ref.size() != imp.size()) throw ContractError("B-test needs equally sized sample sets");
  if (ref.size() < 8) throw TooFewSamplesError("B-test needs at least 8 samples per set");
  BTestResult r;
  const std::size_t L = ref.size();
  r.block_size = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(L))));
  r.num_blocks = L / r.block_size;
  const auto kh = detail::kernel_by_hamming(ref.arity(), kcfg);
  std::vector<double> stats(r.num_blocks);
  for (std::size_t i = 0; i < r.num_blocks; ++i)
    stats[i] = detail::mmd_u_range(ref, imp, i * r.block_size, (i + 1) * r.block_size, kh);
  for (double s : stats) r.mean += s;
  r.mean /= static_cast<double>(r.num_blocks);
  double var = 0.0;
  for (double s : stats) var += (s - r.mean) * (s - r.mean);
  var /= static_cast<double>(r.num_blocks - 1);
  r.std_error = std::sqrt(var / static_cast<double>(r.num_blocks));
  r.critical = boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), 1.0 - beta);
  if (r.std_error > 0.0) {
    r.accept = !(r.mean / r.std_error > r.critical);
  } else {
    r.accept = !(r.mean > 0.0);
  }
  return r;
}

/// 0 when H0 is accepted, 1 when rejected (lower is better).
inline MetricScore b_test(const SampleSet& ref, const SampleSet& imp, const KernelConfig& kcfg = {},
                          double beta = 0.05) {
  return {Metric::MmdBTest, b_test_detail(ref, imp, kcfg, beta).accept ? 0.0 : 1.0, true};
}

// ---------------------------------------------------------------------------
// Neighborhood dissimilarity score.

namespace detail {

/// Samples packed into 4-bit (15 per word) or 8-bit (8 per word) fields.
inline std::vector<std::uint64_t> pack_fields(const SampleSet& s, bool nibbles) {
  const unsigned bits = nibbles ? 4 : 8;
  const std::size_t per_word = nibbles ? 15 : 8;  // 15 keeps a nibble count below 16
  const std::size_t words = (s.arity() + per_word - 1) / per_word;
  std::vector<std::uint64_t> out(s.size() * words, 0);
  for (std::size_t u = 0; u < s.size(); ++u) {
    auto x = s.sample(u);
    std::uint64_t* w = out.data() + u * words;
    unsigned shift = 0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (shift == bits * per_word) {
        ++w;
        shift = 0;
      }
      *w |= static_cast<std::uint64_t>(x[j]) << shift;
      shift += bits;
    }
  }
  return out;
}

/// Number of nonzero fields: fold each field onto its low bit, then a
/// multiply by the field-wise ones sums the flags into the top field.
template <unsigned Bits>
inline std::size_t differing_fields(std::uint64_t t) {
  constexpr std::uint64_t ones = Bits == 4 ? 0x1111111111111111ULL : 0x0101010101010101ULL;
  if constexpr (Bits == 8) t |= t >> 4;
  t |= t >> 2;
  t |= t >> 1;
  return static_cast<std::size_t>(((t & ones) * ones) >> (64 - Bits));
}

}  // namespace detail

/// (1 / (L_ref L_imp)) sum_{u,v} w(h_uv) h_uv with Hamming h over the missing
/// columns and w(h) = lambda^h + (1 - lambda)^(h_max - h), h_max = |m|.
inline MetricScore nds(const SampleSet& ref, const SampleSet& imp, const NdsConfig& cfg = {}) {
  detail::check_same_pattern(ref, imp);
  cfg.validate();
  if (ref.empty() || imp.empty()) throw ContractError("NDS needs nonempty sample sets");
  const std::size_t h_max = ref.arity();
  // w(h) h for every distance, from running powers.
  std::vector<double> up(h_max + 1), down(h_max + 1);
  up[0] = down[0] = 1.0;
  for (std::size_t h = 1; h <= h_max; ++h) {
    up[h] = up[h - 1] * cfg.lambda;
    down[h] = down[h - 1] * (1.0 - cfg.lambda);
  }
  std::vector<double> wh(h_max + 1);
  for (std::size_t h = 0; h <= h_max; ++h) wh[h] = static_cast<double>(h) * (up[h] + down[h_max - h]);
  // Tally pair distances first; the weights are applied once per distance.
  std::vector<std::uint64_t> tally(h_max + 1, 0);
  const auto& cards = ref.cardinalities();
  const int top = *std::max_element(cards.begin(), cards.end());
  if (top <= 256) {
    const bool nibbles = top <= 16;
    const auto a = detail::pack_fields(ref, nibbles), b = detail::pack_fields(imp, nibbles);
    const std::size_t words = a.size() / ref.size();
    if (nibbles && words == 1) {
      for (std::size_t u = 0; u < ref.size(); ++u)
        for (std::size_t v = 0; v < imp.size(); ++v) ++tally[detail::differing_fields<4>(a[u] ^ b[v])];
    } else {
      for (std::size_t u = 0; u < ref.size(); ++u)
        for (std::size_t v = 0; v < imp.size(); ++v) {
          std::size_t h = 0;
          for (std::size_t w = 0; w < words; ++w) {
            const std::uint64_t t = a[u * words + w] ^ b[v * words + w];
            h += nibbles ? detail::differing_fields<4>(t) : detail::differing_fields<8>(t);
          }
          ++tally[h];
        }
    }
  } else {
    for (std::size_t u = 0; u < ref.size(); ++u)
      for (std::size_t v = 0; v < imp.size(); ++v) ++tally[static_cast<std::size_t>(hamming(ref, u, imp, v))];
  }
  double sum = 0.0;
  for (std::size_t h = 0; h <= h_max; ++h) sum += wh[h] * static_cast<double>(tally[h]);
  return {Metric::Nds, sum / (static_cast<double>(ref.size()) * static_cast<double>(imp.size())), true};
}

/// All metric settings for one run.
struct MetricSuite {
  KernelConfig kernel;
  KlSolverConfig kl;
  NdsConfig nds_cfg;
  double btest_beta = 0.05;

  MetricScore score(Metric m, const SampleSet& ref, const SampleSet& imp) const {
    switch (m) {
      case Metric::KL: return kl_divergence(ref, imp, kernel, kl);
      case Metric::SymKL: return symmetric_kl(ref, imp);
      case Metric::MmdScore: return mmd_score(ref, imp, kernel);
      case Metric::MmdBTest: return b_test(ref, imp, kernel, btest_beta);
      case Metric::Nds: return nds(ref, imp, nds_cfg);
    }
    throw ContractError("unknown metric");
  }
};

}  // namespace imputerank
