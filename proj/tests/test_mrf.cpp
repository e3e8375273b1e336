#include <catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <numeric>

#include "support.hpp"

using namespace imputerank;

namespace {

MissingPattern pat(std::vector<std::size_t> m, std::size_t d) { return MissingPattern(std::move(m), d); }

/// Exact joint over all target columns of a single model with no observed
/// columns, by enumeration.
std::map<std::vector<int>, double> enumerate_joint(const MrfParams& p) {
  const auto& cards = p.cardinalities();
  std::map<std::vector<int>, double> out;
  std::vector<int> y(cards.size(), 0);
  double z = 0.0;
  for (;;) {
    double e = 0.0;
    for (std::size_t k = 0; k < cards.size(); ++k) e += p.unary(k, y[k]);
    for (auto [a, b] : p.pairs()) e += p.pairwise(a, y[a], b, y[b]);
    out[y] = std::exp(e);
    z += out[y];
    std::size_t k = 0;
    while (k < cards.size() && ++y[k] == cards[k]) y[k++] = 0;
    if (k == cards.size()) break;
  }
  for (auto& [key, v] : out) v /= z;
  return out;
}

double tv_against(const std::map<std::vector<int>, double>& exact, const SampleSet& s) {
  auto emp = fixtures::empirical(s);
  double tv = 0.0;
  for (const auto& [k, p] : exact) tv += std::abs(p - (emp.count(k) ? emp.at(k) : 0.0));
  return tv / 2.0;
}

}  // namespace

TEST_CASE("conditional: zero weights give a uniform distribution") {
  const auto p = MrfParams::single_model({3, 2});
  const std::vector<int> values{kUnassigned, 1};
  const auto dist = conditional_distribution(p, values, 0);
  for (double v : dist) CHECK(v == Catch::Approx(1.0 / 3.0).margin(1e-15));
}

TEST_CASE("conditional: a single log 3 interaction") {
  auto p = MrfParams::single_model({2, 2});
  p.set_pairwise(0, 1, 1, 1, std::log(3.0));
  const std::vector<int> values{kUnassigned, 1};
  const auto dist = conditional_distribution(p, values, 0);
  CHECK(dist[1] == Catch::Approx(0.75).margin(1e-12));
  const std::vector<int> other{kUnassigned, 0};
  CHECK(conditional_distribution(p, other, 0)[1] == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("conditional: shift invariance and normalization") {
  Rng rng(4);
  auto p = MrfParams::single_model({3, 4, 2});
  for (double& w : p.weights()) w = 6.0 * (rng.uniform() - 0.5);
  const std::vector<int> values{kUnassigned, 2, 1};
  const auto before = conditional_distribution(p, values, 0);
  for (int l = 0; l < 3; ++l) p.set_unary(0, l, p.unary(0, l) + 7.5);
  const auto after = conditional_distribution(p, values, 0);
  for (int l = 0; l < 3; ++l) CHECK(after[l] == Catch::Approx(before[l]).margin(1e-12));

  for (int trial = 0; trial < 50; ++trial) {
    for (double& w : p.weights()) w = 40.0 * (rng.uniform() - 0.5);
    for (std::size_t k = 0; k < 3; ++k) {
      std::vector<int> v{1, 3, 0};
      const auto d = conditional_distribution(p, v, k);
      double s = 0.0;
      for (double x : d) {
        CHECK(x >= 0.0);
        s += x;
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("conditional: contract errors") {
  const auto p = MrfParams::per_pattern({2, 2, 2}, pat({0}, 3));
  const std::vector<int> unassigned{kUnassigned, kUnassigned, 1};
  CHECK_THROWS_AS(conditional_distribution(p, unassigned, 0), ContractError);
  const std::vector<int> ok{kUnassigned, 0, 1};
  CHECK_THROWS_AS(conditional_distribution(p, ok, 1), ContractError);  // observed column
  CHECK_NOTHROW(conditional_distribution(p, ok, 0));
}

TEST_CASE("structure: per-pattern graph has no observed-observed edges") {
  const auto p = MrfParams::per_pattern({2, 3, 2, 2}, pat({1, 3}, 4));
  CHECK(p.is_target(1));
  CHECK(p.is_target(3));
  CHECK_FALSE(p.is_target(0));
  CHECK_FALSE(p.has_pair(0, 2));
  CHECK(p.has_pair(0, 1));
  CHECK(p.has_pair(3, 1));
  CHECK(p.pairs().size() == 5);  // all pairs but (0,2)
  for (auto [a, b] : p.pairs()) {
    CHECK(a < b);
    CHECK((p.is_target(a) || p.is_target(b)));
  }
  const auto s = MrfParams::single_model({2, 3, 2, 2});
  CHECK(s.pairs().size() == 6);
}

TEST_CASE("training: copied column is learned") {
  const Dataset d = fixtures::copy_dataset(400);
  std::vector<std::size_t> rows(d.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto p = train_per_pattern(d, rows, pat({1}, 2), TrainConfig{});
  for (int a = 0; a < 2; ++a) {
    const std::vector<int> v{a, kUnassigned};
    CHECK(conditional_distribution(p, v, 1)[a] > 0.95);
  }
  const auto s = train_single_model(d, rows, PatternCatalog{}, TrainConfig{});
  for (int a = 0; a < 2; ++a) {
    const std::vector<int> v{a, kUnassigned};
    CHECK(conditional_distribution(s, v, 1)[a] > 0.95);
    const std::vector<int> w{kUnassigned, a};
    CHECK(conditional_distribution(s, w, 0)[a] > 0.95);
  }
}

TEST_CASE("training: independent columns give small interactions") {
  const Dataset d = fixtures::uniform_dataset(2000, 3, 3, 21);
  std::vector<std::size_t> rows(d.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  TrainConfig cfg;
  cfg.l2 = 1e-2;
  const auto p = train_per_pattern(d, rows, pat({0, 2}, 3), cfg);
  for (auto [a, b] : p.pairs())
    for (int la = 0; la < 3; ++la)
      for (int lb = 0; lb < 3; ++lb) CHECK(std::abs(p.pairwise(a, la, b, lb)) < 0.1);
}

TEST_CASE("training: one row under strong regularization stays bounded") {
  const Dataset d = fixtures::make_dataset({2, 3, 2}, {{1, 2, 0}});
  const std::vector<std::size_t> rows{0};
  TrainConfig cfg;
  cfg.l2 = 5.0;
  const auto p = train_single_model(d, rows, PatternCatalog{}, cfg);
  for (double w : p.weights()) {
    CHECK(std::isfinite(w));
    CHECK(std::abs(w) <= 2.0 / cfg.l2);
  }
}

TEST_CASE("training: zero iterations return the initialization") {
  const Dataset d = fixtures::copy_dataset(50);
  std::vector<std::size_t> rows(d.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  TrainConfig cfg;
  cfg.max_iters = 0;
  const auto p = train_single_model(d, rows, PatternCatalog{}, cfg);
  for (double w : p.weights()) CHECK(w == 0.0);
}

TEST_CASE("training: converged gradient is below tolerance and the trace is monotone") {
  auto [data, truth] = generate_synthetic(fixtures::separated_spec(4, 500, 3, 0.8));
  std::vector<std::size_t> rows(data.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  TrainConfig cfg;
  TrainReport rep;
  const auto p = train_per_pattern(data, rows, pat({1, 2}, 4), cfg, &rep);
  REQUIRE(rep.converged);
  const auto tr = TrainingRows::from(data, rows);
  std::vector<double> grad(p.weights().size());
  pseudo_likelihood(p, p.weights(), tr, cfg.l2, grad);
  double n2 = 0.0;
  for (double g : grad) n2 += g * g;
  CHECK(std::sqrt(n2) <= cfg.tol);
  for (std::size_t i = 1; i < rep.trace.size(); ++i) CHECK(rep.trace[i] >= rep.trace[i - 1]);
}

TEST_CASE("training: empty rows and masked training cells are rejected") {
  const Dataset d = fixtures::copy_dataset(10);
  CHECK_THROWS_AS(train_per_pattern(d, {}, pat({1}, 2), TrainConfig{}), InsufficientDataError);
  const Dataset loaded = fixtures::make_dataset({2, 2}, {{0, -1}, {1, 1}});
  const std::vector<std::size_t> rows{0, 1};
  CHECK_THROWS_AS(train_single_model(loaded, rows, PatternCatalog{}, TrainConfig{}), ContractError);
  TrainConfig bad;
  bad.tol = 0.0;
  const std::vector<std::size_t> ok{1};
  CHECK_THROWS_AS(train_single_model(loaded, ok, PatternCatalog{}, bad), ContractError);
}

TEST_CASE("pseudo-likelihood: gradient matches central differences") {
  Rng rng(31);
  const Dataset d = fixtures::uniform_dataset(60, 3, 3, 8);
  std::vector<std::size_t> rows(d.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto tr = TrainingRows::from(d, rows);
  for (auto structure : {MrfParams::single_model(d.cardinalities()),
                         MrfParams::per_pattern(d.cardinalities(), pat({0, 2}, 3))}) {
    for (int point = 0; point < 10; ++point) {
      std::vector<double> theta(structure.weights().size());
      for (double& t : theta) t = 2.0 * (rng.uniform() - 0.5);
      std::vector<double> g(theta.size()), scratch(theta.size());
      pseudo_likelihood(structure, theta, tr, 0.05, g);
      double diff = 0.0, norm = 0.0;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        auto tp = theta, tm = theta;
        tp[i] += 1e-5;
        tm[i] -= 1e-5;
        const double fd = (pseudo_likelihood(structure, tp, tr, 0.05, {}) -
                           pseudo_likelihood(structure, tm, tr, 0.05, {})) / 2e-5;
        diff += (fd - g[i]) * (fd - g[i]);
        norm += g[i] * g[i];
      }
      CHECK(std::sqrt(diff) / std::sqrt(norm) < 1e-4);
    }
  }
}

TEST_CASE("gibbs: one missing column gives exact conditional draws") {
  Rng rng(2);
  auto p = MrfParams::per_pattern({3, 2, 2}, pat({0}, 3));
  for (double& w : p.weights()) w = 3.0 * (rng.uniform() - 0.5);
  const std::vector<int> observed{kUnassigned, 1, 0};
  GibbsConfig cfg;
  cfg.num_samples = 20000;
  cfg.burn_in = 0;
  cfg.thin = 1;
  cfg.seed = 5;
  const auto s = gibbs_sample(p, observed, pat({0}, 3), cfg);
  const auto exact = conditional_distribution(p, observed, 0);
  CHECK(fixtures::total_variation(fixtures::column_frequencies(s, 0, 3), exact) < 0.02);
}

TEST_CASE("gibbs: two binary variables match enumeration") {
  auto p = MrfParams::single_model({2, 2});
  p.set_unary(0, 1, 0.4);
  p.set_unary(1, 0, -0.3);
  p.set_pairwise(0, 1, 1, 1, 1.2);
  p.set_pairwise(0, 0, 1, 1, -0.7);
  GibbsConfig cfg;
  cfg.num_samples = 10000;
  cfg.seed = 11;
  const std::vector<int> observed{kUnassigned, kUnassigned};
  const auto s = gibbs_sample(p, observed, pat({0, 1}, 2), cfg);
  CHECK(s.size() == 10000);
  CHECK(tv_against(enumerate_joint(p), s) < 0.03);
}

TEST_CASE("gibbs: three-variable marginals converge to enumeration") {
  Rng rng(8);
  auto p = MrfParams::single_model({2, 3, 2});
  for (double& w : p.weights()) w = 2.0 * (rng.uniform() - 0.5);
  GibbsConfig cfg;
  cfg.num_samples = 8000;
  cfg.thin = 5;
  cfg.seed = 12;
  const std::vector<int> observed(3, kUnassigned);
  const auto s = gibbs_sample(p, observed, pat({0, 1, 2}, 3), cfg);
  CHECK(tv_against(enumerate_joint(p), s) < 0.05);
}

TEST_CASE("gibbs: deterministic given the seed") {
  Rng rng(3);
  auto p = MrfParams::per_pattern({2, 3, 2}, pat({0, 1}, 3));
  for (double& w : p.weights()) w = rng.uniform() - 0.5;
  const std::vector<int> observed{kUnassigned, kUnassigned, 1};
  GibbsConfig cfg;
  cfg.num_samples = 30;
  cfg.seed = 99;
  CHECK(gibbs_sample(p, observed, pat({0, 1}, 3), cfg) == gibbs_sample(p, observed, pat({0, 1}, 3), cfg));
  cfg.seed = 100;
  const auto other = gibbs_sample(p, observed, pat({0, 1}, 3), cfg);
  cfg.seed = 99;
  CHECK_FALSE(other == gibbs_sample(p, observed, pat({0, 1}, 3), cfg));
}

TEST_CASE("gibbs: scope mismatch is a contract error") {
  const auto p = MrfParams::per_pattern({2, 2, 2}, pat({0}, 3));
  const std::vector<int> observed{kUnassigned, kUnassigned, 1};
  CHECK_THROWS_AS(gibbs_sample(p, observed, pat({0, 1}, 3), GibbsConfig{}), ContractError);
  const std::vector<int> missing_obs{kUnassigned, kUnassigned, 1};
  CHECK_THROWS_AS(gibbs_sample(p, missing_obs, pat({0}, 3), GibbsConfig{}), ContractError);
  // a single model serves any pattern, including all columns missing
  const auto s = MrfParams::single_model({2, 2, 2});
  const std::vector<int> none(3, kUnassigned);
  CHECK(gibbs_sample(s, none, pat({0, 1, 2}, 3), GibbsConfig{}).size() == 25);
}

TEST_CASE("json: save and load is bit exact") {
  Rng rng(6);
  auto p = MrfParams::per_pattern({2, 3, 4}, pat({1}, 3));
  for (double& w : p.weights()) w = (rng.uniform() - 0.5) * 1e3 / 7.0;
  const auto j = mrf_to_json(p);
  const auto back = mrf_from_json(nlohmann::json::parse(j.dump()));
  REQUIRE(back.weights().size() == p.weights().size());
  for (std::size_t i = 0; i < p.weights().size(); ++i) CHECK(back.weights()[i] == p.weights()[i]);
  CHECK(back.scope() == ModelScope::PerPattern);
  CHECK(*back.pattern() == *p.pattern());

  auto s = MrfParams::single_model({2, 2});
  s.set_pairwise(0, 1, 1, 0, 0.1 + 0.2);
  const auto sb = mrf_from_json(nlohmann::json::parse(mrf_to_json(s).dump()));
  CHECK(sb.pairwise(0, 1, 1, 0) == 0.1 + 0.2);
}
