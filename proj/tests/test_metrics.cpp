#include <catch_amalgamated.hpp>

#include <cmath>

#include "support.hpp"

using namespace imputerank;
using fixtures::constant_set;
using fixtures::iid_set;

namespace {

double mean_kl(const std::vector<double>& p, const std::vector<double>& q, std::size_t L, int seeds) {
  double s = 0.0;
  for (int i = 0; i < seeds; ++i)
    s += kl_divergence(iid_set({p}, L, 1000 + i), iid_set({q}, L, 5000 + i)).value;
  return s / seeds;
}

double true_kl(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * std::log(p[i] / q[i]);
  return s;
}

}  // namespace

TEST_CASE("kernel: values and monotonicity") {
  const std::vector<double> x{1, 0, 0, 1}, y{0, 1, 0, 1};
  CHECK(gaussian_kernel(x, x) == 1.0);
  CHECK(gaussian_kernel(x, y) == Catch::Approx(std::exp(-2.0)).margin(1e-15));
  double prev = 0.0;
  for (double s : {0.1, 0.5, 1.0, 2.0, 10.0, 100.0}) {
    const double k = gaussian_kernel(x, y, KernelConfig{s});
    CHECK(k > prev);
    prev = k;
  }
  const std::vector<double> z{1, 0};
  CHECK_THROWS_AS(gaussian_kernel(x, z), ContractError);
  CHECK_THROWS_AS(gaussian_kernel(x, y, KernelConfig{0.0}), ContractError);
}

TEST_CASE("kernel: Hamming table equals the one-hot kernel") {
  const auto a = iid_set({{0.3, 0.7}, {0.2, 0.3, 0.5}}, 6, 1);
  const auto b = iid_set({{0.6, 0.4}, {0.5, 0.3, 0.2}}, 6, 2);
  const auto kh = detail::kernel_by_hamming(2, KernelConfig{1.5});
  for (std::size_t u = 0; u < 6; ++u)
    for (std::size_t v = 0; v < 6; ++v)
      CHECK(kh[static_cast<std::size_t>(hamming(a, u, b, v))] ==
            Catch::Approx(gaussian_kernel(a.one_hot(u), b.one_hot(v), KernelConfig{1.5})).margin(1e-15));
}

TEST_CASE("kl: identical distributions estimate near zero") {
  const std::vector<double> p{0.5, 0.5};
  const double single = kl_divergence(iid_set({p}, 200, 1), iid_set({p}, 200, 2)).value;
  CHECK(std::abs(single) <= 0.1);
  CHECK(std::abs(mean_kl(p, p, 200, 20)) <= 0.1);
}

TEST_CASE("kl: shifted distribution estimate near the closed form") {
  const std::vector<double> p{0.5, 0.5}, q{0.9, 0.1};
  CHECK(true_kl(p, q) == Catch::Approx(0.5108).margin(1e-4));
  CHECK(std::abs(mean_kl(p, q, 200, 20) - true_kl(p, q)) <= 0.3);
}

TEST_CASE("kl: mean estimates follow the true ordering") {
  const std::vector<double> p{0.5, 0.5};
  double prev = -1e9;
  for (const std::vector<double>& q : {std::vector<double>{0.6, 0.4}, {0.8, 0.2}, {0.95, 0.05}}) {
    const double m = mean_kl(p, q, 200, 20);
    CHECK(m > prev);
    prev = m;
  }
}

TEST_CASE("kl: solver invariants") {
  const auto ref = iid_set({{0.5, 0.5}, {0.2, 0.5, 0.3}}, 40, 3);
  const auto imp = iid_set({{0.8, 0.2}, {0.6, 0.2, 0.2}}, 40, 4);
  const auto sol = kl_solve(ref, imp, {}, {}, true);
  CHECK(sol.converged);
  for (double a : sol.alpha) CHECK(a >= 1e-10);
  for (std::size_t i = 1; i < sol.trace.size(); ++i) CHECK(sol.trace[i] <= sol.trace[i - 1]);
  double s = 0.0;
  for (double a : sol.alpha) s += std::log(40.0 * a);
  CHECK(sol.value == Catch::Approx(-s / 40.0).margin(1e-15));
  CHECK(kl_divergence(ref, imp).value == sol.value);
}

TEST_CASE("kl: objective is convex along segments") {
  // Re-evaluate F from its definition on random feasible points.
  const auto ref = iid_set({{0.4, 0.6}}, 12, 5);
  const auto imp = iid_set({{0.7, 0.3}}, 12, 6);
  const std::size_t L = 12;
  const double lambda = KlSolverConfig{}.lambda_for(L);
  const auto kh = detail::kernel_by_hamming(1, KernelConfig{});
  const auto krr = detail::gram(ref, ref, kh);
  const auto kri = detail::gram(ref, imp, kh);
  const auto kii = detail::gram(imp, imp, kh);
  auto F = [&](const std::vector<double>& a) {
    double logs = 0.0, quad = 0.0, lin = 0.0, c = 0.0;
    for (std::size_t u = 0; u < L; ++u) {
      logs += std::log(L * a[u]);
      double b = 0.0;
      for (std::size_t v = 0; v < L; ++v) {
        quad += a[u] * krr[u * L + v] * a[v];
        b += kri[u * L + v] / L;
        c += kii[u * L + v] / (L * L);
      }
      lin += a[u] * b;
    }
    return -logs / L + (quad - 2 * lin + c) / (2 * lambda);
  };
  Rng rng(7);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x(L), y(L), mid(L);
    for (std::size_t i = 0; i < L; ++i) {
      x[i] = 0.001 + rng.uniform() * 0.2;
      y[i] = 0.001 + rng.uniform() * 0.2;
      mid[i] = 0.5 * (x[i] + y[i]);
    }
    CHECK(F(mid) <= 0.5 * (F(x) + F(y)) + 1e-12);
  }
  const auto sol = kl_solve(ref, imp);
  CHECK(sol.objective == Catch::Approx(F(sol.alpha)).margin(1e-10));
}

TEST_CASE("kl: a single sample is finite") {
  const auto a = constant_set({2}, {0}, 1);
  const auto b = constant_set({2}, {1}, 1);
  CHECK(std::isfinite(kl_divergence(a, b).value));
  CHECK(std::isfinite(kl_divergence(a, a).value));
}

TEST_CASE("kl: unequal sizes and mismatched patterns are rejected") {
  CHECK_THROWS_AS(kl_divergence(constant_set({2}, {0}, 3), constant_set({2}, {0}, 4)), ContractError);
  CHECK_THROWS_AS(kl_divergence(constant_set({2}, {0}, 3), constant_set({3}, {0}, 3)), ContractError);
}

TEST_CASE("kl: hitting the iteration cap is flagged") {
  const auto ref = iid_set({{0.5, 0.5}, {0.5, 0.5}}, 30, 1);
  const auto imp = iid_set({{0.9, 0.1}, {0.2, 0.8}}, 30, 2);
  KlSolverConfig cfg;
  cfg.max_iters = 2;
  const auto s = kl_divergence(ref, imp, {}, cfg);
  CHECK_FALSE(s.converged);
  CHECK(std::isfinite(s.value));
}

TEST_CASE("sym kl: identical samples are indistinguishable") {
  const auto a = iid_set({{0.5, 0.5}, {0.3, 0.3, 0.4}}, 100, 9);
  const auto s = symmetric_kl(a, a).value;
  CHECK(std::abs(s - 0.5) <= 0.1);
  const auto b = iid_set({{0.5, 0.5}, {0.3, 0.3, 0.4}}, 100, 10);
  CHECK(std::abs(symmetric_kl(a, b).value - 0.5) <= 0.15);
}

TEST_CASE("sym kl: separated samples score near one") {
  const auto a = constant_set({2}, {0}, 100);
  const auto b = constant_set({2}, {1}, 100);
  CHECK(symmetric_kl(a, b).value == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("sym kl: swapping the arguments leaves the score unchanged") {
  for (int t = 0; t < 20; ++t) {
    const auto a = iid_set({{0.5, 0.5}, {0.2, 0.8}}, 25, 100 + t);
    const auto b = iid_set({{0.7, 0.3}, {0.5, 0.5}}, 25, 200 + t);
    CHECK(symmetric_kl(a, b).value == symmetric_kl(b, a).value);
  }
}

TEST_CASE("sym kl: tiny sample sets fall back to training error") {
  const auto a = constant_set({2}, {0}, 1);
  const auto b = constant_set({2}, {1}, 1);
  CHECK(symmetric_kl(a, b).value == 1.0);
  CHECK(symmetric_kl(a, a).value == 0.5);
}

TEST_CASE("mmd: identical sets give exactly zero") {
  for (int t = 0; t < 100; ++t) {
    const auto a = iid_set({{0.2, 0.8}, {0.3, 0.3, 0.4}, {0.5, 0.5}}, 2 + t % 30, 300 + t);
    const auto copy = a;
    CHECK(mmd_score(a, copy).value == 0.0);
  }
}

TEST_CASE("mmd: two point masses") {
  for (std::size_t L : {2, 5, 25}) {
    const auto s = mmd_score(constant_set({2}, {0}, L), constant_set({2}, {1}, L)).value;
    CHECK(std::abs(s - (2.0 - 2.0 * std::exp(-2.0))) <= 1e-12);
  }
}

TEST_CASE("mmd: symmetric and validated") {
  for (int t = 0; t < 20; ++t) {
    const auto a = iid_set({{0.4, 0.6}, {0.5, 0.5}}, 20, 10 + t);
    const auto b = iid_set({{0.8, 0.2}, {0.1, 0.9}}, 20, 40 + t);
    CHECK(mmd_score(a, b).value == Catch::Approx(mmd_score(b, a).value).margin(1e-15));
  }
  CHECK_THROWS_AS(mmd_score(constant_set({2}, {0}, 1), constant_set({2}, {0}, 1)), ContractError);
  CHECK_THROWS_AS(mmd_score(constant_set({2}, {0}, 3), constant_set({2}, {0}, 4)), ContractError);
}

TEST_CASE("b-test: null acceptance rate") {
  int accepted = 0;
  const int reps = 400;
  const std::vector<std::vector<double>> p{{0.5, 0.5}, {0.3, 0.3, 0.4}};
  for (int t = 0; t < reps; ++t) {
    const auto s = b_test(iid_set(p, 64, 1000 + t), iid_set(p, 64, 9000 + t));
    CHECK((s.value == 0.0 || s.value == 1.0));
    accepted += s.value == 0.0;
  }
  // 0.95 minus three binomial standard deviations
  CHECK(accepted >= static_cast<int>(0.95 * reps - 3 * std::sqrt(reps * 0.95 * 0.05)));
}

TEST_CASE("b-test: separated sets are rejected") {
  const auto d = b_test_detail(constant_set({2}, {0}, 64), constant_set({2}, {1}, 64));
  CHECK(d.block_size == 8);
  CHECK(d.num_blocks == 8);
  CHECK_FALSE(d.accept);
  CHECK(b_test(constant_set({2}, {0}, 64), constant_set({2}, {1}, 64)).value == 1.0);
  CHECK(b_test(constant_set({2}, {0}, 64), constant_set({2}, {0}, 64)).value == 0.0);
}

TEST_CASE("b-test: needs eight samples") {
  CHECK_THROWS_AS(b_test(constant_set({2}, {0}, 7), constant_set({2}, {1}, 7)), TooFewSamplesError);
  CHECK_NOTHROW(b_test(constant_set({2}, {0}, 8), constant_set({2}, {1}, 8)));
}

TEST_CASE("nds: hand-evaluated single samples") {
  const auto ref = constant_set({2, 2}, {0, 1}, 1);
  CHECK(nds(ref, constant_set({2, 2}, {0, 1}, 1)).value == 0.0);
  CHECK(nds(ref, constant_set({2, 2}, {1, 1}, 1)).value == Catch::Approx(1.0).margin(1e-15));
  // h = 2 = h_max: w = 0.01 + 1
  CHECK(nds(ref, constant_set({2, 2}, {1, 0}, 1)).value == Catch::Approx(2.0 * 1.01).margin(1e-15));
  CHECK(NdsConfig{}.lambda == 0.1);
}

TEST_CASE("nds: unequal sizes normalize by both") {
  const auto ref = constant_set({2}, {0}, 2);
  auto imp = constant_set({2}, {1}, 1);
  imp.push_back(std::vector<int>{0});
  imp.push_back(std::vector<int>{0});
  // h=1 against 1 of 3 imputations, w(1) = 0.1 + 1
  CHECK(nds(ref, imp).value == Catch::Approx(1.1 / 3.0).margin(1e-15));
  CHECK_THROWS_AS(nds(ref, constant_set({2, 2}, {0, 0}, 1)), ContractError);
  CHECK_THROWS_AS(nds(ref, imp, NdsConfig{1.0}), ContractError);
}

TEST_CASE("nds: identical sets have zero diagonal terms") {
  const auto a = iid_set({{0.5, 0.5}, {0.3, 0.7}}, 10, 4);
  for (std::size_t u = 0; u < a.size(); ++u) CHECK(hamming(a, u, a, u) == 0);
  CHECK(nds(constant_set({3}, {2}, 5), constant_set({3}, {2}, 5)).value == 0.0);
}

TEST_CASE("nds: packed comparison agrees with a column-by-column sum") {
  Rng rng(91);
  for (std::size_t arity : {1u, 7u, 8u, 9u, 10u, 17u, 24u}) {
    for (int card : {2, 5, 256, 300}) {
      std::vector<std::vector<double>> cols(arity, std::vector<double>(static_cast<std::size_t>(card), 1.0));
      const auto a = iid_set(cols, 12, rng.engine()()), b = iid_set(cols, 9, rng.engine()());
      const double lambda = 0.1;
      double expect = 0.0;
      for (std::size_t u = 0; u < a.size(); ++u)
        for (std::size_t v = 0; v < b.size(); ++v) {
          const double h = hamming(a, u, b, v);
          expect += h * (std::pow(lambda, h) + std::pow(1 - lambda, static_cast<double>(arity) - h));
        }
      expect /= 12.0 * 9.0;
      CHECK(nds(a, b).value == Catch::Approx(expect).epsilon(1e-14));
    }
  }
  // The top level of a 256-level column differs from zero in every bit.
  CHECK(nds(constant_set({256}, {255}, 1), constant_set({256}, {0}, 1)).value == Catch::Approx(1.1));
}

TEST_CASE("metrics: every score is deterministic") {
  const auto a = iid_set({{0.5, 0.5}, {0.3, 0.3, 0.4}}, 25, 1);
  const auto b = iid_set({{0.7, 0.3}, {0.3, 0.5, 0.2}}, 25, 2);
  const MetricSuite suite;
  for (Metric m : kAllMetrics) {
    const auto x = suite.score(m, a, b);
    const auto y = suite.score(m, a, b);
    CHECK(x.value == y.value);
    CHECK(std::isfinite(x.value));
    CHECK(x.metric == m);
  }
}

TEST_CASE("metrics: names round trip") {
  for (Metric m : kAllMetrics) CHECK(parse_metric(metric_name(m)) == m);
  CHECK_THROWS_AS(parse_metric("accuracy"), ConfigError);
}
