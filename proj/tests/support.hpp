#pragma once

// Small fixtures shared by the unit tests.

#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "imputerank/imputerank.hpp"

namespace fixtures {

namespace ir = imputerank;

inline ir::Dataset make_dataset(const std::vector<int>& cards, const std::vector<std::vector<int>>& rows) {
  ir::Dataset d(ir::synthetic_columns(cards), rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cards.size(); ++c) {
      if (rows[r][c] < 0) {
        d.set_cell(r, c, ir::kUnassigned);
        d.set_missing(r, c, true);
      } else {
        d.set_cell(r, c, rows[r][c]);
      }
    }
  return d;
}

/// Column B copies column A; both binary, A uniform.
inline ir::Dataset copy_dataset(std::size_t n, std::uint64_t seed = 1) {
  ir::Dataset d(ir::synthetic_columns({2, 2}), n);
  ir::Rng rng(seed);
  for (std::size_t r = 0; r < n; ++r) {
    const int a = static_cast<int>(rng.below(2));
    d.set_cell(r, 0, a);
    d.set_cell(r, 1, a);
  }
  return d;
}

inline ir::Dataset uniform_dataset(std::size_t n, std::size_t cols, int card, std::uint64_t seed = 1) {
  ir::Dataset d(ir::synthetic_columns(std::vector<int>(cols, card)), n);
  ir::Rng rng(seed);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < cols; ++c) d.set_cell(r, c, static_cast<int>(rng.below(static_cast<std::uint64_t>(card))));
  return d;
}

/// Two components with mirrored, well separated multinomials.
inline ir::SyntheticSpec separated_spec(std::size_t cols, std::size_t rows, std::uint64_t seed, double peak = 0.97) {
  ir::SyntheticSpec s;
  s.cardinalities.assign(cols, 2);
  ir::MixtureComponent a{0.5, {}}, b{0.5, {}};
  for (std::size_t k = 0; k < cols; ++k) {
    a.columns.push_back({peak, 1.0 - peak});
    b.columns.push_back({1.0 - peak, peak});
  }
  s.components = {a, b};
  s.rows = rows;
  s.seed = seed;
  return s;
}

inline ir::SyntheticSpec single_component_spec(std::vector<std::vector<double>> columns, std::size_t rows,
                                               std::uint64_t seed) {
  ir::SyntheticSpec s;
  for (const auto& c : columns) s.cardinalities.push_back(static_cast<int>(c.size()));
  s.components = {{1.0, std::move(columns)}};
  s.rows = rows;
  s.seed = seed;
  return s;
}

/// Empirical distribution of the joint sample vectors.
inline std::map<std::vector<int>, double> empirical(const ir::SampleSet& s) {
  std::map<std::vector<int>, double> f;
  for (std::size_t u = 0; u < s.size(); ++u) {
    auto v = s.sample(u);
    f[std::vector<int>(v.begin(), v.end())] += 1.0 / static_cast<double>(s.size());
  }
  return f;
}

inline std::vector<double> column_frequencies(const ir::SampleSet& s, std::size_t j, int card) {
  std::vector<double> f(static_cast<std::size_t>(card), 0.0);
  for (std::size_t u = 0; u < s.size(); ++u) f[static_cast<std::size_t>(s.sample(u)[j])] += 1.0;
  for (double& v : f) v /= static_cast<double>(s.size());
  return f;
}

inline double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
  return tv / 2.0;
}

inline ir::SampleSet constant_set(const std::vector<int>& cards, const std::vector<int>& value, std::size_t L) {
  std::vector<std::size_t> m(cards.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = i;
  ir::SampleSet s(ir::MissingPattern(m, cards.size()), cards);
  for (std::size_t u = 0; u < L; ++u) s.push_back(value);
  return s;
}

inline ir::SampleSet iid_set(const std::vector<std::vector<double>>& column_probs, std::size_t L, std::uint64_t seed) {
  std::vector<int> cards;
  for (const auto& p : column_probs) cards.push_back(static_cast<int>(p.size()));
  std::vector<std::size_t> m(cards.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = i;
  ir::SampleSet s(ir::MissingPattern(m, cards.size()), cards);
  ir::Rng rng(seed);
  std::vector<int> v(cards.size());
  for (std::size_t u = 0; u < L; ++u) {
    for (std::size_t k = 0; k < cards.size(); ++k) v[k] = static_cast<int>(rng.categorical(column_probs[k]));
    s.push_back(v);
  }
  return s;
}

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("imputerank_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixtures
