#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "imputerank/error.hpp"
#include "imputerank/random.hpp"

namespace imputerank {

/// Value stored in an observed-values vector at positions that are missing.
inline constexpr int kUnassigned = -1;

struct ColumnSpec {
  std::string name;
  int cardinality = 2;
  std::vector<std::string> levels;  // level tokens, index = level id; may be empty for synthetic data

  friend bool operator==(const ColumnSpec&, const ColumnSpec&) = default;
};

/// Categorical table with a missingness mask. Cells under the mask may hold
/// the pre-masking value (after `inject_mcar`) or `kUnassigned` (loaded
/// data); either way they must never reach an imputer.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::vector<ColumnSpec> columns, std::size_t rows)
      : columns_(std::move(columns)),
        rows_(rows),
        cells_(rows * columns_.size(), 0),
        mask_(rows * columns_.size(), 0) {
    for (const auto& c : columns_) {
      if (c.cardinality < 2) throw ContractError("column '" + c.name + "' has cardinality < 2");
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return columns_.size(); }
  const std::vector<ColumnSpec>& columns() const noexcept { return columns_; }
  int cardinality(std::size_t col) const { return columns_[col].cardinality; }

  std::vector<int> cardinalities() const {
    std::vector<int> out;
    out.reserve(columns_.size());
    for (const auto& c : columns_) out.push_back(c.cardinality);
    return out;
  }

  int cell(std::size_t row, std::size_t col) const { return cells_[row * cols() + col]; }
  bool missing(std::size_t row, std::size_t col) const { return mask_[row * cols() + col] != 0; }

  void set_cell(std::size_t row, std::size_t col, int value) {
    if (value != kUnassigned && (value < 0 || value >= cardinality(col))) {
      throw ContractError("cell value " + std::to_string(value) + " out of range for column '" +
                          columns_[col].name + "'");
    }
    cells_[row * cols() + col] = value;
  }
  void set_missing(std::size_t row, std::size_t col, bool m) { mask_[row * cols() + col] = m ? 1 : 0; }

  /// Overwrites a cell without range checks. Only meant for sentinel tests.
  void poison_cell(std::size_t row, std::size_t col, int value) { cells_[row * cols() + col] = value; }

  bool row_complete(std::size_t row) const {
    const auto* m = mask_.data() + row * cols();
    return std::none_of(m, m + cols(), [](std::uint8_t v) { return v != 0; });
  }

  std::size_t missing_count() const {
    return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
  }

  /// Row values with every masked cell replaced by `kUnassigned`. This is the
  /// only view of a row handed to imputers and the reference sampler.
  std::vector<int> observed_values(std::size_t row) const {
    std::vector<int> out(cols());
    for (std::size_t c = 0; c < cols(); ++c) out[c] = missing(row, c) ? kUnassigned : cell(row, c);
    return out;
  }

  /// Raw cell values of a row, including retained values under the mask.
  std::span<const int> raw_row(std::size_t row) const { return {cells_.data() + row * cols(), cols()}; }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::vector<ColumnSpec> columns_;
  std::size_t rows_ = 0;
  std::vector<int> cells_;
  std::vector<std::uint8_t> mask_;
};

/// A unique set of simultaneously missing columns and its complement.
class MissingPattern {
 public:
  MissingPattern() = default;

  MissingPattern(std::vector<std::size_t> missing, std::size_t num_cols) : missing_(std::move(missing)) {
    std::sort(missing_.begin(), missing_.end());
    missing_.erase(std::unique(missing_.begin(), missing_.end()), missing_.end());
    if (missing_.empty()) throw ContractError("missing pattern must be nonempty");
    if (missing_.back() >= num_cols) throw ContractError("missing pattern column out of range");
    observed_.reserve(num_cols - missing_.size());
    for (std::size_t c = 0, j = 0; c < num_cols; ++c) {
      if (j < missing_.size() && missing_[j] == c) {
        ++j;
      } else {
        observed_.push_back(c);
      }
    }
  }

  const std::vector<std::size_t>& missing() const noexcept { return missing_; }
  const std::vector<std::size_t>& observed() const noexcept { return observed_; }
  std::size_t num_cols() const noexcept { return missing_.size() + observed_.size(); }
  bool is_missing(std::size_t col) const { return std::binary_search(missing_.begin(), missing_.end(), col); }

  friend bool operator==(const MissingPattern&, const MissingPattern&) = default;
  friend auto operator<=>(const MissingPattern& a, const MissingPattern& b) {
    if (auto c = a.num_cols() <=> b.num_cols(); c != 0) return c;
    return a.missing_ <=> b.missing_;
  }

 private:
  std::vector<std::size_t> missing_;
  std::vector<std::size_t> observed_;
};

inline MissingPattern pattern_of_row(const Dataset& data, std::size_t row) {
  std::vector<std::size_t> m;
  for (std::size_t c = 0; c < data.cols(); ++c)
    if (data.missing(row, c)) m.push_back(c);
  return MissingPattern(std::move(m), data.cols());
}

struct PatternGroup {
  MissingPattern pattern;
  std::vector<std::size_t> rows;
};

/// Patterns in order of first appearance among the listed rows.
struct PatternCatalog {
  std::vector<PatternGroup> groups;

  std::size_t size() const noexcept { return groups.size(); }

  /// Index of the group whose pattern equals `p`, or size() when absent.
  std::size_t find(const MissingPattern& p) const {
    for (std::size_t j = 0; j < groups.size(); ++j)
      if (groups[j].pattern == p) return j;
    return groups.size();
  }
};

struct RowSplit {
  std::vector<std::size_t> complete;     // D_N
  std::vector<std::size_t> incomplete;   // D_M
};

/// Masks every cell independently with probability `rate`. Cell values are
/// kept under the mask so oracle checks can compare against them.
inline Dataset inject_mcar(const Dataset& data, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 0.5)) throw DomainError("missing rate must lie in [0, 0.5]");
  if (data.missing_count() != 0) throw ContractError("inject_mcar requires a dataset without missing cells");
  Dataset out = data;
  Rng rng(seed);
  for (std::size_t r = 0; r < data.rows(); ++r)
    for (std::size_t c = 0; c < data.cols(); ++c)
      if (rng.uniform() < rate) out.set_missing(r, c, true);
  return out;
}

inline RowSplit split_rows(const Dataset& data) {
  RowSplit s;
  for (std::size_t r = 0; r < data.rows(); ++r) (data.row_complete(r) ? s.complete : s.incomplete).push_back(r);
  if (s.complete.empty()) throw InsufficientDataError("no fully observed rows to train on");
  return s;
}

inline PatternCatalog extract_patterns(const Dataset& data, std::span<const std::size_t> rows) {
  PatternCatalog cat;
  std::map<std::vector<std::size_t>, std::size_t> index;
  for (std::size_t r : rows) {
    if (data.row_complete(r)) throw ContractError("row " + std::to_string(r) + " has no missing cells");
    MissingPattern p = pattern_of_row(data, r);
    auto [it, inserted] = index.try_emplace(p.missing(), cat.groups.size());
    if (inserted) cat.groups.push_back({std::move(p), {}});
    cat.groups[it->second].rows.push_back(r);
  }
  return cat;
}

}  // namespace imputerank
