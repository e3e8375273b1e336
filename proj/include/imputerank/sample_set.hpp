#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "imputerank/dataset.hpp"
#include "imputerank/error.hpp"

namespace imputerank {

/// L imputations of one row's missing columns, stored row-major (L x |m|).
class SampleSet {
 public:
  SampleSet() = default;

  /// `cardinalities` holds the cardinality of every dataset column.
  SampleSet(MissingPattern pattern, std::span<const int> cardinalities) : pattern_(std::move(pattern)) {
    if (cardinalities.size() != pattern_.num_cols()) throw ContractError("cardinalities/pattern width mismatch");
    for (std::size_t k : pattern_.missing()) cards_.push_back(cardinalities[k]);
  }

  const MissingPattern& pattern() const noexcept { return pattern_; }
  std::size_t size() const noexcept { return arity() == 0 ? 0 : values_.size() / arity(); }
  std::size_t arity() const noexcept { return cards_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  const std::vector<int>& cardinalities() const noexcept { return cards_; }

  std::span<const int> sample(std::size_t u) const { return {values_.data() + u * arity(), arity()}; }
  const std::vector<int>& flat() const noexcept { return values_; }

  void push_back(std::span<const int> values) {
    if (values.size() != arity()) throw ContractError("sample has wrong arity");
    for (std::size_t j = 0; j < values.size(); ++j)
      if (values[j] < 0 || values[j] >= cards_[j])
        throw ContractError("sample value out of range for column " + std::to_string(pattern_.missing()[j]));
    values_.insert(values_.end(), values.begin(), values.end());
  }

  void reserve(std::size_t n) { values_.reserve(n * arity()); }

  std::size_t encoded_width() const noexcept {
    std::size_t w = 0;
    for (int c : cards_) w += static_cast<std::size_t>(c);
    return w;
  }

  /// One-hot encoding of sample u (length = sum of missing cardinalities).
  std::vector<double> one_hot(std::size_t u) const {
    std::vector<double> v(encoded_width(), 0.0);
    std::size_t off = 0;
    auto s = sample(u);
    for (std::size_t j = 0; j < arity(); ++j) {
      v[off + static_cast<std::size_t>(s[j])] = 1.0;
      off += static_cast<std::size_t>(cards_[j]);
    }
    return v;
  }

  friend bool operator==(const SampleSet&, const SampleSet&) = default;

 private:
  MissingPattern pattern_;
  std::vector<int> cards_;
  std::vector<int> values_;
};

/// Hamming distance between sample u of `a` and sample v of `b`.
inline int hamming(const SampleSet& a, std::size_t u, const SampleSet& b, std::size_t v) {
  auto x = a.sample(u);
  auto y = b.sample(v);
  int h = 0;
  for (std::size_t j = 0; j < x.size(); ++j) h += x[j] != y[j];
  return h;
}

}  // namespace imputerank
