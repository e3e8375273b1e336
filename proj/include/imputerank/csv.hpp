#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "imputerank/dataset.hpp"
#include "imputerank/error.hpp"

namespace imputerank {

inline constexpr const char* kMissingToken = "NA";

/// Level names used when a column has a single observed level and must be
/// padded to the minimum cardinality of 2.
inline constexpr const char* kPaddingLevel = "<unobserved>";

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline bool is_missing_token(const std::string& s) { return s.empty() || s == kMissingToken; }

}  // namespace detail

/// Parses a header-first, comma-separated categorical table. Without a
/// schema, level ids follow first-appearance order per column. Missing
/// tokens are the empty string and "NA".
inline Dataset read_csv(std::istream& in, const std::optional<std::vector<ColumnSpec>>& schema = std::nullopt) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header row");
  std::vector<std::string> header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);
  const std::size_t d = header.size();

  if (schema) {
    if (schema->size() != d) throw SchemaError("schema has " + std::to_string(schema->size()) +
                                               " columns but header has " + std::to_string(d));
    for (std::size_t c = 0; c < d; ++c) {
      if ((*schema)[c].name != header[c])
        throw SchemaError("schema column '" + (*schema)[c].name + "' does not match header '" + header[c] + "'");
      if (static_cast<int>((*schema)[c].levels.size()) != (*schema)[c].cardinality)
        throw SchemaError("schema column '" + header[c] + "' must list exactly `cardinality` levels");
    }
  }

  std::vector<std::unordered_map<std::string, int>> lookup(d);
  std::vector<std::vector<std::string>> levels(d);
  if (schema) {
    for (std::size_t c = 0; c < d; ++c) {
      levels[c] = (*schema)[c].levels;
      for (int l = 0; l < static_cast<int>(levels[c].size()); ++l) lookup[c].emplace(levels[c][l], l);
    }
  }

  std::vector<std::vector<int>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != d)
      throw ParseError("row at line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                       " fields, expected " + std::to_string(d));
    std::vector<int> row(d);
    for (std::size_t c = 0; c < d; ++c) {
      std::string tok = detail::trim(fields[c]);
      if (detail::is_missing_token(tok)) {
        row[c] = kUnassigned;
        continue;
      }
      auto it = lookup[c].find(tok);
      if (it == lookup[c].end()) {
        if (schema)
          throw SchemaError("unknown token '" + tok + "' in column '" + header[c] + "' at line " +
                            std::to_string(line_no));
        it = lookup[c].emplace(tok, static_cast<int>(levels[c].size())).first;
        levels[c].push_back(tok);
      }
      row[c] = it->second;
    }
    rows.push_back(std::move(row));
  }

  std::vector<ColumnSpec> cols(d);
  for (std::size_t c = 0; c < d; ++c) {
    cols[c].name = header[c];
    cols[c].levels = std::move(levels[c]);
    while (cols[c].levels.size() < 2) cols[c].levels.push_back(kPaddingLevel);
    cols[c].cardinality = static_cast<int>(cols[c].levels.size());
  }
  Dataset data(std::move(cols), rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      data.set_cell(r, c, rows[r][c]);
      data.set_missing(r, c, rows[r][c] == kUnassigned);
    }
  }
  return data;
}

inline Dataset load_csv(const std::filesystem::path& path,
                        const std::optional<std::vector<ColumnSpec>>& schema = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  try {
    return read_csv(in, schema);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

/// Writes masked cells as "NA". Columns without level names use the level
/// index as token.
inline void write_csv(std::ostream& out, const Dataset& data) {
  const auto& cols = data.columns();
  for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << detail::quote_if_needed(cols[c].name);
  out << '\n';
  for (std::size_t r = 0; r < data.rows(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (c) out << ',';
      if (data.missing(r, c)) {
        out << kMissingToken;
      } else {
        const int v = data.cell(r, c);
        out << (cols[c].levels.empty() ? std::to_string(v) : detail::quote_if_needed(cols[c].levels[v]));
      }
    }
    out << '\n';
  }
}

inline void write_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  write_csv(out, data);
}

}  // namespace imputerank
