#pragma once

// CSV ingestion and write-back. UTF-8, header row required, comma
// delimiter, decimal point. Rows with missing or unparseable cells are
// rejected with a row-indexed error rather than imputed.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "cpfilter/data.hpp"
#include "cpfilter/errors.hpp"

namespace cpfilter {

/// Maps CSV columns to outcome roles. Columns not named here become
/// features. Feature columns whose values are all 0/1 are flagged binary
/// unless listed in force_continuous; binary_features forces the check.
struct OutcomeSpec {
  OutcomeKind kind = OutcomeKind::continuous;
  std::string y_column;       // continuous / binary
  std::string time_column;    // survival / competing risks
  std::string event_column;   // survival
  std::string cause_column;   // competing risks
  std::vector<std::string> binary_features;
  std::vector<std::string> force_continuous;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_double(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  if (!std::isfinite(value)) return std::nullopt;
  return value;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline Dataset load_csv(const std::filesystem::path& path, const OutcomeSpec& spec) {
  std::ifstream in(path);
  if (!in.is_open()) throw FileNotFoundError(path.string());

  std::string line;
  if (!std::getline(in, line)) throw SchemaMismatchError("empty file: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);

  auto column_index = [&](const std::string& name) -> int {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (detail::trim(header[j]) == name) return static_cast<int>(j);
    }
    return -1;
  };
  auto require_column = [&](const std::string& name, const char* role) {
    if (name.empty()) {
      throw SchemaMismatchError(std::string("outcome spec is missing the ") + role +
                                " column name");
    }
    const int idx = column_index(name);
    if (idx < 0) {
      throw SchemaMismatchError("column '" + name + "' (" + role + ") not found in header");
    }
    return idx;
  };

  std::vector<int> outcome_cols;
  int y_idx = -1, time_idx = -1, event_idx = -1, cause_idx = -1;
  switch (spec.kind) {
    case OutcomeKind::continuous:
    case OutcomeKind::binary:
      y_idx = require_column(spec.y_column, "outcome");
      outcome_cols = {y_idx};
      break;
    case OutcomeKind::survival:
      time_idx = require_column(spec.time_column, "time");
      event_idx = require_column(spec.event_column, "event");
      outcome_cols = {time_idx, event_idx};
      break;
    case OutcomeKind::competing_risks:
      time_idx = require_column(spec.time_column, "time");
      cause_idx = require_column(spec.cause_column, "cause");
      outcome_cols = {time_idx, cause_idx};
      break;
  }

  std::vector<int> feature_cols;
  std::vector<std::string> feature_names;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (std::find(outcome_cols.begin(), outcome_cols.end(), static_cast<int>(j)) !=
        outcome_cols.end()) {
      continue;
    }
    feature_cols.push_back(static_cast<int>(j));
    feature_names.push_back(detail::trim(header[j]));
  }
  for (const auto& name : spec.binary_features) {
    if (std::find(feature_names.begin(), feature_names.end(), name) == feature_names.end()) {
      throw SchemaMismatchError("declared-binary column '" + name + "' not found in header");
    }
  }

  std::vector<std::vector<double>> rows;
  long row_number = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    ++row_number;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError(row_number, "<row>",
                       "expected " + std::to_string(header.size()) + " cells, found " +
                           std::to_string(cells.size()));
    }
    std::vector<double> parsed(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const auto value = detail::parse_double(cells[j]);
      if (!value) {
        throw ParseError(row_number, detail::trim(header[j]),
                         "unparseable value '" + detail::trim(cells[j]) + "'");
      }
      parsed[j] = *value;
    }
    rows.push_back(std::move(parsed));
  }
  if (rows.empty()) throw SchemaMismatchError("no data rows in " + path.string());

  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(feature_cols.size());
  if (p == 0) throw SchemaMismatchError("no feature columns left after outcome mapping");

  FeatureMatrix x;
  x.values.resize(n, p);
  x.column_names = feature_names;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) x.values(i, j) = rows[i][feature_cols[j]];
  }
  x.require_unique_names();

  const std::unordered_set<std::string> declared(spec.binary_features.begin(),
                                                 spec.binary_features.end());
  const std::unordered_set<std::string> forced(spec.force_continuous.begin(),
                                               spec.force_continuous.end());
  x.column_kinds.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const bool is_declared = declared.count(feature_names[j]) > 0;
    bool all_01 = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = x.values(i, j);
      if (v != 0.0 && v != 1.0) {
        if (is_declared) throw NonBinaryValueError(i + 1, feature_names[j], v);
        all_01 = false;
        break;
      }
    }
    const bool binary = is_declared || (all_01 && forced.count(feature_names[j]) == 0);
    x.column_kinds[j] = binary ? ColumnKind::binary : ColumnKind::continuous;
  }

  Outcome y;
  auto column_vector = [&](int idx) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = rows[i][idx];
    return v;
  };
  auto int_vector = [&](int idx, const std::string& name) {
    Eigen::VectorXi v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double raw = rows[i][idx];
      const int k = static_cast<int>(raw);
      if (static_cast<double>(k) != raw) {
        throw ParseError(i + 1, name, "expected an integer code, found " +
                                          detail::format_double(raw));
      }
      v[i] = k;
    }
    return v;
  };
  switch (spec.kind) {
    case OutcomeKind::continuous: y = Outcome::continuous(column_vector(y_idx)); break;
    case OutcomeKind::binary: {
      const auto raw = column_vector(y_idx);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (raw[i] != 0.0 && raw[i] != 1.0) {
          throw NonBinaryValueError(i + 1, spec.y_column, raw[i]);
        }
      }
      y = Outcome::binary(raw);
      break;
    }
    case OutcomeKind::survival:
      y = Outcome::survival(column_vector(time_idx), int_vector(event_idx, spec.event_column));
      break;
    case OutcomeKind::competing_risks:
      y = Outcome::competing_risks(column_vector(time_idx),
                                   int_vector(cause_idx, spec.cause_column));
      break;
  }

  Dataset d{std::move(x), std::move(y)};
  d.require_aligned();
  return d;
}

/// Loads every column as a feature; no outcome is extracted. Columns whose
/// values are all 0/1 are typed binary, as in load_csv.
inline FeatureMatrix load_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in.is_open()) throw FileNotFoundError(path.string());

  std::string line;
  if (!std::getline(in, line)) throw SchemaMismatchError("empty file: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);

  std::vector<std::vector<double>> rows;
  long row_number = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    ++row_number;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError(row_number, "<row>",
                       "expected " + std::to_string(header.size()) + " cells, found " +
                           std::to_string(cells.size()));
    }
    std::vector<double> parsed(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const auto value = detail::parse_double(cells[j]);
      if (!value) {
        throw ParseError(row_number, detail::trim(header[j]),
                         "unparseable value '" + detail::trim(cells[j]) + "'");
      }
      parsed[j] = *value;
    }
    rows.push_back(std::move(parsed));
  }
  if (rows.empty()) throw SchemaMismatchError("no data rows in " + path.string());

  FeatureMatrix x;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(header.size());
  x.values.resize(n, p);
  x.column_names.reserve(header.size());
  for (const auto& h : header) x.column_names.push_back(detail::trim(h));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) x.values(i, j) = rows[i][j];
  }
  x.require_unique_names();
  x.column_kinds.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    bool all_01 = true;
    for (Eigen::Index i = 0; i < n && all_01; ++i) {
      const double v = x.values(i, j);
      all_01 = v == 0.0 || v == 1.0;
    }
    x.column_kinds[j] = all_01 ? ColumnKind::binary : ColumnKind::continuous;
  }
  return x;
}

/// Writes a dataset back out with the outcome columns appended after the
/// features, using shortest round-trip number formatting.
inline void write_csv(const std::filesystem::path& path, const Dataset& d,
                      const OutcomeSpec& spec) {
  std::ofstream out(path);
  if (!out.is_open()) throw ValidationError("cannot open for writing: " + path.string());
  for (Eigen::Index j = 0; j < d.x.cols(); ++j) {
    if (j > 0) out << ',';
    out << d.x.column_names[j];
  }
  switch (spec.kind) {
    case OutcomeKind::continuous:
    case OutcomeKind::binary: out << ',' << spec.y_column; break;
    case OutcomeKind::survival: out << ',' << spec.time_column << ',' << spec.event_column; break;
    case OutcomeKind::competing_risks:
      out << ',' << spec.time_column << ',' << spec.cause_column;
      break;
  }
  out << '\n';
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.x.cols(); ++j) {
      if (j > 0) out << ',';
      out << detail::format_double(d.x.values(i, j));
    }
    switch (d.y.kind) {
      case OutcomeKind::continuous:
      case OutcomeKind::binary: out << ',' << detail::format_double(d.y.y[i]); break;
      case OutcomeKind::survival:
        out << ',' << detail::format_double(d.y.time[i]) << ',' << d.y.event[i];
        break;
      case OutcomeKind::competing_risks:
        out << ',' << detail::format_double(d.y.time[i]) << ',' << d.y.cause[i];
        break;
    }
    out << '\n';
  }
}

}  // namespace cpfilter
