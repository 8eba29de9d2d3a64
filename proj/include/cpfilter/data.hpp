#pragma once

// Dataset representation: feature matrix with per-column kinds, typed
// outcomes, standardization, row splitting, and the percentile grid used
// by the conditional-prediction importance computation.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cpfilter/errors.hpp"
#include "cpfilter/rng.hpp"

namespace cpfilter {

enum class ColumnKind { continuous, binary };

struct FeatureMatrix {
  Eigen::MatrixXd values;                  // rows = observations, cols = features
  std::vector<std::string> column_names;
  std::vector<ColumnKind> column_kinds;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }

  void require_unique_names() const {
    std::unordered_set<std::string> seen;
    for (const auto& name : column_names) {
      if (!seen.insert(name).second) {
        throw SchemaMismatchError("duplicate column name: " + name);
      }
    }
  }

  FeatureMatrix select_rows(const std::vector<int>& idx) const {
    FeatureMatrix out;
    out.values.resize(static_cast<Eigen::Index>(idx.size()), cols());
    for (std::size_t r = 0; r < idx.size(); ++r) out.values.row(r) = values.row(idx[r]);
    out.column_names = column_names;
    out.column_kinds = column_kinds;
    return out;
  }
};

/// Column-wise concatenation [left, right]; kinds and names carried over.
inline FeatureMatrix hcat(const FeatureMatrix& left, const FeatureMatrix& right) {
  if (left.rows() != right.rows()) {
    throw DimensionMismatchError("hcat: row counts differ");
  }
  FeatureMatrix out;
  out.values.resize(left.rows(), left.cols() + right.cols());
  out.values << left.values, right.values;
  out.column_names = left.column_names;
  out.column_names.insert(out.column_names.end(), right.column_names.begin(),
                          right.column_names.end());
  out.column_kinds = left.column_kinds;
  out.column_kinds.insert(out.column_kinds.end(), right.column_kinds.begin(),
                          right.column_kinds.end());
  return out;
}

enum class OutcomeKind { continuous, binary, survival, competing_risks };

inline const char* to_string(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::continuous: return "continuous";
    case OutcomeKind::binary: return "binary";
    case OutcomeKind::survival: return "survival";
    case OutcomeKind::competing_risks: return "competing_risks";
  }
  return "?";
}

/// Tagged outcome. Only the fields for the active kind are populated:
/// y for continuous/binary, time+event for survival, time+cause for
/// competing risks (cause 0 = censored).
struct Outcome {
  OutcomeKind kind = OutcomeKind::continuous;
  Eigen::VectorXd y;
  Eigen::VectorXd time;
  Eigen::VectorXi event;
  Eigen::VectorXi cause;

  Eigen::Index size() const {
    switch (kind) {
      case OutcomeKind::continuous:
      case OutcomeKind::binary: return y.size();
      case OutcomeKind::survival:
      case OutcomeKind::competing_risks: return time.size();
    }
    return 0;
  }

  static Outcome continuous(Eigen::VectorXd values) {
    Outcome o;
    o.kind = OutcomeKind::continuous;
    o.y = std::move(values);
    return o;
  }

  static Outcome binary(Eigen::VectorXd values) {
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      if (values[i] != 0.0 && values[i] != 1.0) {
        throw NonBinaryValueError(i + 1, "outcome", values[i]);
      }
    }
    Outcome o;
    o.kind = OutcomeKind::binary;
    o.y = std::move(values);
    return o;
  }

  static Outcome survival(Eigen::VectorXd time, Eigen::VectorXi event) {
    if (time.size() != event.size()) {
      throw DimensionMismatchError("survival outcome: time/event lengths differ");
    }
    for (Eigen::Index i = 0; i < time.size(); ++i) {
      if (!(time[i] > 0.0)) {
        throw ValidationError("survival time must be strictly positive (row " +
                              std::to_string(i + 1) + ")");
      }
      if (event[i] != 0 && event[i] != 1) {
        throw ValidationError("survival event must be 0 or 1 (row " +
                              std::to_string(i + 1) + ")");
      }
    }
    Outcome o;
    o.kind = OutcomeKind::survival;
    o.time = std::move(time);
    o.event = std::move(event);
    return o;
  }

  static Outcome competing_risks(Eigen::VectorXd time, Eigen::VectorXi cause) {
    if (time.size() != cause.size()) {
      throw DimensionMismatchError("competing risks outcome: time/cause lengths differ");
    }
    for (Eigen::Index i = 0; i < time.size(); ++i) {
      if (!(time[i] > 0.0)) {
        throw ValidationError("event time must be strictly positive (row " +
                              std::to_string(i + 1) + ")");
      }
      if (cause[i] < 0 || cause[i] > 2) {
        throw ValidationError("cause must be in {0,1,2} (row " +
                              std::to_string(i + 1) + ")");
      }
    }
    Outcome o;
    o.kind = OutcomeKind::competing_risks;
    o.time = std::move(time);
    o.cause = std::move(cause);
    return o;
  }

  Outcome select_rows(const std::vector<int>& idx) const {
    Outcome o;
    o.kind = kind;
    auto pick_d = [&](const Eigen::VectorXd& v) {
      Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[idx[i]];
      return out;
    };
    auto pick_i = [&](const Eigen::VectorXi& v) {
      Eigen::VectorXi out(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[idx[i]];
      return out;
    };
    switch (kind) {
      case OutcomeKind::continuous:
      case OutcomeKind::binary: o.y = pick_d(y); break;
      case OutcomeKind::survival:
        o.time = pick_d(time);
        o.event = pick_i(event);
        break;
      case OutcomeKind::competing_risks:
        o.time = pick_d(time);
        o.cause = pick_i(cause);
        break;
    }
    return o;
  }
};

struct Dataset {
  FeatureMatrix x;
  Outcome y;

  Eigen::Index rows() const { return x.rows(); }

  void require_aligned() const {
    if (x.rows() != y.size()) {
      throw DimensionMismatchError("feature matrix and outcome lengths differ");
    }
  }
};

/// Per-column centering/scaling record. Binary columns are passed through
/// (standardized[j] = false) and keep mean 0 / scale 1 placeholders.
struct StandardizationParams {
  std::vector<double> mean;
  std::vector<double> scale;
  std::vector<bool> standardized;
};

/// Sample standard deviation with the N-1 denominator.
inline double sample_sd(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const Eigen::Index n = v.size();
  if (n < 2) return 0.0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(n - 1));
}

/// Centers and scales every continuous column to mean 0, sd 1 (N-1
/// denominator). Binary columns are returned unchanged.
inline std::pair<FeatureMatrix, StandardizationParams> standardize(const FeatureMatrix& m) {
  FeatureMatrix out = m;
  StandardizationParams params;
  params.mean.assign(m.cols(), 0.0);
  params.scale.assign(m.cols(), 1.0);
  params.standardized.assign(m.cols(), false);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (m.column_kinds[j] == ColumnKind::binary) continue;
    const double mu = m.values.col(j).mean();
    const double sd = sample_sd(m.values.col(j));
    if (!(sd > 0.0)) {
      throw ConstantColumnError(m.column_names[j]);
    }
    out.values.col(j) = (m.values.col(j).array() - mu) / sd;
    params.mean[j] = mu;
    params.scale[j] = sd;
    params.standardized[j] = true;
  }
  return {std::move(out), std::move(params)};
}

inline FeatureMatrix destandardize(const FeatureMatrix& m, const StandardizationParams& p) {
  if (static_cast<std::size_t>(m.cols()) != p.mean.size()) {
    throw DimensionMismatchError("destandardize: params do not match matrix width");
  }
  FeatureMatrix out = m;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (!p.standardized[j]) continue;
    out.values.col(j) = m.values.col(j).array() * p.scale[j] + p.mean[j];
  }
  return out;
}

/// Deterministic disjoint row split. Train size is round(N * fraction).
inline std::pair<Dataset, Dataset> train_test_split(const Dataset& d, double train_fraction,
                                                    std::uint64_t seed) {
  d.require_aligned();
  const int n = static_cast<int>(d.rows());
  const int n_train = static_cast<int>(std::llround(train_fraction * n));
  if (n_train <= 0 || n_train >= n) {
    throw DegenerateSplitError("split of " + std::to_string(n) + " rows at fraction " +
                               std::to_string(train_fraction) + " leaves an empty side");
  }
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed, /*stream=*/0x5911ULL);
  rng.shuffle(idx);
  std::vector<int> train_idx(idx.begin(), idx.begin() + n_train);
  std::vector<int> test_idx(idx.begin() + n_train, idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  Dataset train{d.x.select_rows(train_idx), d.y.select_rows(train_idx)};
  Dataset test{d.x.select_rows(test_idx), d.y.select_rows(test_idx)};
  return {std::move(train), std::move(test)};
}

/// Empirical quantile with linear interpolation between order statistics
/// (the "type 7" rule). Input must be sorted ascending.
inline double quantile_sorted(const std::vector<double>& sorted, double level) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = level * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

/// Per-feature evaluation points: J empirical quantiles at levels
/// j/(J+1) for continuous columns, the fixed grid {0,1} for binary ones.
struct PercentileGrid {
  int J = 0;
  std::vector<std::vector<double>> values;  // one vector per column
};

inline PercentileGrid percentile_grid(const FeatureMatrix& m, int J) {
  if (J < 1) throw ValidationError("percentile grid needs J >= 1");
  if (m.rows() == 0) throw ValidationError("percentile grid needs a nonempty matrix");
  PercentileGrid grid;
  grid.J = J;
  grid.values.resize(m.cols());
  std::vector<double> col(m.rows());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (m.column_kinds[j] == ColumnKind::binary) {
      grid.values[j] = {0.0, 1.0};
      continue;
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) col[r] = m.values(r, j);
    std::sort(col.begin(), col.end());
    grid.values[j].resize(J);
    for (int q = 1; q <= J; ++q) {
      grid.values[j][q - 1] = quantile_sorted(col, static_cast<double>(q) / (J + 1));
    }
  }
  return grid;
}

}  // namespace cpfilter
