#pragma once

// Knockoff and knockoff+ selection thresholds over W statistics, plus
// FDP/power scoring against known truth for simulation runs.

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "cpfilter/errors.hpp"

namespace cpfilter {

enum class SelectionKind { knockoff, knockoff_plus };

inline const char* to_string(SelectionKind k) {
  return k == SelectionKind::knockoff ? "knockoff" : "knockoff_plus";
}

struct SelectionResult {
  double threshold = std::numeric_limits<double>::infinity();
  std::vector<int> selected;  // feature indices with W_j >= threshold, ascending
  SelectionKind kind = SelectionKind::knockoff;
  double q = 0.0;
};

namespace detail {

inline SelectionResult threshold_impl(const std::vector<double>& w, double q,
                                      SelectionKind kind) {
  if (!(q > 0.0 && q < 1.0)) throw InvalidQError("q must lie in (0,1)");
  for (double v : w) {
    if (!std::isfinite(v)) throw ValidationError("W contains a non-finite value");
  }
  // Candidate thresholds: distinct positive magnitudes of nonzero W. The
  // infimum over t > 0 is always attained at one of these.
  std::set<double> candidates;
  for (double v : w) {
    if (v != 0.0) candidates.insert(std::abs(v));
  }
  const double offset = kind == SelectionKind::knockoff_plus ? 1.0 : 0.0;
  SelectionResult result;
  result.kind = kind;
  result.q = q;
  for (double t : candidates) {
    int negatives = 0;
    int positives = 0;
    for (double v : w) {
      if (v <= -t) ++negatives;
      if (v >= t) ++positives;
    }
    const double numerator = offset + negatives;
    if (positives == 0) {
      if (numerator == 0.0) continue;  // 0/0: candidate carries no information
      continue;                        // ratio is +infinity
    }
    if (numerator / positives <= q) {
      result.threshold = t;
      break;
    }
  }
  if (std::isfinite(result.threshold)) {
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (w[j] >= result.threshold) result.selected.push_back(static_cast<int>(j));
    }
  }
  return result;
}

}  // namespace detail

/// tau = min{t>0 : #{W <= -t} / #{W >= t} <= q}. Controls the modified FDR.
inline SelectionResult knockoff_threshold(const std::vector<double>& w, double q) {
  return detail::threshold_impl(w, q, SelectionKind::knockoff);
}

/// tau+ = min{t>0 : (1 + #{W <= -t}) / #{W >= t} <= q}. Controls the FDR.
inline SelectionResult knockoff_plus_threshold(const std::vector<double>& w, double q) {
  return detail::threshold_impl(w, q, SelectionKind::knockoff_plus);
}

struct SelectionScore {
  double fdp = 0.0;    // |selected ∩ null| / max(|selected|, 1)
  double mfdp = 0.0;   // |selected ∩ null| / (|selected| + 1/q)
  double power = 0.0;  // |selected ∩ truth| / |truth|
  int n_selected = 0;
  int n_false = 0;
};

/// Scores a selection against the known set of truly prognostic indices.
inline SelectionScore score_selection(const std::vector<int>& selected,
                                      const std::vector<int>& truth, double q) {
  if (truth.empty()) throw EmptyTruthError("power is undefined for an empty truth set");
  if (!(q > 0.0 && q < 1.0)) throw InvalidQError("q must lie in (0,1)");
  const std::set<int> truth_set(truth.begin(), truth.end());
  SelectionScore score;
  score.n_selected = static_cast<int>(selected.size());
  int hits = 0;
  for (int j : selected) {
    if (truth_set.count(j)) {
      ++hits;
    } else {
      ++score.n_false;
    }
  }
  score.fdp = static_cast<double>(score.n_false) /
              std::max<double>(1.0, static_cast<double>(selected.size()));
  score.mfdp = static_cast<double>(score.n_false) /
               (static_cast<double>(selected.size()) + 1.0 / q);
  score.power = static_cast<double>(hits) / static_cast<double>(truth_set.size());
  return score;
}

}  // namespace cpfilter
