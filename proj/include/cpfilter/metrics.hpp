#pragma once

// Held-out fit metrics per outcome kind: mean squared error for
// continuous targets, accuracy and cross-entropy for binary targets, and
// the Harrell concordance index for time-to-event targets.

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "cpfilter/data.hpp"
#include "cpfilter/errors.hpp"
#include "cpfilter/model.hpp"

namespace cpfilter {

/// Fraction of correctly ordered permissible pairs; a pair (i, j) is
/// permissible when t_i < t_j and i is an observed event. Concordant means
/// the earlier event carries the higher risk score; score ties count half.
inline double harrell_c_index(const Eigen::VectorXd& risk, const Eigen::VectorXd& time,
                              const Eigen::VectorXi& event) {
  if (risk.size() != time.size() || time.size() != event.size()) {
    throw DimensionMismatchError("concordance inputs differ in length");
  }
  if (event.sum() == 0) throw NoEventsError("concordance needs at least one event");
  const Eigen::Index n = time.size();
  double concordant = 0.0;
  long permissible = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!event[i]) continue;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (time[i] >= time[j]) continue;
      ++permissible;
      if (risk[i] > risk[j]) {
        concordant += 1.0;
      } else if (risk[i] == risk[j]) {
        concordant += 0.5;
      }
    }
  }
  if (permissible == 0) return std::numeric_limits<double>::quiet_NaN();
  return concordant / static_cast<double>(permissible);
}

struct FitMetrics {
  OutcomeKind kind = OutcomeKind::continuous;
  double mse = std::numeric_limits<double>::quiet_NaN();
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  double cross_entropy = std::numeric_limits<double>::quiet_NaN();
  double c_index = std::numeric_limits<double>::quiet_NaN();
};

inline FitMetrics fit_metrics(const PredictionModel& model, const Dataset& test) {
  test.require_aligned();
  FitMetrics m;
  m.kind = test.y.kind;
  switch (test.y.kind) {
    case OutcomeKind::continuous: {
      const Eigen::VectorXd pred = model.predict_scalar_batch(test.x.values);
      m.mse = (pred - test.y.y).squaredNorm() / static_cast<double>(test.rows());
      break;
    }
    case OutcomeKind::binary: {
      const Eigen::MatrixXd probs = model.predict_probs_batch(test.x.values);
      double correct = 0.0, ce = 0.0;
      for (Eigen::Index i = 0; i < test.rows(); ++i) {
        const double p = std::clamp(probs(i, 1), 1e-12, 1.0 - 1e-12);
        const bool predicted_one = p > 0.5;
        if (predicted_one == (test.y.y[i] > 0.5)) correct += 1.0;
        ce -= test.y.y[i] > 0.5 ? std::log(p) : std::log(1.0 - p);
      }
      m.accuracy = correct / static_cast<double>(test.rows());
      m.cross_entropy = ce / static_cast<double>(test.rows());
      break;
    }
    case OutcomeKind::survival: {
      const Eigen::VectorXd risk = model.predict_scalar_batch(test.x.values);
      m.c_index = harrell_c_index(risk, test.y.time, test.y.event);
      break;
    }
    case OutcomeKind::competing_risks: {
      // Cause-1 concordance: risk is the cause-1 CIF at the latest
      // observed time; rows with other causes count as censored.
      const double t_last = test.y.time.maxCoeff();
      const Eigen::MatrixXd cif = model.predict_cif_batch(test.x.values, 1, {t_last});
      Eigen::VectorXi cause1(test.rows());
      for (Eigen::Index i = 0; i < test.rows(); ++i) {
        cause1[i] = test.y.cause[i] == 1 ? 1 : 0;
      }
      m.c_index = harrell_c_index(cif.col(0), test.y.time, cause1);
      break;
    }
  }
  return m;
}

}  // namespace cpfilter
