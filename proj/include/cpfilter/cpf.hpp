#pragma once

// Conditional prediction function importance. For every column i of the
// combined matrix [X, X-knockoff], U_i accumulates squared prediction
// differences over a seeded subsample of conditioning rows: continuous
// columns are probed at J percentile values, perturbed by +-delta/2, and
// scaled by 1/(delta^2 J); binary columns are probed at 1 versus 0 with
// no divisor. Time-to-event models difference whole curves over a time
// grid. W_m = U_m - U_{m+p} is the knockoff statistic.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cpfilter/data.hpp"
#include "cpfilter/errors.hpp"
#include "cpfilter/model.hpp"
#include "cpfilter/rng.hpp"

namespace cpfilter {

struct CpfConfig {
  int J = 5;           // percentile count
  int n_sub = 100;     // conditioning rows per feature
  double delta = 0.1;  // difference step, on the standardized scale
  std::vector<double> time_grid;  // survival/CIF evaluation times
  std::uint64_t seed = 0;

  void validate() const {
    if (J < 1) throw ValidationError("percentile count J must be >= 1");
    if (n_sub < 1) throw ValidationError("subsample size must be >= 1");
    if (!(delta > 0.0)) throw ValidationError("difference step delta must be > 0");
    for (std::size_t l = 1; l < time_grid.size(); ++l) {
      if (!(time_grid[l] > time_grid[l - 1])) {
        throw ValidationError("time grid must be strictly increasing");
      }
    }
  }
};

struct ImportanceVector {
  Eigen::VectorXd u;  // length 2p, originals first, knockoffs second
};

// The cause whose incidence function the statistic probes.
inline constexpr int kCifCauseOfInterest = 1;

/// Conditioning rows for feature i: drawn without replacement (with
/// replacement only when n_sub exceeds the data), one independent seeded
/// subsample per feature.
inline std::vector<int> cpf_subsample_rows(std::uint64_t seed, int feature_index, int n_rows,
                                           int n_sub) {
  Rng rng(seed, /*stream=*/0xCF00000000ULL + static_cast<std::uint64_t>(feature_index));
  if (n_sub > n_rows) return rng.sample_with_replacement(n_rows, n_sub);
  return rng.sample_without_replacement(n_rows, n_sub);
}

/// Quintiles of the observed event/censoring times: the default curve
/// evaluation grid. Duplicate quantiles collapse.
inline std::vector<double> default_time_grid(const Eigen::VectorXd& times) {
  if (times.size() == 0) throw ValidationError("cannot build a time grid from no times");
  std::vector<double> sorted(times.data(), times.data() + times.size());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> grid;
  for (const double level : {0.2, 0.4, 0.6, 0.8, 1.0}) {
    const double t = quantile_sorted(sorted, level);
    if (grid.empty() || t > grid.back()) grid.push_back(t);
  }
  return grid;
}

namespace detail {

// Per-row squared Euclidean distance between model outputs on paired row
// blocks a and b, dispatched on the model's surface. Throws on any
// non-finite prediction, reporting the offending original data row.
inline Eigen::VectorXd prediction_sq_diff(const PredictionModel& model, PredictionSurface surface,
                                          const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                          const std::vector<double>& time_grid, long feature,
                                          const std::vector<int>& subsample) {
  auto check_finite = [&](const Eigen::MatrixXd& pred) {
    if (pred.allFinite()) return;
    for (Eigen::Index r = 0; r < pred.rows(); ++r) {
      if (!pred.row(r).allFinite()) {
        const int k = static_cast<int>(r) % static_cast<int>(subsample.size());
        throw NonFinitePredictionError(feature, subsample[static_cast<std::size_t>(k)]);
      }
    }
  };
  Eigen::MatrixXd pa, pb;
  switch (surface) {
    case PredictionSurface::scalar:
      pa = model.predict_scalar_batch(a);
      pb = model.predict_scalar_batch(b);
      break;
    case PredictionSurface::probs:
      pa = model.predict_probs_batch(a);
      pb = model.predict_probs_batch(b);
      break;
    case PredictionSurface::survival:
      pa = model.predict_survival_batch(a, time_grid);
      pb = model.predict_survival_batch(b, time_grid);
      break;
    case PredictionSurface::cif:
      pa = model.predict_cif_batch(a, kCifCauseOfInterest, time_grid);
      pb = model.predict_cif_batch(b, kCifCauseOfInterest, time_grid);
      break;
  }
  check_finite(pa);
  check_finite(pb);
  return (pa - pb).rowwise().squaredNorm();
}

inline ImportanceVector cpf_accumulate(const PredictionModel& model,
                                       const FeatureMatrix& x_star, const CpfConfig& cfg,
                                       PredictionSurface surface) {
  cfg.validate();
  const int d = static_cast<int>(x_star.cols());
  const int n = static_cast<int>(x_star.rows());
  if (model.input_dim() != d) {
    throw DimensionMismatchError("model expects " + std::to_string(model.input_dim()) +
                                 " features, matrix has " + std::to_string(d));
  }
  if (n == 0) throw ValidationError("importance needs a nonempty matrix");

  const PercentileGrid grid = percentile_grid(x_star, cfg.J);

  ImportanceVector imp;
  imp.u = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < d; ++i) {
    const std::vector<int> subsample = cpf_subsample_rows(cfg.seed, i, n, cfg.n_sub);
    Eigen::MatrixXd base(static_cast<Eigen::Index>(subsample.size()), d);
    for (std::size_t r = 0; r < subsample.size(); ++r) {
      base.row(static_cast<Eigen::Index>(r)) = x_star.values.row(subsample[r]);
    }
    const int n_sub = static_cast<int>(subsample.size());

    if (x_star.column_kinds[static_cast<std::size_t>(i)] == ColumnKind::binary) {
      Eigen::MatrixXd at_one = base, at_zero = base;
      at_one.col(i).setOnes();
      at_zero.col(i).setZero();
      imp.u[i] = prediction_sq_diff(model, surface, at_one, at_zero, cfg.time_grid, i, subsample)
                     .sum();
      continue;
    }

    // Rows blocked percentile-major: block j holds the subsample probed
    // at grid value j, shifted by +delta/2 on one side, -delta/2 on the
    // other.
    const auto& levels = grid.values[static_cast<std::size_t>(i)];
    Eigen::MatrixXd plus(static_cast<Eigen::Index>(cfg.J) * n_sub, d);
    Eigen::MatrixXd minus(static_cast<Eigen::Index>(cfg.J) * n_sub, d);
    for (int j = 0; j < cfg.J; ++j) {
      plus.middleRows(static_cast<Eigen::Index>(j) * n_sub, n_sub) = base;
      minus.middleRows(static_cast<Eigen::Index>(j) * n_sub, n_sub) = base;
      plus.block(static_cast<Eigen::Index>(j) * n_sub, i, n_sub, 1)
          .setConstant(levels[static_cast<std::size_t>(j)] + cfg.delta / 2.0);
      minus.block(static_cast<Eigen::Index>(j) * n_sub, i, n_sub, 1)
          .setConstant(levels[static_cast<std::size_t>(j)] - cfg.delta / 2.0);
    }
    const double total =
        prediction_sq_diff(model, surface, plus, minus, cfg.time_grid, i, subsample).sum();
    imp.u[i] = total / (cfg.delta * cfg.delta * static_cast<double>(cfg.J));
  }
  return imp;
}

}  // namespace detail

/// Importance over scalar or categorical prediction surfaces.
inline ImportanceVector cpf_importance(const PredictionModel& model, const FeatureMatrix& x_star,
                                       const CpfConfig& cfg) {
  const PredictionSurface surface = model.primary_surface();
  if (surface != PredictionSurface::scalar && surface != PredictionSurface::probs) {
    throw OutcomeMismatchError("time-to-event models take the survival importance variant");
  }
  return detail::cpf_accumulate(model, x_star, cfg, surface);
}

/// Importance over survival-curve or incidence-curve surfaces: the inner
/// increment sums squared curve differences across the time grid.
inline ImportanceVector cpf_importance_survival(const PredictionModel& model,
                                                const FeatureMatrix& x_star,
                                                const CpfConfig& cfg) {
  const PredictionSurface surface = model.primary_surface();
  if (surface != PredictionSurface::survival && surface != PredictionSurface::cif) {
    throw OutcomeMismatchError("scalar and categorical models take cpf_importance");
  }
  if (cfg.time_grid.empty()) {
    throw MissingTimeGridError("curve importance needs a nonempty time grid");
  }
  return detail::cpf_accumulate(model, x_star, cfg, surface);
}

}  // namespace cpfilter
