#pragma once

// L1-penalized linear models: cyclic coordinate descent for the gaussian
// family, IRLS-weighted coordinate descent for the binomial family, and
// proximal-gradient ascent of the Breslow partial likelihood for the cox
// family. Fits a decreasing lambda path with warm starts, records the
// penalty at which each feature first enters, and supports K-fold
// cross-validation of lambda.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "cpfilter/data.hpp"
#include "cpfilter/errors.hpp"
#include "cpfilter/model.hpp"
#include "cpfilter/rng.hpp"

namespace cpfilter {

enum class LassoFamily { gaussian, binomial, cox };

inline const char* to_string(LassoFamily f) {
  switch (f) {
    case LassoFamily::gaussian: return "gaussian";
    case LassoFamily::binomial: return "binomial";
    case LassoFamily::cox: return "cox";
  }
  return "?";
}

inline LassoFamily parse_lasso_family(const std::string& s) {
  if (s == "gaussian") return LassoFamily::gaussian;
  if (s == "binomial") return LassoFamily::binomial;
  if (s == "cox") return LassoFamily::cox;
  throw ValidationError("unknown lasso family '" + s + "'");
}

struct LassoOptions {
  LassoFamily family = LassoFamily::gaussian;
  double lambda = -1.0;          // >= 0 fixes the penalty; no path is fitted
  int cv_folds = 10;             // used when lambda < 0
  int n_lambda = 100;
  double lambda_min_ratio = 1e-3;
  double tol = 1e-7;             // max coefficient change per sweep
  long max_sweeps = 100000;
  bool track_objective = false;  // record per-sweep objective (gaussian/cox)
  std::uint64_t seed = 0;        // CV fold assignment
};

namespace detail {

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

inline double logistic(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

// Survival ordering shared by the cox routines: row indices sorted by
// ascending time, grouped by distinct times.
struct CoxLayout {
  std::vector<int> order;          // row indices, ascending time
  std::vector<int> group_start;    // start offset of each distinct-time group
  std::vector<int> group_events;   // number of events in each group
  int n_events = 0;
};

inline CoxLayout cox_layout(const Eigen::VectorXd& time, const Eigen::VectorXi& event) {
  const int n = static_cast<int>(time.size());
  CoxLayout layout;
  layout.order.resize(n);
  for (int i = 0; i < n; ++i) layout.order[i] = i;
  std::sort(layout.order.begin(), layout.order.end(),
            [&](int a, int b) { return time[a] < time[b]; });
  int pos = 0;
  while (pos < n) {
    int end = pos;
    while (end < n && time[layout.order[end]] == time[layout.order[pos]]) ++end;
    layout.group_start.push_back(pos);
    int events = 0;
    for (int k = pos; k < end; ++k) events += event[layout.order[k]];
    layout.group_events.push_back(events);
    layout.n_events += events;
    pos = end;
  }
  layout.group_start.push_back(n);  // sentinel
  return layout;
}

// Negative mean log partial likelihood with Breslow tie handling and its
// gradient with respect to the per-row linear predictor eta.
inline double cox_neg_loglik(const CoxLayout& layout, const Eigen::VectorXi& event,
                             const Eigen::VectorXd& eta, Eigen::VectorXd* grad_eta) {
  const int n = static_cast<int>(eta.size());
  const int n_groups = static_cast<int>(layout.group_events.size());
  // exp(eta) stabilized by the max; the shift cancels in every ratio and
  // is restored in the log terms.
  const double shift = eta.maxCoeff();
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w[i] = std::exp(eta[i] - shift);

  // Suffix sums of w at group starts: risk-set totals.
  std::vector<double> risk_sum(n_groups + 1, 0.0);
  double running = 0.0;
  for (int g = n_groups - 1; g >= 0; --g) {
    for (int k = layout.group_start[g]; k < layout.group_start[g + 1]; ++k) {
      running += w[layout.order[k]];
    }
    risk_sum[g] = running;
  }

  double loglik = 0.0;
  double cum = 0.0;  // sum over event groups passed so far of d_g / S_g
  if (grad_eta) grad_eta->setZero(n);
  for (int g = 0; g < n_groups; ++g) {
    const int d = layout.group_events[g];
    if (d > 0) {
      for (int k = layout.group_start[g]; k < layout.group_start[g + 1]; ++k) {
        const int i = layout.order[k];
        if (event[i]) loglik += eta[i] - shift;
      }
      loglik -= d * std::log(risk_sum[g]);
      cum += static_cast<double>(d) / risk_sum[g];
    }
    if (grad_eta) {
      for (int k = layout.group_start[g]; k < layout.group_start[g + 1]; ++k) {
        const int i = layout.order[k];
        (*grad_eta)[i] = w[i] * cum - (event[i] ? 1.0 : 0.0);
      }
    }
  }
  if (grad_eta) *grad_eta /= static_cast<double>(n);
  return -loglik / static_cast<double>(n);
}

}  // namespace detail

class LassoModel : public PredictionModel {
 public:
  Eigen::VectorXd beta;
  double intercept = 0.0;
  double lambda = 0.0;
  LassoFamily family = LassoFamily::gaussian;
  std::vector<double> lambda_path;         // decreasing; empty for fixed-lambda fits
  std::vector<double> first_entry_lambda;  // per feature; 0 if it never enters
  std::vector<double> cv_mean_deviance;    // per path lambda, when CV ran
  std::vector<double> objective_trace;     // per sweep, when tracking enabled
  long sweeps = 0;

  int input_dim() const override { return static_cast<int>(beta.size()); }

  PredictionSurface primary_surface() const override {
    return family == LassoFamily::binomial ? PredictionSurface::probs
                                           : PredictionSurface::scalar;
  }

  double predict_scalar(const Eigen::Ref<const Eigen::RowVectorXd>& x) const override {
    if (family == LassoFamily::binomial) {
      throw OutcomeMismatchError("binomial lasso predicts probabilities, not scalars");
    }
    // cox: the linear risk score
    return intercept + x.dot(beta);
  }

  Eigen::VectorXd predict_probs(const Eigen::Ref<const Eigen::RowVectorXd>& x) const override {
    if (family != LassoFamily::binomial) {
      throw OutcomeMismatchError("probability surface requires the binomial family");
    }
    const double p = detail::logistic(intercept + x.dot(beta));
    Eigen::VectorXd probs(2);
    probs << 1.0 - p, p;
    return probs;
  }

  Eigen::VectorXd predict_scalar_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const override {
    if (family == LassoFamily::binomial) {
      throw OutcomeMismatchError("binomial lasso predicts probabilities, not scalars");
    }
    return (x * beta).array() + intercept;
  }
};

namespace detail {

// One full cyclic sweep of gaussian coordinate descent. Returns the max
// absolute coefficient change. residual = y - intercept - X beta.
inline double gaussian_sweep(const Eigen::MatrixXd& x, Eigen::VectorXd& residual,
                             Eigen::VectorXd& beta, double& intercept, double lambda,
                             const Eigen::VectorXd& col_scale, bool active_only) {
  const double n = static_cast<double>(x.rows());
  double max_change = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (active_only && beta[j] == 0.0) continue;
    const double old = beta[j];
    const double z = x.col(j).dot(residual) / n + old * col_scale[j];
    const double updated = soft_threshold(z, lambda) / col_scale[j];
    if (updated != old) {
      residual -= (updated - old) * x.col(j);
      beta[j] = updated;
      max_change = std::max(max_change, std::abs(updated - old));
    }
  }
  const double mean_residual = residual.mean();
  if (mean_residual != 0.0) {
    intercept += mean_residual;
    residual.array() -= mean_residual;
    max_change = std::max(max_change, std::abs(mean_residual));
  }
  return max_change;
}

inline double gaussian_objective(const Eigen::VectorXd& residual, const Eigen::VectorXd& beta,
                                 double lambda) {
  const double n = static_cast<double>(residual.size());
  return residual.squaredNorm() / (2.0 * n) + lambda * beta.lpNorm<1>();
}

// Coordinate descent at a fixed lambda, warm started from (beta,
// intercept). Active-set iterations between full sweeps.
inline void gaussian_fit_at(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            Eigen::VectorXd& beta, double& intercept, double lambda,
                            const LassoOptions& opts, long& sweeps,
                            std::vector<double>* trace) {
  const Eigen::VectorXd col_scale =
      (x.array().square().colwise().sum() / static_cast<double>(x.rows())).transpose();
  Eigen::VectorXd residual = y - x * beta;
  residual.array() -= intercept;
  bool active_only = false;
  while (true) {
    if (++sweeps > opts.max_sweeps) {
      throw NonConvergenceError("gaussian lasso did not converge within " +
                                std::to_string(opts.max_sweeps) + " sweeps");
    }
    const double change =
        gaussian_sweep(x, residual, beta, intercept, lambda, col_scale, active_only);
    if (trace) trace->push_back(gaussian_objective(residual, beta, lambda));
    if (change < opts.tol) {
      if (active_only) {
        active_only = false;  // verify no inactive feature wants in
        continue;
      }
      break;
    }
    active_only = true;
  }
}

inline void binomial_fit_at(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            Eigen::VectorXd& beta, double& intercept, double lambda,
                            const LassoOptions& opts, long& sweeps) {
  const Eigen::Index n = x.rows();
  const double dn = static_cast<double>(n);
  Eigen::VectorXd eta = (x * beta).array() + intercept;
  for (int outer = 0;; ++outer) {
    if (outer >= 100) {
      throw NonConvergenceError("binomial lasso IRLS did not converge");
    }
    // Quadratic approximation at the current estimate.
    Eigen::VectorXd prob(n), weight(n), z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = std::clamp(logistic(eta[i]), 1e-5, 1.0 - 1e-5);
      prob[i] = p;
      weight[i] = p * (1.0 - p);
      z[i] = eta[i] + (y[i] - p) / weight[i];
    }
    Eigen::VectorXd col_scale(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      col_scale[j] = (weight.array() * x.col(j).array().square()).sum() / dn;
    }
    // Weighted CD sweeps on the working response.
    Eigen::VectorXd residual = z - (x * beta);
    residual.array() -= intercept;
    double outer_change = 0.0;
    while (true) {
      if (++sweeps > opts.max_sweeps) {
        throw NonConvergenceError("binomial lasso did not converge within " +
                                  std::to_string(opts.max_sweeps) + " sweeps");
      }
      double max_change = 0.0;
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double old = beta[j];
        const double zj =
            (weight.array() * x.col(j).array() * residual.array()).sum() / dn +
            old * col_scale[j];
        const double updated = soft_threshold(zj, lambda) / col_scale[j];
        if (updated != old) {
          residual -= (updated - old) * x.col(j);
          beta[j] = updated;
          max_change = std::max(max_change, std::abs(updated - old));
        }
      }
      const double int_step = (weight.array() * residual.array()).sum() / weight.sum();
      if (int_step != 0.0) {
        intercept += int_step;
        residual.array() -= int_step;
        max_change = std::max(max_change, std::abs(int_step));
      }
      outer_change = std::max(outer_change, max_change);
      if (max_change < opts.tol) break;
    }
    eta = (x * beta).array() + intercept;
    if (outer_change < opts.tol) break;
  }
}

inline void cox_fit_at(const Eigen::MatrixXd& x, const CoxLayout& layout,
                       const Eigen::VectorXi& event, Eigen::VectorXd& beta, double lambda,
                       const LassoOptions& opts, long& sweeps, std::vector<double>* trace) {
  const double dn = static_cast<double>(x.rows());
  Eigen::VectorXd eta = x * beta;
  Eigen::VectorXd grad_eta;
  double f = cox_neg_loglik(layout, event, eta, &grad_eta);
  double step = 1.0;
  while (true) {
    if (++sweeps > opts.max_sweeps) {
      throw NonConvergenceError("cox lasso did not converge within " +
                                std::to_string(opts.max_sweeps) + " sweeps");
    }
    const Eigen::VectorXd grad_beta = x.transpose() * grad_eta;
    // Backtracking proximal step on the smooth part.
    Eigen::VectorXd candidate(beta.size());
    double f_new = 0.0;
    Eigen::VectorXd eta_new, grad_new;
    for (int half = 0;; ++half) {
      if (half > 60) throw NonConvergenceError("cox lasso line search failed");
      for (Eigen::Index j = 0; j < beta.size(); ++j) {
        candidate[j] = soft_threshold(beta[j] - step * grad_beta[j], step * lambda);
      }
      eta_new = x * candidate;
      f_new = cox_neg_loglik(layout, event, eta_new, &grad_new);
      const Eigen::VectorXd diff = candidate - beta;
      const double quad = f + grad_beta.dot(diff) + diff.squaredNorm() / (2.0 * step);
      if (f_new <= quad + 1e-14) break;
      step *= 0.5;
    }
    const double change = (candidate - beta).cwiseAbs().maxCoeff();
    beta = candidate;
    f = f_new;
    grad_eta = grad_new;
    if (trace) trace->push_back(f + lambda * beta.lpNorm<1>());
    if (change < opts.tol) break;
    step = std::min(step * 2.0, 1.0);  // gentle step recovery
  }
}

inline double binomial_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double p = std::clamp(logistic(eta[i]), 1e-12, 1.0 - 1e-12);
    dev += y[i] > 0.5 ? -std::log(p) : -std::log(1.0 - p);
  }
  return 2.0 * dev / static_cast<double>(y.size());
}

}  // namespace detail

/// Smallest penalty at which every coefficient is exactly zero.
inline double lasso_lambda_max(const FeatureMatrix& x, const Outcome& y, LassoFamily family) {
  const double n = static_cast<double>(x.rows());
  switch (family) {
    case LassoFamily::gaussian: {
      const Eigen::VectorXd centered = y.y.array() - y.y.mean();
      return (x.values.transpose() * centered).cwiseAbs().maxCoeff() / n;
    }
    case LassoFamily::binomial: {
      const Eigen::VectorXd centered = y.y.array() - y.y.mean();
      return (x.values.transpose() * centered).cwiseAbs().maxCoeff() / n;
    }
    case LassoFamily::cox: {
      const auto layout = detail::cox_layout(y.time, y.event);
      Eigen::VectorXd grad_eta;
      const Eigen::VectorXd eta = Eigen::VectorXd::Zero(x.rows());
      detail::cox_neg_loglik(layout, y.event, eta, &grad_eta);
      return (x.values.transpose() * grad_eta).cwiseAbs().maxCoeff();
    }
  }
  return 0.0;
}

inline void require_family_match(LassoFamily family, OutcomeKind kind) {
  const bool ok = (family == LassoFamily::gaussian && kind == OutcomeKind::continuous) ||
                  (family == LassoFamily::binomial && kind == OutcomeKind::binary) ||
                  (family == LassoFamily::cox && kind == OutcomeKind::survival);
  if (!ok) {
    throw FamilyMismatchError(std::string("lasso family '") + to_string(family) +
                              "' does not match outcome kind '" + to_string(kind) + "'");
  }
}

/// Fits the penalized model. With opts.lambda >= 0 a single fixed-penalty
/// fit is run; otherwise the full path is fitted (recording first-entry
/// penalties) and lambda is chosen by cross-validated deviance.
inline LassoModel fit_lasso(const Dataset& d, const LassoOptions& opts) {
  d.require_aligned();
  require_family_match(opts.family, d.y.kind);
  if (opts.family == LassoFamily::cox && d.y.event.sum() == 0) {
    throw NoEventsError("cox lasso needs at least one uncensored event");
  }
  const Eigen::MatrixXd& x = d.x.values;
  const Eigen::Index p = x.cols();

  LassoModel model;
  model.family = opts.family;
  model.beta = Eigen::VectorXd::Zero(p);
  model.first_entry_lambda.assign(p, 0.0);
  std::vector<double>* trace = opts.track_objective ? &model.objective_trace : nullptr;

  auto fit_at = [&](const Eigen::MatrixXd& xs, const Outcome& ys, Eigen::VectorXd& beta,
                    double& intercept, double lambda, long& sweeps,
                    std::vector<double>* trc) {
    switch (opts.family) {
      case LassoFamily::gaussian:
        detail::gaussian_fit_at(xs, ys.y, beta, intercept, lambda, opts, sweeps, trc);
        break;
      case LassoFamily::binomial:
        detail::binomial_fit_at(xs, ys.y, beta, intercept, lambda, opts, sweeps);
        break;
      case LassoFamily::cox: {
        const auto layout = detail::cox_layout(ys.time, ys.event);
        detail::cox_fit_at(xs, layout, ys.event, beta, lambda, opts, sweeps, trc);
        break;
      }
    }
  };

  if (opts.lambda >= 0.0) {
    model.lambda = opts.lambda;
    fit_at(x, d.y, model.beta, model.intercept, opts.lambda, model.sweeps, trace);
    return model;
  }

  // Decreasing log-spaced path with warm starts.
  const double lambda_max = lasso_lambda_max(d.x, d.y, opts.family);
  if (!(lambda_max > 0.0)) {
    // Degenerate outcome; every coefficient stays zero at any penalty.
    model.lambda = 0.0;
    return model;
  }
  const int n_lambda = std::max(2, opts.n_lambda);
  model.lambda_path.resize(n_lambda);
  const double log_max = std::log(lambda_max);
  const double log_min = std::log(lambda_max * opts.lambda_min_ratio);
  for (int k = 0; k < n_lambda; ++k) {
    model.lambda_path[k] =
        std::exp(log_max + (log_min - log_max) * k / static_cast<double>(n_lambda - 1));
  }

  std::vector<Eigen::VectorXd> path_beta(n_lambda);
  std::vector<double> path_intercept(n_lambda);
  {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    double intercept = 0.0;
    for (int k = 0; k < n_lambda; ++k) {
      fit_at(x, d.y, beta, intercept, model.lambda_path[k], model.sweeps, trace);
      path_beta[k] = beta;
      path_intercept[k] = intercept;
      for (Eigen::Index j = 0; j < p; ++j) {
        if (beta[j] != 0.0 && model.first_entry_lambda[j] == 0.0) {
          model.first_entry_lambda[j] = model.lambda_path[k];
        }
      }
    }
  }

  int chosen = n_lambda - 1;
  if (opts.cv_folds > 1) {
    const int n = static_cast<int>(x.rows());
    const int folds = std::min(opts.cv_folds, n);
    std::vector<int> assignment(n);
    for (int i = 0; i < n; ++i) assignment[i] = i;
    Rng rng(opts.seed, /*stream=*/0xCCF01DULL);
    rng.shuffle(assignment);
    model.cv_mean_deviance.assign(n_lambda, 0.0);
    for (int fold = 0; fold < folds; ++fold) {
      std::vector<int> train_idx, test_idx;
      for (int i = 0; i < n; ++i) {
        (assignment[i] % folds == fold ? test_idx : train_idx).push_back(i);
      }
      std::sort(train_idx.begin(), train_idx.end());
      std::sort(test_idx.begin(), test_idx.end());
      const Dataset train{d.x.select_rows(train_idx), d.y.select_rows(train_idx)};
      const Dataset test{d.x.select_rows(test_idx), d.y.select_rows(test_idx)};
      Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
      double intercept = 0.0;
      long sweeps = 0;
      for (int k = 0; k < n_lambda; ++k) {
        fit_at(train.x.values, train.y, beta, intercept, model.lambda_path[k], sweeps, nullptr);
        double loss = 0.0;
        switch (opts.family) {
          case LassoFamily::gaussian: {
            const Eigen::VectorXd eta = (test.x.values * beta).array() + intercept;
            loss = (test.y.y - eta).squaredNorm() / static_cast<double>(test.rows());
            break;
          }
          case LassoFamily::binomial: {
            const Eigen::VectorXd eta = (test.x.values * beta).array() + intercept;
            loss = detail::binomial_deviance(test.y.y, eta);
            break;
          }
          case LassoFamily::cox: {
            // Held-out partial likelihood with risk sets inside the fold.
            if (test.y.event.sum() == 0) {
              loss = 0.0;
            } else {
              const auto layout = detail::cox_layout(test.y.time, test.y.event);
              const Eigen::VectorXd eta = test.x.values * beta;
              loss = 2.0 * detail::cox_neg_loglik(layout, test.y.event, eta, nullptr);
            }
            break;
          }
        }
        model.cv_mean_deviance[k] += loss / folds;
      }
    }
    chosen = static_cast<int>(std::min_element(model.cv_mean_deviance.begin(),
                                               model.cv_mean_deviance.end()) -
                              model.cv_mean_deviance.begin());
  }

  model.lambda = model.lambda_path[chosen];
  model.beta = path_beta[chosen];
  model.intercept = path_intercept[chosen];
  return model;
}

}  // namespace cpfilter
