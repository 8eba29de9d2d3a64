#pragma once

// Proportional-hazards fitting on the Breslow partial likelihood: Newton
// iterations for a linear predictor, full-batch Adam for a network
// predictor. The Breslow baseline hazard turns either fit into survival
// curves; with a zero predictor it reduces to the Nelson-Aalen estimator.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "cpfilter/data.hpp"
#include "cpfilter/errors.hpp"
#include "cpfilter/lasso.hpp"
#include "cpfilter/mlp.hpp"
#include "cpfilter/model.hpp"

namespace cpfilter {

// Right-continuous step function of cumulative baseline hazard.
struct BreslowBaseline {
  std::vector<double> times;       // distinct event times, ascending
  std::vector<double> cum_hazard;  // H0 at each of those times

  double value(double t) const {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 0.0;
    return cum_hazard[static_cast<std::size_t>(it - times.begin()) - 1];
  }
};

/// H0(t) = sum over event times t_e <= t of d_e / sum_{j in risk set} exp(eta_j).
inline BreslowBaseline breslow_baseline(const Outcome& y, const Eigen::VectorXd& eta) {
  if (y.kind != OutcomeKind::survival) {
    throw OutcomeMismatchError("baseline hazard needs a survival outcome");
  }
  if (eta.size() != y.time.size()) {
    throw DimensionMismatchError("linear predictor length does not match outcome rows");
  }
  const auto layout = detail::cox_layout(y.time, y.event);
  if (layout.n_events == 0) throw NoEventsError("no uncensored events for the baseline hazard");

  const int n = static_cast<int>(eta.size());
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w[i] = std::exp(eta[i]);

  const int n_groups = static_cast<int>(layout.group_events.size());
  std::vector<double> risk_sum(n_groups, 0.0);
  double running = 0.0;
  for (int g = n_groups - 1; g >= 0; --g) {
    for (int k = layout.group_start[g]; k < layout.group_start[g + 1]; ++k) {
      running += w[layout.order[k]];
    }
    risk_sum[g] = running;
  }

  BreslowBaseline baseline;
  double cum = 0.0;
  for (int g = 0; g < n_groups; ++g) {
    const int d = layout.group_events[g];
    if (d == 0) continue;
    cum += static_cast<double>(d) / risk_sum[g];
    baseline.times.push_back(y.time[layout.order[layout.group_start[g]]]);
    baseline.cum_hazard.push_back(cum);
  }
  return baseline;
}

class CoxModel : public PredictionModel {
 public:
  bool network = false;
  Eigen::VectorXd beta;       // linear predictor
  nn::DenseStack stack;       // network predictor
  BreslowBaseline baseline;
  double neg_loglik = 0.0;    // at the fitted predictor, per observation
  MlpFitTrace trace;          // network fits only

  int input_dim() const override {
    return network ? stack.input_dim() : static_cast<int>(beta.size());
  }

  PredictionSurface primary_surface() const override { return PredictionSurface::survival; }

  double risk_score(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    if (network) return nn::forward(stack, x)(0, 0);
    return x.dot(beta);
  }

  Eigen::VectorXd risk_score_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    if (network) return nn::forward(stack, x).col(0);
    return x * beta;
  }

  // The scalar surface is the linear risk score eta(x).
  double predict_scalar(const Eigen::Ref<const Eigen::RowVectorXd>& x) const override {
    return risk_score(x);
  }

  Eigen::VectorXd predict_scalar_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const override {
    return risk_score_batch(x);
  }

  Eigen::VectorXd predict_survival(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                   const std::vector<double>& times) const override {
    const double risk = std::exp(risk_score(x));
    Eigen::VectorXd s(static_cast<Eigen::Index>(times.size()));
    for (std::size_t k = 0; k < times.size(); ++k) {
      s[static_cast<Eigen::Index>(k)] = std::exp(-baseline.value(times[k]) * risk);
    }
    return s;
  }

  Eigen::MatrixXd predict_survival_batch(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                         const std::vector<double>& times) const override {
    const Eigen::VectorXd risk = risk_score_batch(x).array().exp();
    Eigen::VectorXd hazard(static_cast<Eigen::Index>(times.size()));
    for (std::size_t k = 0; k < times.size(); ++k) {
      hazard[static_cast<Eigen::Index>(k)] = baseline.value(times[k]);
    }
    return (-risk * hazard.transpose()).array().exp();
  }
};

struct CoxNewtonOptions {
  double tol = 1e-9;   // max coefficient change
  int max_iter = 100;
  double ridge = 1e-10;
};

namespace detail {

// Negative mean Breslow log partial likelihood with gradient and Hessian
// in beta. Suffix accumulation over time-sorted rows keeps it one pass.
inline double cox_newton_derivs(const Eigen::MatrixXd& x, const CoxLayout& layout,
                                const Eigen::VectorXi& event, const Eigen::VectorXd& beta,
                                Eigen::VectorXd& grad, Eigen::MatrixXd& hess) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  const Eigen::VectorXd eta = x * beta;
  const double shift = eta.maxCoeff();
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w[i] = std::exp(eta[i] - shift);

  const int n_groups = static_cast<int>(layout.group_events.size());
  double loglik = 0.0;
  grad.setZero(p);
  hess.setZero(p, p);

  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
  // Descending through groups keeps (s0, s1, s2) equal to the risk-set
  // sums of w, w*x, w*x*x^T at each group's time.
  std::vector<double> g_s0(n_groups);
  std::vector<Eigen::VectorXd> g_s1(n_groups);
  std::vector<Eigen::MatrixXd> g_s2(n_groups);
  for (int g = n_groups - 1; g >= 0; --g) {
    for (int k = layout.group_start[g]; k < layout.group_start[g + 1]; ++k) {
      const int i = layout.order[k];
      s0 += w[i];
      s1 += w[i] * x.row(i).transpose();
      s2.selfadjointView<Eigen::Lower>().rankUpdate(x.row(i).transpose(), w[i]);
    }
    g_s0[g] = s0;
    if (layout.group_events[g] > 0) {
      g_s1[g] = s1;
      g_s2[g] = Eigen::MatrixXd(s2.selfadjointView<Eigen::Lower>());
    }
  }
  for (int g = 0; g < n_groups; ++g) {
    const int d = layout.group_events[g];
    if (d == 0) continue;
    for (int k = layout.group_start[g]; k < layout.group_start[g + 1]; ++k) {
      const int i = layout.order[k];
      if (event[i]) {
        loglik += eta[i] - shift;
        grad += x.row(i).transpose();
      }
    }
    loglik -= d * std::log(g_s0[g]);
    const Eigen::VectorXd mean_x = g_s1[g] / g_s0[g];
    grad -= d * mean_x;
    hess += d * (g_s2[g] / g_s0[g] - mean_x * mean_x.transpose());
  }
  grad = -grad / n;   // gradient of the negative mean log likelihood
  hess /= n;
  return -loglik / n;
}

}  // namespace detail

/// Linear proportional-hazards fit by damped Newton iterations.
inline CoxModel fit_cox_linear(const Dataset& d, const CoxNewtonOptions& opts = {}) {
  d.require_aligned();
  if (d.y.kind != OutcomeKind::survival) {
    throw OutcomeMismatchError("linear hazards fit needs a survival outcome");
  }
  if (d.y.event.sum() == 0) throw NoEventsError("no uncensored events to fit on");

  const Eigen::MatrixXd& x = d.x.values;
  const int p = static_cast<int>(x.cols());
  const auto layout = detail::cox_layout(d.y.time, d.y.event);

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd grad(p);
  Eigen::MatrixXd hess(p, p);
  double f = detail::cox_newton_derivs(x, layout, d.y.event, beta, grad, hess);
  for (int iter = 0;; ++iter) {
    if (iter >= opts.max_iter) {
      throw NonConvergenceError("hazards Newton iterations did not converge");
    }
    hess.diagonal().array() += opts.ridge;
    const Eigen::VectorXd direction = hess.ldlt().solve(grad);
    double step = 1.0;
    Eigen::VectorXd candidate;
    double f_new = 0.0;
    Eigen::VectorXd grad_new(p);
    Eigen::MatrixXd hess_new(p, p);
    for (int half = 0;; ++half) {
      if (half > 60) throw NonConvergenceError("hazards Newton line search failed");
      candidate = beta - step * direction;
      f_new = detail::cox_newton_derivs(x, layout, d.y.event, candidate, grad_new, hess_new);
      if (f_new <= f + 1e-14) break;
      step *= 0.5;
    }
    const double change = (candidate - beta).cwiseAbs().maxCoeff();
    beta = candidate;
    f = f_new;
    grad = grad_new;
    hess = hess_new;
    if (change < opts.tol) break;
  }

  CoxModel model;
  model.network = false;
  model.beta = beta;
  model.neg_loglik = f;
  model.baseline = breslow_baseline(d.y, x * beta);
  return model;
}

struct CoxNetOptions {
  std::vector<int> hidden{64, 32, 16, 8};
  Activation activation = Activation::relu;
  double leaky_alpha = 0.01;
  double learning_rate = 0.01;
  double l1 = 0.0;
  double l2 = 0.0;
  double dropout = 0.0;
  int max_epochs = 500;
  int patience = 50;
  double val_fraction = 0.1;  // 0 disables early stopping
  std::uint64_t seed = 0;
};

/// Network predictor trained full batch on the partial likelihood; risk
/// sets make per-row minibatch losses ill-defined, so every step sees the
/// whole training split.
inline CoxModel fit_cox_network(const Dataset& d, const CoxNetOptions& opts) {
  d.require_aligned();
  if (d.y.kind != OutcomeKind::survival) {
    throw OutcomeMismatchError("network hazards fit needs a survival outcome");
  }
  if (d.y.event.sum() == 0) throw NoEventsError("no uncensored events to fit on");

  Dataset train = d;
  Dataset val{FeatureMatrix{}, Outcome{}};
  bool early_stop = opts.val_fraction > 0.0 && opts.patience > 0;
  if (early_stop) {
    auto split = train_test_split(d, 1.0 - opts.val_fraction, derive_seed(opts.seed, 0x7A17ULL));
    // Both splits need events for their partial likelihoods.
    if (split.first.y.event.sum() == 0 || split.second.y.event.sum() == 0) {
      early_stop = false;
    } else {
      train = std::move(split.first);
      val = std::move(split.second);
    }
  }

  const auto layout = detail::cox_layout(train.y.time, train.y.event);
  detail::CoxLayout val_layout;
  if (early_stop) val_layout = detail::cox_layout(val.y.time, val.y.event);

  CoxModel model;
  model.network = true;
  model.stack = nn::init_stack(static_cast<int>(d.x.cols()), opts.hidden, 1, opts.activation,
                               opts.leaky_alpha, opts.seed);
  nn::AdamState adam = nn::AdamState::like(model.stack);

  nn::DenseStack best = model.stack;
  double best_val = std::numeric_limits<double>::infinity();
  int wait = 0;

  for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
    nn::ForwardCache cache;
    Rng dropout_rng(opts.seed, /*stream=*/0xD000ULL + static_cast<std::uint64_t>(epoch));
    const Eigen::MatrixXd out =
        nn::forward(model.stack, train.x.values, &cache,
                    opts.dropout > 0.0 ? &dropout_rng : nullptr, opts.dropout);
    Eigen::VectorXd grad_eta;
    const double data_loss =
        detail::cox_neg_loglik(layout, train.y.event, out.col(0), &grad_eta);
    const double loss = data_loss + nn::penalty_value(model.stack, opts.l1, opts.l2);
    if (!std::isfinite(loss)) throw NonFiniteLossError(epoch, "partial-likelihood loss");
    model.trace.train_loss.push_back(loss);
    model.trace.epochs_run = epoch + 1;

    nn::Gradients grads = nn::backward(model.stack, cache, grad_eta);
    nn::add_penalty_gradient(model.stack, opts.l1, opts.l2, grads);
    nn::adam_step(model.stack, grads, adam, opts.learning_rate);

    if (early_stop) {
      const Eigen::MatrixXd val_out = nn::forward(model.stack, val.x.values);
      const double val_loss =
          detail::cox_neg_loglik(val_layout, val.y.event, val_out.col(0), nullptr);
      if (!std::isfinite(val_loss)) throw NonFiniteLossError(epoch, "validation loss");
      model.trace.val_loss.push_back(val_loss);
      if (val_loss < best_val) {
        best_val = val_loss;
        best = model.stack;
        model.trace.best_epoch = epoch;
        wait = 0;
      } else if (++wait >= opts.patience) {
        break;
      }
    }
  }
  if (early_stop) model.stack = best;

  // Baseline from the full dataset under the final predictor.
  const Eigen::VectorXd eta_full = nn::forward(model.stack, d.x.values).col(0);
  model.baseline = breslow_baseline(d.y, eta_full);
  const auto full_layout = detail::cox_layout(d.y.time, d.y.event);
  model.neg_loglik = detail::cox_neg_loglik(full_layout, d.y.event, eta_full, nullptr);
  return model;
}

}  // namespace cpfilter
