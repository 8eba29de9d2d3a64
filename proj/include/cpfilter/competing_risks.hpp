#pragma once

// Discrete-time competing-risks network: time is cut into K bins at
// equally spaced quantiles of the observed times, and a softmax over
// 2K+1 outputs assigns mass to (cause 1, bin k), (cause 2, bin k), and
// surviving past the last cutpoint. Cumulative sums of the mass give the
// cause-specific incidence functions.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "cpfilter/data.hpp"
#include "cpfilter/errors.hpp"
#include "cpfilter/mlp.hpp"
#include "cpfilter/model.hpp"
#include "cpfilter/rng.hpp"

namespace cpfilter {

class DiscreteTimeCrModel : public PredictionModel {
 public:
  nn::DenseStack stack;
  std::vector<double> cutpoints;  // ascending; last equals the max observed time
  MlpFitTrace trace;

  int n_bins() const { return static_cast<int>(cutpoints.size()); }
  int input_dim() const override { return stack.input_dim(); }

  PredictionSurface primary_surface() const override { return PredictionSurface::cif; }

  // Output layout: index (c-1)*K + (k-1) is mass(cause c, bin k) for
  // c in {1,2}, k in 1..K; index 2K is the survive-past mass.
  Eigen::MatrixXd predict_mass_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    Eigen::MatrixXd logits = nn::forward(stack, x);
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const double m = logits.row(i).maxCoeff();
      logits.row(i) = (logits.row(i).array() - m).exp();
      logits.row(i) /= logits.row(i).sum();
    }
    return logits;
  }

  Eigen::VectorXd predict_cif(const Eigen::Ref<const Eigen::RowVectorXd>& x, int cause,
                              const std::vector<double>& times) const override {
    return predict_cif_batch(x, cause, times).row(0).transpose();
  }

  Eigen::MatrixXd predict_cif_batch(const Eigen::Ref<const Eigen::MatrixXd>& x, int cause,
                                    const std::vector<double>& times) const override {
    if (cause != 1 && cause != 2) {
      throw ValidationError("cause must be 1 or 2, got " + std::to_string(cause));
    }
    const int K = n_bins();
    const Eigen::MatrixXd mass = predict_mass_batch(x);
    // Cumulative mass per bin for the requested cause.
    Eigen::MatrixXd cum(x.rows(), K);
    cum.col(0) = mass.col((cause - 1) * K);
    for (int k = 1; k < K; ++k) {
      cum.col(k) = cum.col(k - 1) + mass.col((cause - 1) * K + k);
    }
    // CIF(t) is the right-continuous step through the cutpoints.
    Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(times.size()));
    for (std::size_t j = 0; j < times.size(); ++j) {
      const auto it = std::upper_bound(cutpoints.begin(), cutpoints.end(), times[j]);
      const int bins_passed = static_cast<int>(it - cutpoints.begin());
      if (bins_passed == 0) {
        out.col(static_cast<Eigen::Index>(j)).setZero();
      } else {
        out.col(static_cast<Eigen::Index>(j)) = cum.col(bins_passed - 1);
      }
    }
    return out;
  }
};

struct DiscreteCrOptions {
  int n_bins = 20;
  std::vector<int> hidden{128, 64, 32, 16};
  Activation activation = Activation::relu;
  double leaky_alpha = 0.01;
  double learning_rate = 0.01;
  double l1 = 0.0;
  double l2 = 0.0;
  double dropout = 0.0;
  int batch_size = 50;
  int max_epochs = 500;
  int patience = 50;
  double val_fraction = 0.1;  // 0 disables early stopping
  std::uint64_t seed = 0;
};

namespace detail {

/// Bin of a time value: the smallest k (1-based) with t <= cutpoint[k-1].
/// Times beyond the last cutpoint land in the last bin.
inline int time_bin(const std::vector<double>& cutpoints, double t) {
  const auto it = std::lower_bound(cutpoints.begin(), cutpoints.end(), t);
  if (it == cutpoints.end()) return static_cast<int>(cutpoints.size());
  return static_cast<int>(it - cutpoints.begin()) + 1;
}

// Per-row likelihood target: events hit one output; censored rows spread
// over everything strictly after their bin.
struct CrTarget {
  int event_index = -1;   // >= 0 for observed events
  int after_start = -1;   // for censored rows: bins k' > k of both causes
};

inline CrTarget cr_target(int K, int cause, int bin) {
  CrTarget t;
  if (cause > 0) {
    t.event_index = (cause - 1) * K + (bin - 1);
  } else {
    t.after_start = bin;  // bins after_start+1 .. K survive, plus index 2K
  }
  return t;
}

// Mean negative log likelihood of a batch and, optionally, its gradient
// with respect to the logits.
inline double cr_loss(const Eigen::MatrixXd& logits, const std::vector<CrTarget>& targets,
                      int K, Eigen::MatrixXd* grad) {
  const Eigen::Index rows = logits.rows();
  const double n = static_cast<double>(rows);
  if (grad) grad->resize(rows, logits.cols());
  double loss = 0.0;
  Eigen::VectorXd p(logits.cols());
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double m = logits.row(i).maxCoeff();
    p = (logits.row(i).array() - m).exp().transpose();
    p /= p.sum();
    const CrTarget& t = targets[static_cast<std::size_t>(i)];
    double mass;  // likelihood contribution of this row
    if (t.event_index >= 0) {
      mass = p[t.event_index];
      if (grad) {
        grad->row(i) = p.transpose() / n;
        (*grad)(i, t.event_index) -= 1.0 / n;
      }
    } else {
      mass = p[2 * K];
      for (int c = 0; c < 2; ++c) {
        for (int k = t.after_start; k < K; ++k) mass += p[c * K + k];
      }
      if (grad) {
        // d(-log sum_A p)/dz_j = p_j - 1{j in A} p_j / mass
        grad->row(i) = p.transpose() / n;
        (*grad)(i, 2 * K) -= p[2 * K] / mass / n;
        for (int c = 0; c < 2; ++c) {
          for (int k = t.after_start; k < K; ++k) {
            (*grad)(i, c * K + k) -= p[c * K + k] / mass / n;
          }
        }
      }
    }
    loss -= std::log(std::max(mass, 1e-300));
  }
  return loss / n;
}

}  // namespace detail

/// Cutpoints at the k/K quantiles of the observed times, k = 1..K; the
/// last cutpoint is the maximum observed time.
inline std::vector<double> cr_cutpoints(const Eigen::VectorXd& time, int K) {
  if (K < 2) throw ValidationError("need at least 2 time bins, got " + std::to_string(K));
  std::vector<double> sorted(time.data(), time.data() + time.size());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> cuts;
  cuts.reserve(static_cast<std::size_t>(K));
  for (int k = 1; k <= K; ++k) {
    const double c = quantile_sorted(sorted, static_cast<double>(k) / K);
    if (cuts.empty() || c > cuts.back()) cuts.push_back(c);
  }
  if (cuts.size() < 2) {
    throw ValidationError("observed times are too concentrated to form 2 distinct bins");
  }
  return cuts;
}

inline DiscreteTimeCrModel fit_discrete_cr(const Dataset& d, const DiscreteCrOptions& opts) {
  d.require_aligned();
  if (d.y.kind != OutcomeKind::competing_risks) {
    throw OutcomeMismatchError("discrete-time incidence fit needs competing-risks data");
  }
  bool seen1 = false, seen2 = false;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    if (d.y.cause[i] == 1) seen1 = true;
    if (d.y.cause[i] == 2) seen2 = true;
  }
  if (!seen1 && !seen2) throw NoEventsError("no uncensored events of either cause");
  if (!seen1 || !seen2) {
    throw SingleCauseDataError(std::string("no events of cause ") + (seen1 ? "2" : "1"));
  }

  DiscreteTimeCrModel model;
  model.cutpoints = cr_cutpoints(d.y.time, opts.n_bins);
  const int K = model.n_bins();

  Dataset train = d;
  Dataset val{FeatureMatrix{}, Outcome{}};
  const bool early_stop = opts.val_fraction > 0.0 && opts.patience > 0;
  if (early_stop) {
    auto split = train_test_split(d, 1.0 - opts.val_fraction, derive_seed(opts.seed, 0x7A17ULL));
    train = std::move(split.first);
    val = std::move(split.second);
  }

  auto targets_for = [&](const Outcome& y) {
    std::vector<detail::CrTarget> targets(static_cast<std::size_t>(y.size()));
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const int bin = detail::time_bin(model.cutpoints, y.time[i]);
      targets[static_cast<std::size_t>(i)] = detail::cr_target(K, y.cause[i], bin);
    }
    return targets;
  };
  const auto train_targets = targets_for(train.y);
  const auto val_targets = early_stop ? targets_for(val.y) : std::vector<detail::CrTarget>{};

  const int p = static_cast<int>(d.x.cols());
  model.stack = nn::init_stack(p, opts.hidden, 2 * K + 1, opts.activation, opts.leaky_alpha,
                               opts.seed);
  nn::AdamState adam = nn::AdamState::like(model.stack);

  const int n = static_cast<int>(train.rows());
  const int batch = std::max(1, std::min(opts.batch_size, n));
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  nn::DenseStack best = model.stack;
  double best_val = std::numeric_limits<double>::infinity();
  int wait = 0;

  for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
    Rng shuffle_rng(opts.seed, /*stream=*/0xE000ULL + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);
    Rng dropout_rng(opts.seed, /*stream=*/0xD000ULL + static_cast<std::uint64_t>(epoch));

    double epoch_loss = 0.0;
    for (int start = 0; start < n; start += batch) {
      const int count = std::min(batch, n - start);
      Eigen::MatrixXd xb(count, p);
      std::vector<detail::CrTarget> tb(static_cast<std::size_t>(count));
      for (int r = 0; r < count; ++r) {
        xb.row(r) = train.x.values.row(order[start + r]);
        tb[static_cast<std::size_t>(r)] = train_targets[static_cast<std::size_t>(order[start + r])];
      }
      nn::ForwardCache cache;
      const Eigen::MatrixXd logits =
          nn::forward(model.stack, xb, &cache,
                      opts.dropout > 0.0 ? &dropout_rng : nullptr, opts.dropout);
      Eigen::MatrixXd d_logits;
      const double data_loss = detail::cr_loss(logits, tb, K, &d_logits);
      epoch_loss += data_loss * count;
      nn::Gradients grads = nn::backward(model.stack, cache, d_logits);
      nn::add_penalty_gradient(model.stack, opts.l1, opts.l2, grads);
      nn::adam_step(model.stack, grads, adam, opts.learning_rate);
    }
    epoch_loss = epoch_loss / n + nn::penalty_value(model.stack, opts.l1, opts.l2);
    if (!std::isfinite(epoch_loss)) throw NonFiniteLossError(epoch, "training loss");
    model.trace.train_loss.push_back(epoch_loss);
    model.trace.epochs_run = epoch + 1;

    if (early_stop) {
      const Eigen::MatrixXd val_logits = nn::forward(model.stack, val.x.values);
      const double val_loss = detail::cr_loss(val_logits, val_targets, K, nullptr);
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
  return model;
}

}  // namespace cpfilter
