#pragma once

// Feed-forward network machinery: a dense stack with explicit forward and
// backward passes, Adam updates, inverted dropout, and L1/L2 weight
// penalties. fit_mlp trains scalar-regression and binary-classification
// heads with minibatches and patience-based early stopping. The same
// stack drives the survival and competing-risks fitters.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cpfilter/data.hpp"
#include "cpfilter/errors.hpp"
#include "cpfilter/model.hpp"
#include "cpfilter/rng.hpp"

namespace cpfilter {

enum class Activation { relu, leaky_relu, sigmoid, linear };

namespace nn {

// Weight matrices are out x in; activations apply to every layer except
// the last, whose preactivation is returned raw for the task head.
struct DenseStack {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;
  Activation activation = Activation::relu;
  double leaky_alpha = 0.01;

  int n_layers() const { return static_cast<int>(w.size()); }
  int input_dim() const { return w.empty() ? 0 : static_cast<int>(w.front().cols()); }
  int output_dim() const { return w.empty() ? 0 : static_cast<int>(w.back().rows()); }
};

inline DenseStack init_stack(int input_dim, const std::vector<int>& hidden, int output_dim,
                             Activation activation, double leaky_alpha, std::uint64_t seed) {
  DenseStack stack;
  stack.activation = activation;
  stack.leaky_alpha = leaky_alpha;
  std::vector<int> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(output_dim);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Rng rng(seed, /*stream=*/0x11A0ULL + l);
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    // He scaling for rectifiers, Glorot otherwise.
    const double sd = (activation == Activation::relu || activation == Activation::leaky_relu)
                          ? std::sqrt(2.0 / fan_in)
                          : std::sqrt(2.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) w(r, c) = sd * rng.normal();
    }
    stack.w.push_back(std::move(w));
    stack.b.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return stack;
}

inline void apply_activation(const DenseStack& stack, Eigen::MatrixXd& z) {
  switch (stack.activation) {
    case Activation::relu:
      z = z.cwiseMax(0.0);
      break;
    case Activation::leaky_relu:
      z = z.unaryExpr([a = stack.leaky_alpha](double v) { return v > 0.0 ? v : a * v; });
      break;
    case Activation::sigmoid:
      z = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
      break;
    case Activation::linear:
      break;
  }
}

// Derivative expressed through the preactivation z (for sigmoid it is
// recomputed; the stack is small enough that this costs little).
inline Eigen::MatrixXd activation_grad(const DenseStack& stack, const Eigen::MatrixXd& z) {
  switch (stack.activation) {
    case Activation::relu:
      return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::leaky_relu:
      return z.unaryExpr([a = stack.leaky_alpha](double v) { return v > 0.0 ? 1.0 : a; });
    case Activation::sigmoid:
      return z.unaryExpr([](double v) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 - s);
      });
    case Activation::linear:
      return Eigen::MatrixXd::Ones(z.rows(), z.cols());
  }
  return Eigen::MatrixXd::Ones(z.rows(), z.cols());
}

struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // input to each layer (rows = samples)
  std::vector<Eigen::MatrixXd> preact;  // z of each layer
  std::vector<Eigen::MatrixXd> mask;    // dropout masks on hidden outputs
};

/// Forward pass over a batch (rows = samples). Returns the final-layer
/// preactivation; task heads apply their own output transform. Passing a
/// dropout rng enables inverted dropout on hidden activations.
inline Eigen::MatrixXd forward(const DenseStack& stack, const Eigen::MatrixXd& x,
                               ForwardCache* cache = nullptr, Rng* dropout_rng = nullptr,
                               double dropout_rate = 0.0) {
  Eigen::MatrixXd a = x;
  const int layers = stack.n_layers();
  if (cache) {
    cache->inputs.assign(layers, {});
    cache->preact.assign(layers, {});
    cache->mask.assign(layers, {});
  }
  for (int l = 0; l < layers; ++l) {
    if (cache) cache->inputs[l] = a;
    Eigen::MatrixXd z = a * stack.w[l].transpose();
    z.rowwise() += stack.b[l].transpose();
    if (l + 1 == layers) {
      if (cache) cache->preact[l] = z;
      return z;
    }
    if (cache) cache->preact[l] = z;
    apply_activation(stack, z);
    if (dropout_rng && dropout_rate > 0.0) {
      const double keep = 1.0 - dropout_rate;
      Eigen::MatrixXd mask(z.rows(), z.cols());
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        for (Eigen::Index c = 0; c < z.cols(); ++c) {
          mask(r, c) = dropout_rng->bernoulli(keep) ? 1.0 / keep : 0.0;
        }
      }
      z.array() *= mask.array();
      if (cache) cache->mask[l] = std::move(mask);
    }
    a = std::move(z);
  }
  return a;
}

struct Gradients {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;
};

/// Backward pass. d_out is dLoss/d(final preactivation), already carrying
/// any 1/batch factor. Penalty gradients are not included here.
inline Gradients backward(const DenseStack& stack, const ForwardCache& cache,
                          const Eigen::MatrixXd& d_out) {
  const int layers = stack.n_layers();
  Gradients g;
  g.w.resize(layers);
  g.b.resize(layers);
  Eigen::MatrixXd dz = d_out;
  for (int l = layers - 1; l >= 0; --l) {
    g.w[l] = dz.transpose() * cache.inputs[l];
    g.b[l] = dz.colwise().sum().transpose();
    if (l == 0) break;
    Eigen::MatrixXd da = dz * stack.w[l];
    if (cache.mask[l - 1].size() > 0) da.array() *= cache.mask[l - 1].array();
    dz = da.cwiseProduct(activation_grad(stack, cache.preact[l - 1]));
  }
  return g;
}

/// Adds L1/L2 penalty gradients on the weight matrices (biases are
/// unpenalized). The L1 subgradient at zero is zero.
inline void add_penalty_gradient(const DenseStack& stack, double l1, double l2, Gradients& g) {
  if (l1 == 0.0 && l2 == 0.0) return;
  for (int l = 0; l < stack.n_layers(); ++l) {
    if (l2 != 0.0) g.w[l] += 2.0 * l2 * stack.w[l];
    if (l1 != 0.0) {
      g.w[l] += l1 * stack.w[l].unaryExpr([](double v) {
        return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
      });
    }
  }
}

inline double penalty_value(const DenseStack& stack, double l1, double l2) {
  double total = 0.0;
  for (const auto& w : stack.w) {
    if (l1 != 0.0) total += l1 * w.cwiseAbs().sum();
    if (l2 != 0.0) total += l2 * w.squaredNorm();
  }
  return total;
}

struct AdamState {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState like(const DenseStack& stack) {
    AdamState s;
    for (int l = 0; l < stack.n_layers(); ++l) {
      s.mw.push_back(Eigen::MatrixXd::Zero(stack.w[l].rows(), stack.w[l].cols()));
      s.vw.push_back(Eigen::MatrixXd::Zero(stack.w[l].rows(), stack.w[l].cols()));
      s.mb.push_back(Eigen::VectorXd::Zero(stack.b[l].size()));
      s.vb.push_back(Eigen::VectorXd::Zero(stack.b[l].size()));
    }
    return s;
  }
};

inline void adam_step(DenseStack& stack, const Gradients& g, AdamState& s, double lr) {
  ++s.t;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (int l = 0; l < stack.n_layers(); ++l) {
    s.mw[l] = s.beta1 * s.mw[l] + (1.0 - s.beta1) * g.w[l];
    s.vw[l] = s.beta2 * s.vw[l] + (1.0 - s.beta2) * g.w[l].cwiseProduct(g.w[l]);
    stack.w[l].array() -=
        lr * (s.mw[l].array() / c1) / ((s.vw[l].array() / c2).sqrt() + s.eps);
    s.mb[l] = s.beta1 * s.mb[l] + (1.0 - s.beta1) * g.b[l];
    s.vb[l] = s.beta2 * s.vb[l] + (1.0 - s.beta2) * g.b[l].cwiseProduct(g.b[l]);
    stack.b[l].array() -=
        lr * (s.mb[l].array() / c1) / ((s.vb[l].array() / c2).sqrt() + s.eps);
  }
}

}  // namespace nn

enum class MlpHead { scalar, binary };

struct MlpConfig {
  std::vector<int> hidden{8, 8, 8};
  Activation activation = Activation::relu;
  double leaky_alpha = 0.01;
  double learning_rate = 0.01;
  double l1 = 0.0;
  double l2 = 0.0;
  double dropout = 0.0;
  int batch_size = 20;
  int max_epochs = 500;
  int patience = 50;
  double val_fraction = 0.1;      // 0 disables early stopping
  bool standardize_target = true; // regression targets only
  std::uint64_t seed = 0;
};

struct MlpFitTrace {
  std::vector<double> train_loss;  // data loss + penalty, per epoch
  std::vector<double> val_loss;    // data loss on the held-out split
  int best_epoch = 0;
  int epochs_run = 0;
};

class MlpModel : public PredictionModel {
 public:
  nn::DenseStack stack;
  MlpHead head = MlpHead::scalar;
  double target_mean = 0.0;   // regression target unscaling
  double target_scale = 1.0;
  MlpFitTrace trace;

  int input_dim() const override { return stack.input_dim(); }

  PredictionSurface primary_surface() const override {
    return head == MlpHead::scalar ? PredictionSurface::scalar : PredictionSurface::probs;
  }

  double predict_scalar(const Eigen::Ref<const Eigen::RowVectorXd>& x) const override {
    if (head != MlpHead::scalar) {
      throw OutcomeMismatchError("scalar surface requires a regression network");
    }
    const Eigen::MatrixXd out = nn::forward(stack, x);
    return target_mean + target_scale * out(0, 0);
  }

  Eigen::VectorXd predict_probs(const Eigen::Ref<const Eigen::RowVectorXd>& x) const override {
    if (head != MlpHead::binary) {
      throw OutcomeMismatchError("probability surface requires a classification network");
    }
    const Eigen::MatrixXd out = nn::forward(stack, x);
    const double p = 1.0 / (1.0 + std::exp(-out(0, 0)));
    Eigen::VectorXd probs(2);
    probs << 1.0 - p, p;
    return probs;
  }

  Eigen::VectorXd predict_scalar_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const override {
    if (head != MlpHead::scalar) {
      throw OutcomeMismatchError("scalar surface requires a regression network");
    }
    const Eigen::MatrixXd out = nn::forward(stack, x);
    return (out.col(0).array() * target_scale + target_mean).matrix();
  }

  Eigen::MatrixXd predict_probs_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const override {
    if (head != MlpHead::binary) {
      throw OutcomeMismatchError("probability surface requires a classification network");
    }
    const Eigen::MatrixXd out = nn::forward(stack, x);
    Eigen::MatrixXd probs(x.rows(), 2);
    probs.col(1) = out.col(0).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    probs.col(0) = 1.0 - probs.col(1).array();
    return probs;
  }
};

namespace detail {

// Data loss for the supervised heads. Binary cross-entropy works on the
// logit for stability.
inline double head_loss(MlpHead head, const Eigen::MatrixXd& out, const Eigen::VectorXd& y) {
  const double n = static_cast<double>(out.rows());
  if (head == MlpHead::scalar) {
    return (out.col(0) - y).squaredNorm() / n;
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double z = out(i, 0);
    total += std::max(z, 0.0) - z * y[i] + std::log1p(std::exp(-std::abs(z)));
  }
  return total / n;
}

inline Eigen::MatrixXd head_loss_grad(MlpHead head, const Eigen::MatrixXd& out,
                                      const Eigen::VectorXd& y) {
  const double n = static_cast<double>(out.rows());
  Eigen::MatrixXd d(out.rows(), 1);
  if (head == MlpHead::scalar) {
    d.col(0) = 2.0 * (out.col(0) - y) / n;
  } else {
    d.col(0) = (out.col(0).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); }) - y) / n;
  }
  return d;
}

}  // namespace detail

/// Full-batch loss (data + penalties) and gradient for a supervised stack;
/// the numeric-differentiation tests drive this directly.
inline double mlp_loss_and_gradient(const nn::DenseStack& stack, MlpHead head,
                                    const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                    double l1, double l2, nn::Gradients* grads) {
  nn::ForwardCache cache;
  const Eigen::MatrixXd out = nn::forward(stack, x, grads ? &cache : nullptr);
  if (grads) {
    *grads = nn::backward(stack, cache, detail::head_loss_grad(head, out, y));
    nn::add_penalty_gradient(stack, l1, l2, *grads);
  }
  return detail::head_loss(head, out, y) + nn::penalty_value(stack, l1, l2);
}

/// Trains a network on a continuous or binary outcome. Deterministic for a
/// fixed config: initialization, shuffling, and dropout all derive from
/// cfg.seed.
inline MlpModel fit_mlp(const Dataset& d, const MlpConfig& cfg) {
  d.require_aligned();
  if (d.y.kind != OutcomeKind::continuous && d.y.kind != OutcomeKind::binary) {
    throw OutcomeMismatchError("network fitting handles continuous or binary outcomes here");
  }
  MlpModel model;
  model.head = d.y.kind == OutcomeKind::continuous ? MlpHead::scalar : MlpHead::binary;

  Dataset train = d;
  Dataset val{FeatureMatrix{}, Outcome{}};
  const bool early_stop = cfg.val_fraction > 0.0 && cfg.patience > 0;
  if (early_stop) {
    auto split = train_test_split(d, 1.0 - cfg.val_fraction, derive_seed(cfg.seed, 0x7A17ULL));
    train = std::move(split.first);
    val = std::move(split.second);
  }

  Eigen::VectorXd y_train = train.y.y;
  Eigen::VectorXd y_val = early_stop ? val.y.y : Eigen::VectorXd();
  if (model.head == MlpHead::scalar && cfg.standardize_target) {
    model.target_mean = y_train.mean();
    const double sd = sample_sd(y_train);
    model.target_scale = sd > 0.0 ? sd : 1.0;
    y_train = (y_train.array() - model.target_mean) / model.target_scale;
    if (early_stop) y_val = (y_val.array() - model.target_mean) / model.target_scale;
  }

  const int p = static_cast<int>(d.x.cols());
  model.stack = nn::init_stack(p, cfg.hidden, 1, cfg.activation, cfg.leaky_alpha, cfg.seed);
  nn::AdamState adam = nn::AdamState::like(model.stack);

  const int n = static_cast<int>(train.rows());
  const int batch = std::max(1, std::min(cfg.batch_size, n));
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  nn::DenseStack best = model.stack;
  double best_val = std::numeric_limits<double>::infinity();
  int wait = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(cfg.seed, /*stream=*/0xE000ULL + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);
    Rng dropout_rng(cfg.seed, /*stream=*/0xD000ULL + static_cast<std::uint64_t>(epoch));

    double epoch_loss = 0.0;
    for (int start = 0; start < n; start += batch) {
      const int count = std::min(batch, n - start);
      Eigen::MatrixXd xb(count, p);
      Eigen::VectorXd yb(count);
      for (int r = 0; r < count; ++r) {
        xb.row(r) = train.x.values.row(order[start + r]);
        yb[r] = y_train[order[start + r]];
      }
      nn::ForwardCache cache;
      const Eigen::MatrixXd out =
          nn::forward(model.stack, xb, &cache,
                      cfg.dropout > 0.0 ? &dropout_rng : nullptr, cfg.dropout);
      const double data_loss = detail::head_loss(model.head, out, yb);
      epoch_loss += data_loss * count;
      nn::Gradients grads =
          nn::backward(model.stack, cache, detail::head_loss_grad(model.head, out, yb));
      nn::add_penalty_gradient(model.stack, cfg.l1, cfg.l2, grads);
      nn::adam_step(model.stack, grads, adam, cfg.learning_rate);
    }
    epoch_loss = epoch_loss / n + nn::penalty_value(model.stack, cfg.l1, cfg.l2);
    if (!std::isfinite(epoch_loss)) {
      throw NonFiniteLossError(epoch, "training loss");
    }
    model.trace.train_loss.push_back(epoch_loss);
    model.trace.epochs_run = epoch + 1;

    if (early_stop) {
      const Eigen::MatrixXd val_out = nn::forward(model.stack, val.x.values);
      const double val_loss = detail::head_loss(model.head, val_out, y_val);
      if (!std::isfinite(val_loss)) {
        throw NonFiniteLossError(epoch, "validation loss");
      }
      model.trace.val_loss.push_back(val_loss);
      if (val_loss < best_val) {
        best_val = val_loss;
        best = model.stack;
        model.trace.best_epoch = epoch;
        wait = 0;
      } else if (++wait >= cfg.patience) {
        break;
      }
    }
  }
  if (early_stop) model.stack = best;
  return model;
}

}  // namespace cpfilter
