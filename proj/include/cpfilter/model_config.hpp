#pragma once

// Declarative model configuration: a JSON document selects the model kind
// and its training hyperparameters, and fit_configured_model dispatches to
// the matching fitter. Unknown keys are rejected so config typos fail
// fast instead of silently training with defaults.

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cpfilter/competing_risks.hpp"
#include "cpfilter/cox.hpp"
#include "cpfilter/data.hpp"
#include "cpfilter/errors.hpp"
#include "cpfilter/lasso.hpp"
#include "cpfilter/mlp.hpp"
#include "cpfilter/model.hpp"

namespace cpfilter {

enum class LinkKind { linear, nonlinear };

inline const char* to_string(LinkKind k) {
  return k == LinkKind::linear ? "linear" : "nonlinear";
}

inline LinkKind parse_link_kind(const std::string& s) {
  if (s == "linear") return LinkKind::linear;
  if (s == "nonlinear") return LinkKind::nonlinear;
  throw ValidationError("unknown link '" + s + "' (expected linear or nonlinear)");
}

struct ModelConfig {
  // "auto" resolves from the outcome family: mlp for continuous/binary,
  // cox_network for survival, discrete_cr for competing risks.
  std::string kind = "auto";

  // network settings
  std::vector<int> hidden;  // empty -> per-family default
  Activation activation = Activation::relu;
  double leaky_alpha = 0.01;
  double learning_rate = 0.01;
  double l1 = 0.0;
  double l2 = 0.0;
  double dropout = 0.0;
  int batch_size = 20;
  int max_epochs = 500;
  int patience = 50;
  double val_fraction = 0.1;
  bool standardize_target = true;
  int n_bins = 20;

  // lasso settings
  double lambda = -1.0;
  int cv_folds = 10;
  int n_lambda = 100;
  double lambda_min_ratio = 1e-3;
};

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "leaky_relu") return Activation::leaky_relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "linear") return Activation::linear;
  throw ValidationError("unknown activation '" + s + "'");
}

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::linear: return "linear";
  }
  return "?";
}

/// Architectures and training settings used when a scenario names no
/// model config: small rectifier nets for scalar outcomes, deeper stacks
/// for the time-to-event fits.
inline ModelConfig default_model_config(OutcomeKind family, LinkKind link) {
  ModelConfig cfg;
  switch (family) {
    case OutcomeKind::continuous:
    case OutcomeKind::binary:
      cfg.kind = "mlp";
      cfg.hidden = link == LinkKind::linear ? std::vector<int>{8}
                                            : std::vector<int>{64, 32, 16};
      cfg.l1 = 0.001;
      cfg.learning_rate = 0.01;
      cfg.batch_size = 20;
      cfg.patience = 50;
      cfg.val_fraction = 0.1;
      break;
    case OutcomeKind::survival:
      cfg.kind = "cox_network";
      cfg.hidden = link == LinkKind::linear ? std::vector<int>{64, 32, 16, 8}
                                            : std::vector<int>{128, 64, 32, 16};
      cfg.l2 = 0.01;
      cfg.learning_rate = 0.01;
      cfg.patience = 50;
      cfg.val_fraction = 0.2;
      break;
    case OutcomeKind::competing_risks:
      cfg.kind = "discrete_cr";
      cfg.hidden = {128, 64, 32, 16};
      cfg.learning_rate = 0.01;
      cfg.batch_size = 50;
      cfg.patience = 200;
      cfg.val_fraction = 0.2;
      cfg.n_bins = 20;
      break;
  }
  return cfg;
}

namespace detail {

inline void require_known_keys(const nlohmann::json& j, const std::vector<std::string>& known,
                               const std::string& where) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const auto& k : known) {
      if (item.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ValidationError("unknown key '" + item.key() + "' in " + where);
  }
}

}  // namespace detail

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  detail::require_known_keys(
      j,
      {"kind", "hidden", "activation", "leaky_alpha", "learning_rate", "l1", "l2", "dropout",
       "batch_size", "max_epochs", "patience", "val_fraction", "standardize_target", "n_bins",
       "lambda", "cv_folds", "n_lambda", "lambda_min_ratio"},
      "model config");
  ModelConfig cfg;
  cfg.kind = j.value("kind", cfg.kind);
  if (j.contains("hidden")) cfg.hidden = j.at("hidden").get<std::vector<int>>();
  if (j.contains("activation")) cfg.activation = parse_activation(j.at("activation"));
  cfg.leaky_alpha = j.value("leaky_alpha", cfg.leaky_alpha);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.l1 = j.value("l1", cfg.l1);
  cfg.l2 = j.value("l2", cfg.l2);
  cfg.dropout = j.value("dropout", cfg.dropout);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
  cfg.patience = j.value("patience", cfg.patience);
  cfg.val_fraction = j.value("val_fraction", cfg.val_fraction);
  cfg.standardize_target = j.value("standardize_target", cfg.standardize_target);
  cfg.n_bins = j.value("n_bins", cfg.n_bins);
  cfg.lambda = j.value("lambda", cfg.lambda);
  cfg.cv_folds = j.value("cv_folds", cfg.cv_folds);
  cfg.n_lambda = j.value("n_lambda", cfg.n_lambda);
  cfg.lambda_min_ratio = j.value("lambda_min_ratio", cfg.lambda_min_ratio);
  return cfg;
}

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["kind"] = cfg.kind;
  j["hidden"] = cfg.hidden;
  j["activation"] = to_string(cfg.activation);
  j["leaky_alpha"] = cfg.leaky_alpha;
  j["learning_rate"] = cfg.learning_rate;
  j["l1"] = cfg.l1;
  j["l2"] = cfg.l2;
  j["dropout"] = cfg.dropout;
  j["batch_size"] = cfg.batch_size;
  j["max_epochs"] = cfg.max_epochs;
  j["patience"] = cfg.patience;
  j["val_fraction"] = cfg.val_fraction;
  j["standardize_target"] = cfg.standardize_target;
  j["n_bins"] = cfg.n_bins;
  j["lambda"] = cfg.lambda;
  j["cv_folds"] = cfg.cv_folds;
  j["n_lambda"] = cfg.n_lambda;
  j["lambda_min_ratio"] = cfg.lambda_min_ratio;
  return j;
}

/// Resolves "auto" and empty architectures against the outcome family.
inline ModelConfig resolve_model_config(ModelConfig cfg, OutcomeKind family, LinkKind link) {
  const ModelConfig defaults = default_model_config(family, link);
  if (cfg.kind == "auto") cfg.kind = defaults.kind;
  if (cfg.hidden.empty()) cfg.hidden = defaults.hidden;
  return cfg;
}

inline LassoFamily lasso_family_for(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::continuous: return LassoFamily::gaussian;
    case OutcomeKind::binary: return LassoFamily::binomial;
    case OutcomeKind::survival: return LassoFamily::cox;
    case OutcomeKind::competing_risks:
      throw FamilyMismatchError(
          "no lasso family fits competing-risks outcomes; use the cpf statistic");
  }
  throw FamilyMismatchError("unhandled outcome kind");
}

inline LassoOptions lasso_options_from(const ModelConfig& cfg, OutcomeKind kind,
                                       std::uint64_t seed) {
  LassoOptions opts;
  opts.family = lasso_family_for(kind);
  opts.lambda = cfg.lambda;
  opts.cv_folds = cfg.cv_folds;
  opts.n_lambda = cfg.n_lambda;
  opts.lambda_min_ratio = cfg.lambda_min_ratio;
  opts.seed = seed;
  return opts;
}

/// Trains the configured model on d. The config must already be resolved
/// (kind != "auto") or the outcome family decides.
inline std::unique_ptr<PredictionModel> fit_configured_model(const Dataset& d, ModelConfig cfg,
                                                             LinkKind link, std::uint64_t seed) {
  cfg = resolve_model_config(std::move(cfg), d.y.kind, link);
  if (cfg.kind == "lasso") {
    return std::make_unique<LassoModel>(fit_lasso(d, lasso_options_from(cfg, d.y.kind, seed)));
  }
  if (cfg.kind == "mlp") {
    MlpConfig mc;
    mc.hidden = cfg.hidden;
    mc.activation = cfg.activation;
    mc.leaky_alpha = cfg.leaky_alpha;
    mc.learning_rate = cfg.learning_rate;
    mc.l1 = cfg.l1;
    mc.l2 = cfg.l2;
    mc.dropout = cfg.dropout;
    mc.batch_size = cfg.batch_size;
    mc.max_epochs = cfg.max_epochs;
    mc.patience = cfg.patience;
    mc.val_fraction = cfg.val_fraction;
    mc.standardize_target = cfg.standardize_target;
    mc.seed = seed;
    return std::make_unique<MlpModel>(fit_mlp(d, mc));
  }
  if (cfg.kind == "cox_linear") {
    return std::make_unique<CoxModel>(fit_cox_linear(d));
  }
  if (cfg.kind == "cox_network") {
    CoxNetOptions opts;
    opts.hidden = cfg.hidden;
    opts.activation = cfg.activation;
    opts.leaky_alpha = cfg.leaky_alpha;
    opts.learning_rate = cfg.learning_rate;
    opts.l1 = cfg.l1;
    opts.l2 = cfg.l2;
    opts.dropout = cfg.dropout;
    opts.max_epochs = cfg.max_epochs;
    opts.patience = cfg.patience;
    opts.val_fraction = cfg.val_fraction;
    opts.seed = seed;
    return std::make_unique<CoxModel>(fit_cox_network(d, opts));
  }
  if (cfg.kind == "discrete_cr") {
    DiscreteCrOptions opts;
    opts.n_bins = cfg.n_bins;
    opts.hidden = cfg.hidden;
    opts.activation = cfg.activation;
    opts.leaky_alpha = cfg.leaky_alpha;
    opts.learning_rate = cfg.learning_rate;
    opts.l1 = cfg.l1;
    opts.l2 = cfg.l2;
    opts.dropout = cfg.dropout;
    opts.batch_size = cfg.batch_size;
    opts.max_epochs = cfg.max_epochs;
    opts.patience = cfg.patience;
    opts.val_fraction = cfg.val_fraction;
    opts.seed = seed;
    return std::make_unique<DiscreteTimeCrModel>(fit_discrete_cr(d, opts));
  }
  throw ValidationError("unknown model kind '" + cfg.kind + "'");
}

}  // namespace cpfilter
