#pragma once

// Synthetic scenario generators and the end-to-end replication pipeline:
// generate features and outcome, standardize, fit the knockoff sampler,
// sample knockoffs, fit the configured model on [X, X-knockoff], compute
// the statistic, threshold, and score against the known truth. Each
// replication is deterministic from (master seed, rep index). Both the
// knockoff and knockoff+ selections are scored from the same W vector.

#include <json.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "cpfilter/cpf.hpp"
#include "cpfilter/data.hpp"
#include "cpfilter/errors.hpp"
#include "cpfilter/knockoff.hpp"
#include "cpfilter/model_config.hpp"
#include "cpfilter/rng.hpp"
#include "cpfilter/selection.hpp"
#include "cpfilter/statistics.hpp"

namespace cpfilter {

enum class FeatureDesign { iid_normal, ar1 };

inline const char* to_string(FeatureDesign d) {
  return d == FeatureDesign::iid_normal ? "iid_normal" : "ar1";
}

inline FeatureDesign parse_feature_design(const std::string& s) {
  if (s == "iid_normal") return FeatureDesign::iid_normal;
  if (s == "ar1") return FeatureDesign::ar1;
  throw ValidationError("unknown feature design '" + s + "' (expected iid_normal or ar1)");
}

inline OutcomeKind parse_outcome_kind(const std::string& s) {
  if (s == "continuous") return OutcomeKind::continuous;
  if (s == "binary") return OutcomeKind::binary;
  if (s == "survival") return OutcomeKind::survival;
  if (s == "competing_risks") return OutcomeKind::competing_risks;
  throw ValidationError("unknown outcome family '" + s + "'");
}

inline SelectionKind parse_selection_kind(const std::string& s) {
  if (s == "knockoff") return SelectionKind::knockoff;
  if (s == "knockoff_plus") return SelectionKind::knockoff_plus;
  throw ValidationError("unknown selection kind '" + s + "'");
}

struct ScenarioConfig {
  std::string name = "scenario";
  OutcomeKind outcome_family = OutcomeKind::continuous;
  LinkKind link = LinkKind::linear;
  int p = 50;
  int N = 2000;
  int true_k = 10;  // the first true_k columns carry signal
  FeatureDesign design = FeatureDesign::ar1;
  double rho = 0.2;
  double q = 0.2;
  StatisticKind statistic = StatisticKind::cpf;
  SelectionKind selection = SelectionKind::knockoff;  // headline kind in summaries
  ModelConfig model;
  CpfConfig cpf;
  int replications = 50;
  std::uint64_t seed = 0;

  void validate() const {
    if (p < 1 || N < 1) throw ValidationError("p and N must be >= 1");
    if (true_k < 0 || true_k > p) throw ValidationError("true_k must lie in [0, p]");
    if (!(rho > -1.0 && rho < 1.0)) throw ValidationError("rho must lie in (-1, 1)");
    if (!(q > 0.0 && q < 1.0)) throw InvalidQError("q must lie in (0,1)");
    if (replications < 1) throw ValidationError("replications must be >= 1");
    cpf.validate();
  }
};

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  detail::require_known_keys(
      j,
      {"name", "outcome_family", "link", "p", "N", "true_k", "feature_design", "rho", "q",
       "statistic", "selection_kind", "model", "cpf", "replications", "seed"},
      "scenario config");
  ScenarioConfig cfg;
  cfg.name = j.value("name", cfg.name);
  if (j.contains("outcome_family")) cfg.outcome_family = parse_outcome_kind(j.at("outcome_family"));
  if (j.contains("link")) cfg.link = parse_link_kind(j.at("link"));
  cfg.p = j.value("p", cfg.p);
  cfg.N = j.value("N", cfg.N);
  cfg.true_k = j.value("true_k", cfg.true_k);
  if (j.contains("feature_design")) cfg.design = parse_feature_design(j.at("feature_design"));
  cfg.rho = j.value("rho", cfg.rho);
  cfg.q = j.value("q", cfg.q);
  if (j.contains("statistic")) cfg.statistic = parse_statistic_kind(j.at("statistic"));
  if (j.contains("selection_kind")) cfg.selection = parse_selection_kind(j.at("selection_kind"));
  if (j.contains("model")) cfg.model = model_config_from_json(j.at("model"));
  if (j.contains("cpf")) {
    const auto& c = j.at("cpf");
    detail::require_known_keys(c, {"J", "n_sub", "delta", "time_grid", "seed"}, "cpf config");
    cfg.cpf.J = c.value("J", cfg.cpf.J);
    cfg.cpf.n_sub = c.value("n_sub", cfg.cpf.n_sub);
    cfg.cpf.delta = c.value("delta", cfg.cpf.delta);
    if (c.contains("time_grid")) cfg.cpf.time_grid = c.at("time_grid").get<std::vector<double>>();
  }
  cfg.replications = j.value("replications", cfg.replications);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

inline nlohmann::json scenario_to_json(const ScenarioConfig& cfg) {
  nlohmann::json j;
  j["name"] = cfg.name;
  j["outcome_family"] = to_string(cfg.outcome_family);
  j["link"] = to_string(cfg.link);
  j["p"] = cfg.p;
  j["N"] = cfg.N;
  j["true_k"] = cfg.true_k;
  j["feature_design"] = to_string(cfg.design);
  j["rho"] = cfg.rho;
  j["q"] = cfg.q;
  j["statistic"] = to_string(cfg.statistic);
  j["selection_kind"] = to_string(cfg.selection);
  j["model"] = model_config_to_json(cfg.model);
  j["cpf"] = {{"J", cfg.cpf.J},
              {"n_sub", cfg.cpf.n_sub},
              {"delta", cfg.cpf.delta},
              {"time_grid", cfg.cpf.time_grid}};
  j["replications"] = cfg.replications;
  j["seed"] = cfg.seed;
  return j;
}

/// iid N(0,1) entries, or AR(1) rows with cov rho^|i-j| via the recursion
/// x_j = rho x_{j-1} + sqrt(1-rho^2) z_j.
inline FeatureMatrix gen_features(int N, int p, FeatureDesign design, double rho,
                                  std::uint64_t seed) {
  if (N < 1 || p < 1) throw ValidationError("feature generation needs N, p >= 1");
  FeatureMatrix m;
  m.values.resize(N, p);
  m.column_names.reserve(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) m.column_names.push_back("x" + std::to_string(j + 1));
  m.column_kinds.assign(static_cast<std::size_t>(p), ColumnKind::continuous);
  Rng rng(seed, /*stream=*/0xFEA7ULL);
  const double carry = design == FeatureDesign::ar1 ? rho : 0.0;
  const double fresh = std::sqrt(1.0 - carry * carry);
  for (int i = 0; i < N; ++i) {
    m.values(i, 0) = rng.normal();
    for (int j = 1; j < p; ++j) {
      m.values(i, j) = carry * m.values(i, j - 1) + fresh * rng.normal();
    }
  }
  return m;
}

namespace detail {

inline Eigen::VectorXd true_feature_sum(const FeatureMatrix& x, int true_k, bool squared) {
  if (true_k > x.cols()) throw ValidationError("true_k exceeds the feature count");
  Eigen::VectorXd z = Eigen::VectorXd::Zero(x.rows());
  for (int j = 0; j < true_k; ++j) {
    if (squared) {
      z += x.values.col(j).cwiseProduct(x.values.col(j));
    } else {
      z += x.values.col(j);
    }
  }
  return z;
}

}  // namespace detail

/// Linear: y = 3 * sum of true features + 100 + N(0,1) noise.
/// Nonlinear: y = sum of squared true features, no noise term.
inline Outcome gen_continuous(const FeatureMatrix& x, LinkKind link, int true_k,
                              std::uint64_t seed) {
  Eigen::VectorXd y;
  if (link == LinkKind::linear) {
    y = 3.0 * detail::true_feature_sum(x, true_k, false);
    y.array() += 100.0;
    Rng rng(seed, /*stream=*/0x07C0ULL);
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += rng.normal();
  } else {
    y = detail::true_feature_sum(x, true_k, true);
  }
  return Outcome::continuous(std::move(y));
}

/// Linear: P(y=1) = logistic(sum of true features). Nonlinear: the sum of
/// squares is standardized to mean 0 / sd 1 and passed through the
/// logistic (the raw standardized value is not a probability).
inline Outcome gen_binary(const FeatureMatrix& x, LinkKind link, int true_k, std::uint64_t seed) {
  Eigen::VectorXd z = detail::true_feature_sum(x, true_k, link == LinkKind::nonlinear);
  if (link == LinkKind::nonlinear) {
    const double mean = z.mean();
    const double sd = sample_sd(z);
    z = (z.array() - mean) / (sd > 0.0 ? sd : 1.0);
  }
  Rng rng(seed, /*stream=*/0x07C0ULL);
  Eigen::VectorXd y(x.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double prob = 1.0 / (1.0 + std::exp(-z[i]));
    y[i] = rng.bernoulli(prob) ? 1.0 : 0.0;
  }
  return Outcome::binary(std::move(y));
}

/// Event time Exponential(exp(Z)) with Z = 0.5 * sum of (squared) true
/// features; censoring Exponential(0.05) linear, Exponential(0.1)
/// nonlinear. Observed time min(T, C), event = 1{T <= C}.
inline Outcome gen_survival(const FeatureMatrix& x, LinkKind link, int true_k,
                            std::uint64_t seed) {
  const Eigen::VectorXd z =
      0.5 * detail::true_feature_sum(x, true_k, link == LinkKind::nonlinear);
  const double censor_rate = link == LinkKind::linear ? 0.05 : 0.1;
  Rng rng(seed, /*stream=*/0x07C0ULL);
  Eigen::VectorXd time(x.rows());
  Eigen::VectorXi event(x.rows());
  for (Eigen::Index i = 0; i < time.size(); ++i) {
    const double t = rng.exponential(std::exp(z[i]));
    const double c = rng.exponential(censor_rate);
    time[i] = std::min(t, c);
    event[i] = t <= c ? 1 : 0;
  }
  return Outcome::survival(std::move(time), std::move(event));
}

// Baseline probability of a type-1 event in the competing-risks design.
inline constexpr double kCrBaselineQ = 0.5;

/// Two-step generator: cause-1 indicator Bernoulli(1 - (1-q)^{exp(Z)});
/// cause-1 times by closed-form inversion of F1(t|X)/F1(inf|X) with
/// F1(t|X) = 1 - (1 - q(1-e^{-t}))^{exp(Z)}; cause-2 times Exp(1);
/// censoring Exp(1). Z = sum of true features (linear) or sum of squares
/// minus 10 (nonlinear).
inline Outcome gen_competing_risks(const FeatureMatrix& x, LinkKind link, int true_k,
                                   std::uint64_t seed) {
  Eigen::VectorXd z = detail::true_feature_sum(x, true_k, link == LinkKind::nonlinear);
  if (link == LinkKind::nonlinear) z.array() -= 10.0;
  Rng rng(seed, /*stream=*/0x07C0ULL);
  Eigen::VectorXd time(x.rows());
  Eigen::VectorXi cause(x.rows());
  for (Eigen::Index i = 0; i < time.size(); ++i) {
    const double ez = std::exp(z[i]);
    const double p1 = 1.0 - std::pow(1.0 - kCrBaselineQ, ez);
    double t;
    bool type1;
    if (rng.bernoulli(p1)) {
      type1 = true;
      // Inverse of the conditional CDF: with a = 1 - (1 - u p1)^{1/ez},
      // F01(t) = a gives t = -log(1 - a/q); for q = 1/2 that is
      // -log(2(1 - u p1)^{1/ez} - 1).
      const double u = rng.uniform();
      const double b = std::exp(std::log1p(-u * p1) / ez);
      const double arg = 2.0 * b - 1.0;
      t = arg > 0.0 ? -std::log(arg) : std::numeric_limits<double>::infinity();
    } else {
      type1 = false;
      t = rng.exponential(1.0);
    }
    const double c = rng.exponential(1.0);
    if (t <= c) {
      time[i] = t;
      cause[i] = type1 ? 1 : 2;
    } else {
      time[i] = c;
      cause[i] = 0;
    }
  }
  return Outcome::competing_risks(std::move(time), std::move(cause));
}

inline Outcome gen_outcome(const FeatureMatrix& x, OutcomeKind family, LinkKind link, int true_k,
                           std::uint64_t seed) {
  switch (family) {
    case OutcomeKind::continuous: return gen_continuous(x, link, true_k, seed);
    case OutcomeKind::binary: return gen_binary(x, link, true_k, seed);
    case OutcomeKind::survival: return gen_survival(x, link, true_k, seed);
    case OutcomeKind::competing_risks: return gen_competing_risks(x, link, true_k, seed);
  }
  throw ValidationError("unhandled outcome family");
}

struct ReplicationResult {
  int rep_index = 0;
  std::uint64_t seed = 0;
  // knockoff threshold
  double fdp = 0.0;
  double mfdp = 0.0;
  double power = 0.0;
  int n_selected = 0;
  // knockoff+ threshold (same W vector)
  double fdp_plus = 0.0;
  double mfdp_plus = 0.0;
  double power_plus = 0.0;
  int n_selected_plus = 0;
  // measured, not logged: the CSV log stays byte-stable across machines
  double wall_seconds = 0.0;
};

// Full in-memory record of one replication; the acceptance suites pool W
// vectors across replications through this.
struct ReplicationArtifacts {
  ReplicationResult result;
  KnockoffStats stats;
  SelectionResult selection;
  SelectionResult selection_plus;
};

namespace detail {

inline void score_into(const SelectionResult& sel, const std::vector<int>& truth, double q,
                       double& fdp, double& mfdp, double& power, int& n_selected) {
  n_selected = static_cast<int>(sel.selected.size());
  if (truth.empty()) {
    // Every selection is false; power is reported as 0 by convention.
    const double n = static_cast<double>(sel.selected.size());
    fdp = n / std::max(1.0, n);
    mfdp = n / (n + 1.0 / q);
    power = 0.0;
    return;
  }
  const SelectionScore score = score_selection(sel.selected, truth, q);
  fdp = score.fdp;
  mfdp = score.mfdp;
  power = score.power;
}

}  // namespace detail

inline ReplicationArtifacts run_replication_full(const ScenarioConfig& cfg, int rep_index) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const std::uint64_t rep_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep_index));

  const FeatureMatrix x =
      gen_features(cfg.N, cfg.p, cfg.design, cfg.rho, derive_seed(rep_seed, 1));
  const Outcome y =
      gen_outcome(x, cfg.outcome_family, cfg.link, cfg.true_k, derive_seed(rep_seed, 2));

  auto [sx, sparams] = standardize(x);
  const GaussianKnockoffSampler sampler = GaussianKnockoffSampler::fit(sx);
  const FeatureMatrix xk = sample_knockoffs(sampler, sx, derive_seed(rep_seed, 3));
  const FeatureMatrix combined = hcat(sx, xk);
  const Dataset d{combined, y};

  ReplicationArtifacts out;
  if (cfg.statistic == StatisticKind::lcd || cfg.statistic == StatisticKind::lsm) {
    const LassoModel lasso =
        fit_lasso(d, lasso_options_from(cfg.model, y.kind, derive_seed(rep_seed, 4)));
    out.stats = cfg.statistic == StatisticKind::lcd ? lcd_statistics(lasso, cfg.p)
                                                    : lsm_statistics(lasso, cfg.p);
  } else {
    const std::unique_ptr<PredictionModel> model =
        fit_configured_model(d, cfg.model, cfg.link, derive_seed(rep_seed, 4));
    CpfConfig cpf = cfg.cpf;
    cpf.seed = derive_seed(rep_seed, 5);
    if (y.kind == OutcomeKind::survival || y.kind == OutcomeKind::competing_risks) {
      if (cpf.time_grid.empty()) cpf.time_grid = default_time_grid(y.time);
      out.stats = cpf_statistics(cpf_importance_survival(*model, combined, cpf));
    } else {
      out.stats = cpf_statistics(cpf_importance(*model, combined, cpf));
    }
  }

  const std::vector<double> w(out.stats.w.data(), out.stats.w.data() + out.stats.w.size());
  out.selection = knockoff_threshold(w, cfg.q);
  out.selection_plus = knockoff_plus_threshold(w, cfg.q);

  std::vector<int> truth(static_cast<std::size_t>(cfg.true_k));
  for (int j = 0; j < cfg.true_k; ++j) truth[static_cast<std::size_t>(j)] = j;

  out.result.rep_index = rep_index;
  out.result.seed = rep_seed;
  detail::score_into(out.selection, truth, cfg.q, out.result.fdp, out.result.mfdp,
                     out.result.power, out.result.n_selected);
  detail::score_into(out.selection_plus, truth, cfg.q, out.result.fdp_plus, out.result.mfdp_plus,
                     out.result.power_plus, out.result.n_selected_plus);
  out.result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

inline ReplicationResult run_replication(const ScenarioConfig& cfg, int rep_index) {
  return run_replication_full(cfg, rep_index).result;
}

struct MetricSummary {
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

struct SimulationSummary {
  int n_replications = 0;
  MetricSummary fdp, mfdp, power;
  MetricSummary fdp_plus, mfdp_plus, power_plus;
  double mean_selected = 0.0;
  double mean_selected_plus = 0.0;
};

namespace detail {

inline MetricSummary summarize_metric(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  MetricSummary s;
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  s.q1 = quantile_sorted(values, 0.25);
  s.median = quantile_sorted(values, 0.5);
  s.q3 = quantile_sorted(values, 0.75);
  return s;
}

}  // namespace detail

/// Mean/median/quartiles of every score; order-independent.
inline SimulationSummary aggregate(const std::vector<ReplicationResult>& results) {
  if (results.empty()) throw EmptyResultsError("no replication results to aggregate");
  SimulationSummary s;
  s.n_replications = static_cast<int>(results.size());
  auto collect = [&](auto member) {
    std::vector<double> v;
    v.reserve(results.size());
    for (const auto& r : results) v.push_back(static_cast<double>(r.*member));
    return v;
  };
  s.fdp = detail::summarize_metric(collect(&ReplicationResult::fdp));
  s.mfdp = detail::summarize_metric(collect(&ReplicationResult::mfdp));
  s.power = detail::summarize_metric(collect(&ReplicationResult::power));
  s.fdp_plus = detail::summarize_metric(collect(&ReplicationResult::fdp_plus));
  s.mfdp_plus = detail::summarize_metric(collect(&ReplicationResult::mfdp_plus));
  s.power_plus = detail::summarize_metric(collect(&ReplicationResult::power_plus));
  double sel = 0.0, sel_plus = 0.0;
  for (const auto& r : results) {
    sel += r.n_selected;
    sel_plus += r.n_selected_plus;
  }
  s.mean_selected = sel / static_cast<double>(results.size());
  s.mean_selected_plus = sel_plus / static_cast<double>(results.size());
  return s;
}

inline nlohmann::json summary_to_json(const SimulationSummary& s) {
  auto metric = [](const MetricSummary& m) {
    return nlohmann::json{
        {"mean", m.mean}, {"median", m.median}, {"q1", m.q1}, {"q3", m.q3}};
  };
  nlohmann::json j;
  j["n_replications"] = s.n_replications;
  j["knockoff"] = {{"fdp", metric(s.fdp)},
                   {"mfdp", metric(s.mfdp)},
                   {"power", metric(s.power)},
                   {"mean_selected", s.mean_selected}};
  j["knockoff_plus"] = {{"fdp", metric(s.fdp_plus)},
                        {"mfdp", metric(s.mfdp_plus)},
                        {"power", metric(s.power_plus)},
                        {"mean_selected", s.mean_selected_plus}};
  return j;
}

}  // namespace cpfilter
