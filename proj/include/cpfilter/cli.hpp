#pragma once

// Workflow layer behind the command-line tool. Three entry points:
// cmd_filter runs the knockoff filter on a user CSV, cmd_simulate runs a
// replicated scenario with a resumable log, cmd_diagnose checks the
// knockoff sampler's exchangeability on the user's data. All referenced
// files are validated before any computation starts, every report embeds
// the config and seed that produced it, and reruns with the same inputs
// produce byte-identical files.

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cpfilter/cpf.hpp"
#include "cpfilter/csv.hpp"
#include "cpfilter/data.hpp"
#include "cpfilter/errors.hpp"
#include "cpfilter/knockoff.hpp"
#include "cpfilter/metrics.hpp"
#include "cpfilter/model_config.hpp"
#include "cpfilter/rng.hpp"
#include "cpfilter/selection.hpp"
#include "cpfilter/simulation.hpp"
#include "cpfilter/statistics.hpp"
#include "cpfilter/version.hpp"

namespace cpfilter {

struct RunConfig {
  std::string data_path;      // filter / diagnose input CSV
  std::string scenario_path;  // simulate input JSON
  OutcomeSpec outcome;        // populated from --outcome-col / --time-col / ...
  StatisticKind statistic = StatisticKind::cpf;
  std::string model_path;     // optional model config JSON
  double q = 0.2;
  bool plus = false;          // headline selection is knockoff+ instead of knockoff
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  int threads = 1;
  // simulate: flags given on the command line override the scenario file
  bool override_seed = false;
  bool override_q = false;
  bool override_statistic = false;
};

namespace detail {

inline void require_file(const std::string& path, const char* what) {
  if (path.empty()) {
    throw ValidationError(std::string(what) + " path is required");
  }
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw ValidationError(std::string(what) + " file '" + path + "' does not exist");
  }
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("invalid JSON in '" + path + "': " + e.what());
  }
  return j;
}

inline void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open '" + tmp.string() + "' for writing");
    out << content;
    if (!out) throw ComputeError("failed while writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline nlohmann::json json_number(double v) {
  // JSON has no infinities; a non-finite value serializes as null.
  if (std::isfinite(v)) return v;
  return nullptr;
}

inline nlohmann::json metrics_to_json(const FitMetrics& m) {
  nlohmann::json j;
  switch (m.kind) {
    case OutcomeKind::continuous:
      j["mse"] = json_number(m.mse);
      break;
    case OutcomeKind::binary:
      j["accuracy"] = json_number(m.accuracy);
      j["cross_entropy"] = json_number(m.cross_entropy);
      break;
    case OutcomeKind::survival:
    case OutcomeKind::competing_risks:
      j["c_index"] = json_number(m.c_index);
      break;
  }
  return j;
}

inline nlohmann::json selection_to_json(const SelectionResult& sel,
                                        const std::vector<std::string>& names) {
  nlohmann::json selected_names = nlohmann::json::array();
  nlohmann::json selected_indices = nlohmann::json::array();
  for (int idx : sel.selected) {
    selected_indices.push_back(idx);
    selected_names.push_back(names[static_cast<std::size_t>(idx)]);
  }
  return {{"kind", to_string(sel.kind)},
          {"q", sel.q},
          {"threshold", json_number(sel.threshold)},
          {"n_selected", sel.selected.size()},
          {"selected_indices", selected_indices},
          {"selected_names", selected_names}};
}

inline nlohmann::json data_summary_json(const Dataset& d, const std::string& path) {
  nlohmann::json j;
  j["path"] = path;
  j["n_rows"] = d.x.rows();
  j["n_features"] = d.x.cols();
  long n_binary = 0;
  for (auto k : d.x.column_kinds) n_binary += k == ColumnKind::binary ? 1 : 0;
  j["n_binary_features"] = n_binary;
  j["outcome_kind"] = to_string(d.y.kind);
  const auto n = static_cast<double>(d.x.rows());
  switch (d.y.kind) {
    case OutcomeKind::continuous:
      j["outcome_mean"] = d.y.y.mean();
      j["outcome_sd"] = sample_sd(d.y.y);
      break;
    case OutcomeKind::binary:
      j["positive_fraction"] = d.y.y.sum() / n;
      break;
    case OutcomeKind::survival:
      j["event_fraction"] = d.y.event.cast<double>().sum() / n;
      j["max_time"] = d.y.time.maxCoeff();
      break;
    case OutcomeKind::competing_risks: {
      int max_cause = 0;
      for (Eigen::Index i = 0; i < d.y.cause.size(); ++i) {
        max_cause = std::max(max_cause, d.y.cause[i]);
      }
      std::vector<long> counts(static_cast<std::size_t>(max_cause) + 1, 0);
      for (Eigen::Index i = 0; i < d.y.cause.size(); ++i) {
        ++counts[static_cast<std::size_t>(d.y.cause[i])];
      }
      j["cause_counts"] = counts;
      j["max_time"] = d.y.time.maxCoeff();
      break;
    }
  }
  return j;
}

inline nlohmann::json sampler_summary_json(const GaussianKnockoffSampler& sampler) {
  return {{"family", "second_order_gaussian_equicorrelated"},
          {"shrinkage_applied", sampler.shrinkage_applied()},
          {"shrinkage_amount", sampler.shrinkage_amount()},
          {"joint_min_eigenvalue", sampler.joint_min_eigenvalue()},
          {"s_min", sampler.s().minCoeff()},
          {"s_max", sampler.s().maxCoeff()}};
}

/// Rejects model kinds that cannot serve the outcome before any training.
inline void check_model_outcome(const ModelConfig& cfg, OutcomeKind kind) {
  const std::string& k = cfg.kind;
  if (k == "auto") return;
  if (k == "lasso") {
    lasso_family_for(kind);  // throws FamilyMismatch for competing risks
    return;
  }
  const bool scalar_model = k == "mlp";
  const bool cox_model = k == "cox_linear" || k == "cox_network";
  const bool cr_model = k == "discrete_cr";
  const bool scalar_outcome = kind == OutcomeKind::continuous || kind == OutcomeKind::binary;
  if (scalar_model && !scalar_outcome) {
    throw OutcomeMismatchError("model kind 'mlp' handles continuous or binary outcomes; the "
                               "data outcome is " + std::string(to_string(kind)));
  }
  if (cox_model && kind != OutcomeKind::survival) {
    throw OutcomeMismatchError("model kind '" + k + "' requires a survival outcome; the data "
                               "outcome is " + std::string(to_string(kind)));
  }
  if (cr_model && kind != OutcomeKind::competing_risks) {
    throw OutcomeMismatchError("model kind 'discrete_cr' requires a competing-risks outcome; "
                               "the data outcome is " + std::string(to_string(kind)));
  }
}

inline std::string int_field(long v) { return std::to_string(v); }

}  // namespace detail

/// Determines outcome kind from the column flags. A plain outcome column
/// whose values are all 0/1 is treated as binary.
inline OutcomeSpec resolve_outcome_spec(const RunConfig& cfg) {
  OutcomeSpec spec = cfg.outcome;
  const bool has_y = !spec.y_column.empty();
  const bool has_time = !spec.time_column.empty();
  const bool has_event = !spec.event_column.empty();
  const bool has_cause = !spec.cause_column.empty();
  if (has_cause && has_event) {
    throw ValidationError("give either an event column (survival) or a cause column "
                          "(competing risks), not both");
  }
  if (has_time) {
    if (has_y) throw ValidationError("an outcome column cannot be combined with a time column");
    if (has_cause) {
      spec.kind = OutcomeKind::competing_risks;
    } else if (has_event) {
      spec.kind = OutcomeKind::survival;
    } else {
      throw ValidationError("a time column needs an event column (survival) or a cause "
                            "column (competing risks)");
    }
    return spec;
  }
  if (has_event || has_cause) {
    throw ValidationError("event and cause columns require a time column");
  }
  if (!has_y) throw ValidationError("no outcome columns given (--outcome-col or --time-col)");
  spec.kind = OutcomeKind::continuous;  // promoted to binary after loading if all 0/1
  return spec;
}

inline nlohmann::json cmd_filter(const RunConfig& cfg) {
  detail::require_file(cfg.data_path, "data");
  if (!(cfg.q > 0.0 && cfg.q < 1.0)) throw InvalidQError("q must lie in (0,1)");
  ModelConfig model_cfg;
  if (!cfg.model_path.empty()) {
    detail::require_file(cfg.model_path, "model config");
    model_cfg = model_config_from_json(detail::read_json_file(cfg.model_path));
  }

  OutcomeSpec spec = resolve_outcome_spec(cfg);
  Dataset d = load_csv(cfg.data_path, spec);
  if (spec.kind == OutcomeKind::continuous) {
    bool all_01 = true;
    for (Eigen::Index i = 0; i < d.y.y.size() && all_01; ++i) {
      all_01 = d.y.y[i] == 0.0 || d.y.y[i] == 1.0;
    }
    if (all_01) d.y = Outcome::binary(d.y.y);
  }
  detail::check_model_outcome(model_cfg, d.y.kind);
  if (cfg.statistic == StatisticKind::lcd || cfg.statistic == StatisticKind::lsm) {
    lasso_family_for(d.y.kind);  // competing risks has no lasso; fail before sampling
  }

  // User data gets the richer default architecture; there is no link-kind
  // hint for measured features.
  const LinkKind link = LinkKind::nonlinear;
  const ModelConfig resolved = resolve_model_config(model_cfg, d.y.kind, link);

  auto [sx, sparams] = standardize(d.x);
  const GaussianKnockoffSampler sampler = GaussianKnockoffSampler::fit(sx);
  const FeatureMatrix xk = sample_knockoffs(sampler, sx, derive_seed(cfg.seed, 1));
  const Dataset dd{hcat(sx, xk), d.y};

  // The statistic model trains on a split so the report can carry held-out
  // metrics; W is computed from that same model.
  const auto [train, test] = train_test_split(dd, 0.8, derive_seed(cfg.seed, 2));

  KnockoffStats stats;
  FitMetrics train_metrics, test_metrics;
  nlohmann::json model_json;
  const int p = static_cast<int>(d.x.cols());
  if (cfg.statistic == StatisticKind::lcd || cfg.statistic == StatisticKind::lsm) {
    ModelConfig lasso_cfg = model_cfg;
    lasso_cfg.kind = "lasso";
    const LassoModel lasso =
        fit_lasso(train, lasso_options_from(lasso_cfg, d.y.kind, derive_seed(cfg.seed, 3)));
    stats = cfg.statistic == StatisticKind::lcd ? lcd_statistics(lasso, p)
                                                : lsm_statistics(lasso, p);
    train_metrics = fit_metrics(lasso, train);
    test_metrics = fit_metrics(lasso, test);
    model_json = model_config_to_json(lasso_cfg);
    model_json["chosen_lambda"] = lasso.lambda;
  } else {
    const std::unique_ptr<PredictionModel> model =
        fit_configured_model(train, model_cfg, link, derive_seed(cfg.seed, 3));
    CpfConfig cpf;
    cpf.seed = derive_seed(cfg.seed, 4);
    if (d.y.kind == OutcomeKind::survival || d.y.kind == OutcomeKind::competing_risks) {
      cpf.time_grid = default_time_grid(d.y.time);
      stats = cpf_statistics(cpf_importance_survival(*model, dd.x, cpf));
    } else {
      stats = cpf_statistics(cpf_importance(*model, dd.x, cpf));
    }
    train_metrics = fit_metrics(*model, train);
    test_metrics = fit_metrics(*model, test);
    model_json = model_config_to_json(resolved);
  }

  const std::vector<double> w(stats.w.data(), stats.w.data() + stats.w.size());
  const SelectionResult sel = knockoff_threshold(w, cfg.q);
  const SelectionResult sel_plus = knockoff_plus_threshold(w, cfg.q);

  nlohmann::json report;
  report["schema_version"] = kSchemaVersion;
  report["artifact_version"] = kVersion;
  report["command"] = "filter";
  report["seed"] = cfg.seed;
  report["q"] = cfg.q;
  report["statistic"] = to_string(cfg.statistic);
  report["headline_selection"] = cfg.plus ? "knockoff_plus" : "knockoff";
  report["data"] = detail::data_summary_json(d, cfg.data_path);
  report["sampler"] = detail::sampler_summary_json(sampler);
  report["model"] = {{"config", model_json},
                     {"train_metrics", detail::metrics_to_json(train_metrics)},
                     {"test_metrics", detail::metrics_to_json(test_metrics)}};
  nlohmann::json w_table = nlohmann::json::array();
  for (int j = 0; j < p; ++j) {
    w_table.push_back({{"feature", d.x.column_names[static_cast<std::size_t>(j)]},
                       {"U_original", stats.z_original[j]},
                       {"U_knockoff", stats.z_knockoff[j]},
                       {"W", stats.w[j]}});
  }
  report["w"] = w_table;
  report["selection"] = detail::selection_to_json(sel, d.x.column_names);
  report["selection_plus"] = detail::selection_to_json(sel_plus, d.x.column_names);

  std::filesystem::create_directories(cfg.out_dir);
  const std::filesystem::path out(cfg.out_dir);
  detail::atomic_write_text(out / "report.json", report.dump(2) + "\n");
  write_w_csv(out / "w_stats.csv", d.x.column_names, stats);
  return report;
}

namespace detail {

inline constexpr const char* kRepLogHeader =
    "rep_index,seed,fdp,mfdp,power,n_selected,fdp_plus,mfdp_plus,power_plus,n_selected_plus";

inline std::string rep_log_row(const ReplicationResult& r) {
  std::string row = int_field(r.rep_index);
  row += ',';
  row += std::to_string(r.seed);
  for (double v : {r.fdp, r.mfdp, r.power}) {
    row += ',';
    row += format_double(v);
  }
  row += ',';
  row += int_field(r.n_selected);
  for (double v : {r.fdp_plus, r.mfdp_plus, r.power_plus}) {
    row += ',';
    row += format_double(v);
  }
  row += ',';
  row += int_field(r.n_selected_plus);
  return row;
}

inline std::vector<ReplicationResult> parse_rep_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open resume log '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) return {};
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRepLogHeader) {
    throw ValidationError("resume log '" + path.string() +
                          "' has an unexpected header; delete it or use another --out "
                          "directory");
  }
  std::vector<ReplicationResult> rows;
  long line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 10) {
      throw ValidationError("resume log line " + std::to_string(line_number) +
                            ": expected 10 cells, found " + std::to_string(cells.size()));
    }
    try {
      ReplicationResult r;
      r.rep_index = std::stoi(cells[0]);
      r.seed = std::stoull(cells[1]);
      r.fdp = std::stod(cells[2]);
      r.mfdp = std::stod(cells[3]);
      r.power = std::stod(cells[4]);
      r.n_selected = std::stoi(cells[5]);
      r.fdp_plus = std::stod(cells[6]);
      r.mfdp_plus = std::stod(cells[7]);
      r.power_plus = std::stod(cells[8]);
      r.n_selected_plus = std::stoi(cells[9]);
      rows.push_back(r);
    } catch (const std::exception&) {
      throw ValidationError("resume log line " + std::to_string(line_number) +
                            ": unparseable cell");
    }
  }
  return rows;
}

}  // namespace detail

inline nlohmann::json cmd_simulate(const RunConfig& cfg) {
  detail::require_file(cfg.scenario_path, "scenario");
  ScenarioConfig scfg = scenario_from_json(detail::read_json_file(cfg.scenario_path));
  if (cfg.override_seed) scfg.seed = cfg.seed;
  if (cfg.override_q) scfg.q = cfg.q;
  if (cfg.override_statistic) scfg.statistic = cfg.statistic;
  scfg.validate();

  std::filesystem::create_directories(cfg.out_dir);
  const std::filesystem::path out(cfg.out_dir);
  const std::filesystem::path log_path = out / "replications.csv";

  // Resume: rows whose seed matches this scenario's derived rep seed are
  // reused; anything else (stale config, stray lines) is dropped by an
  // atomic rewrite so the log never holds mixed runs.
  std::map<int, ReplicationResult> completed;
  if (std::filesystem::exists(log_path)) {
    std::size_t total_rows = 0;
    for (const auto& r : detail::parse_rep_log(log_path)) {
      ++total_rows;
      if (r.rep_index >= 0 && r.rep_index < scfg.replications &&
          r.seed == derive_seed(scfg.seed, static_cast<std::uint64_t>(r.rep_index))) {
        completed[r.rep_index] = r;
      }
    }
    if (completed.size() != total_rows) {
      std::string content = std::string(detail::kRepLogHeader) + "\n";
      for (const auto& [idx, r] : completed) content += detail::rep_log_row(r) + "\n";
      detail::atomic_write_text(log_path, content);
    }
  } else {
    detail::atomic_write_text(log_path, std::string(detail::kRepLogHeader) + "\n");
  }

  std::vector<int> missing;
  for (int r = 0; r < scfg.replications; ++r) {
    if (completed.find(r) == completed.end()) missing.push_back(r);
  }

  if (!missing.empty()) {
    std::ofstream log(log_path, std::ios::app);
    if (!log) throw ValidationError("cannot append to '" + log_path.string() + "'");
    std::mutex mu;
    std::map<std::size_t, ReplicationResult> pending;  // position in missing -> result
    std::size_t next_release = 0;
    std::atomic<std::size_t> next_job{0};
    std::exception_ptr first_error;

    auto worker = [&]() {
      for (;;) {
        const std::size_t i = next_job.fetch_add(1);
        if (i >= missing.size()) return;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (first_error) return;
        }
        try {
          const ReplicationResult res = run_replication(scfg, missing[i]);
          std::lock_guard<std::mutex> lock(mu);
          pending[i] = res;
          // Release in replication order so an interrupted log is always a
          // prefix of the full run.
          while (!pending.empty() && pending.begin()->first == next_release) {
            const ReplicationResult& head = pending.begin()->second;
            log << detail::rep_log_row(head) << '\n';
            log.flush();
            completed[head.rep_index] = head;
            pending.erase(pending.begin());
            ++next_release;
          }
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };

    const std::size_t n_threads =
        std::min<std::size_t>(std::max(cfg.threads, 1), missing.size());
    if (n_threads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      pool.reserve(n_threads);
      for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
  }

  std::vector<ReplicationResult> results;
  results.reserve(completed.size());
  for (const auto& [idx, r] : completed) results.push_back(r);
  const SimulationSummary agg = aggregate(results);

  nlohmann::json summary;
  summary["schema_version"] = kSchemaVersion;
  summary["artifact_version"] = kVersion;
  summary["command"] = "simulate";
  summary["scenario"] = scenario_to_json(scfg);
  summary["results"] = summary_to_json(agg);
  detail::atomic_write_text(out / "summary.json", summary.dump(2) + "\n");

  // Box-plot-ready long format: one row per replication and metric.
  std::string box = "scenario,statistic,metric,value\n";
  const std::string prefix = scfg.name + "," + to_string(scfg.statistic) + ",";
  for (const auto& r : results) {
    box += prefix + "fdp," + detail::format_double(r.fdp) + "\n";
    box += prefix + "mfdp," + detail::format_double(r.mfdp) + "\n";
    box += prefix + "power," + detail::format_double(r.power) + "\n";
    box += prefix + "fdp_plus," + detail::format_double(r.fdp_plus) + "\n";
    box += prefix + "mfdp_plus," + detail::format_double(r.mfdp_plus) + "\n";
    box += prefix + "power_plus," + detail::format_double(r.power_plus) + "\n";
  }
  detail::atomic_write_text(out / "boxplot.csv", box);
  return summary;
}

inline nlohmann::json cmd_diagnose(const RunConfig& cfg) {
  detail::require_file(cfg.data_path, "data");
  FeatureMatrix x;
  const bool has_outcome = !cfg.outcome.y_column.empty() || !cfg.outcome.time_column.empty();
  if (has_outcome) {
    x = load_csv(cfg.data_path, resolve_outcome_spec(cfg)).x;
  } else {
    x = load_feature_csv(cfg.data_path);
  }

  auto [sx, sparams] = standardize(x);
  const GaussianKnockoffSampler sampler = GaussianKnockoffSampler::fit(sx);
  const FeatureMatrix xk = sample_knockoffs(sampler, sx, derive_seed(cfg.seed, 1));
  const ExchangeabilityReport rep = exchangeability_diagnostic(sx, xk);

  // Pass bound: five standard errors of a covariance-entry estimate from
  // N standardized samples (~sqrt(2/N) each). At N=20000 this is 0.05,
  // the calibration point of the generator's Monte-Carlo check.
  const double n = static_cast<double>(x.rows());
  const double threshold = 5.0 * std::sqrt(2.0 / n);
  const double worst =
      std::max({rep.max_cov_diff, rep.max_cross_offdiag_diff, rep.max_mean_diff});
  const bool pass = worst < threshold;

  nlohmann::json warnings = nlohmann::json::array();
  if (x.cols() > x.rows()) {
    warnings.push_back("p exceeds N: the estimated covariance is singular and was "
                       "shrunk; knockoff quality degrades in this regime");
  } else if (sampler.shrinkage_applied()) {
    warnings.push_back("covariance shrinkage was applied to reach positive definiteness");
  }

  nlohmann::json report;
  report["schema_version"] = kSchemaVersion;
  report["artifact_version"] = kVersion;
  report["command"] = "diagnose";
  report["seed"] = cfg.seed;
  report["data"] = {{"path", cfg.data_path},
                    {"n_rows", x.rows()},
                    {"n_features", x.cols()}};
  report["sampler"] = detail::sampler_summary_json(sampler);
  report["exchangeability"] = {{"max_cov_diff", rep.max_cov_diff},
                               {"max_cross_offdiag_diff", rep.max_cross_offdiag_diff},
                               {"max_mean_diff", rep.max_mean_diff},
                               {"estimated_s_min", rep.estimated_s.minCoeff()},
                               {"estimated_s_max", rep.estimated_s.maxCoeff()},
                               {"threshold", threshold},
                               {"threshold_rule", "5*sqrt(2/N)"},
                               {"verdict", pass ? "pass" : "fail"}};
  report["warnings"] = warnings;

  std::filesystem::create_directories(cfg.out_dir);
  detail::atomic_write_text(std::filesystem::path(cfg.out_dir) / "diagnose.json",
                            report.dump(2) + "\n");
  return report;
}

}  // namespace cpfilter
