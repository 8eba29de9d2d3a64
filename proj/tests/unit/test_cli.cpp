#include <catch2/catch_amalgamated.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cpfilter/cli.hpp"
#include "cpfilter/rng.hpp"

namespace fs = std::filesystem;
using namespace cpfilter;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cpfilter_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << content;
}

// Regression CSV where y = 3*(x1 + x2 + x3) + noise and x4..xp are inert.
fs::path write_planted_csv(const fs::path& dir, int n, int p, std::uint64_t seed) {
  Rng rng(seed, 0);
  std::ostringstream ss;
  ss.precision(17);
  for (int j = 0; j < p; ++j) ss << "x" << (j + 1) << ",";
  ss << "y\n";
  for (int i = 0; i < n; ++i) {
    double signal = 0.0;
    for (int j = 0; j < p; ++j) {
      const double v = rng.normal();
      if (j < 3) signal += v;
      ss << v << ",";
    }
    ss << 3.0 * signal + rng.normal() << "\n";
  }
  const fs::path path = dir / "planted.csv";
  write_text(path, ss.str());
  return path;
}

fs::path write_noise_csv(const fs::path& dir, const std::string& name, int n, int p,
                         std::uint64_t seed, bool with_y) {
  Rng rng(seed, 0);
  std::ostringstream ss;
  ss.precision(17);
  for (int j = 0; j < p; ++j) {
    ss << "x" << (j + 1);
    if (j + 1 < p || with_y) ss << ",";
  }
  if (with_y) ss << "y";
  ss << "\n";
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) {
      ss << rng.normal();
      if (j + 1 < p || with_y) ss << ",";
    }
    if (with_y) ss << rng.normal();
    ss << "\n";
  }
  const fs::path path = dir / name;
  write_text(path, ss.str());
  return path;
}

fs::path write_model_json(const fs::path& dir, const nlohmann::json& j) {
  const fs::path path = dir / "model.json";
  write_text(path, j.dump(2) + "\n");
  return path;
}

}  // namespace

TEST_CASE("filter on a planted regression finds the signal and reruns byte-identically") {
  const fs::path dir = fresh_dir("filter");
  const fs::path data = write_planted_csv(dir, 400, 8, 401);
  const fs::path model = write_model_json(dir, {{"kind", "lasso"}, {"lambda", 0.05}});

  RunConfig cfg;
  cfg.data_path = data.string();
  cfg.outcome.y_column = "y";
  cfg.statistic = StatisticKind::lcd;
  cfg.model_path = model.string();
  cfg.q = 0.2;
  cfg.seed = 11;
  cfg.out_dir = (dir / "a").string();
  const nlohmann::json rep = cmd_filter(cfg);

  REQUIRE(rep.at("command") == "filter");
  REQUIRE(rep.at("statistic") == "lcd");
  REQUIRE(rep.at("headline_selection") == "knockoff");
  REQUIRE(rep.at("seed") == 11);
  REQUIRE(rep.at("data").at("n_rows") == 400);
  REQUIRE(rep.at("data").at("n_features") == 8);
  REQUIRE(rep.at("data").at("outcome_kind") == "continuous");
  REQUIRE(rep.at("model").at("config").at("chosen_lambda") == 0.05);
  REQUIRE(rep.at("model").at("test_metrics").contains("mse"));
  REQUIRE(rep.at("w").size() == 8);
  REQUIRE(rep.at("w").at(0).at("feature") == "x1");

  const auto selected = rep.at("selection").at("selected_names").get<std::vector<std::string>>();
  for (const std::string& name : {"x1", "x2", "x3"}) {
    INFO("expected " << name << " in the selection");
    REQUIRE(std::find(selected.begin(), selected.end(), name) != selected.end());
  }
  // Knockoff+ can only be stricter.
  REQUIRE(rep.at("selection_plus").at("n_selected").get<int>() <=
          rep.at("selection").at("n_selected").get<int>());

  // The report file is the returned document, serialized once.
  REQUIRE(read_bytes(dir / "a" / "report.json") == rep.dump(2) + "\n");

  cfg.out_dir = (dir / "b").string();
  cmd_filter(cfg);
  REQUIRE(read_bytes(dir / "a" / "report.json") == read_bytes(dir / "b" / "report.json"));
  REQUIRE(read_bytes(dir / "a" / "w_stats.csv") == read_bytes(dir / "b" / "w_stats.csv"));
}

TEST_CASE("an all-0/1 outcome column is promoted to binary") {
  const fs::path dir = fresh_dir("binary");
  Rng rng(77, 0);
  std::ostringstream ss;
  ss.precision(17);
  ss << "x1,x2,x3,x4,y\n";
  for (int i = 0; i < 200; ++i) {
    double x1 = 0.0;
    for (int j = 0; j < 4; ++j) {
      const double v = rng.normal();
      if (j == 0) x1 = v;
      ss << v << ",";
    }
    ss << (x1 + 0.5 * rng.normal() > 0.0 ? 1 : 0) << "\n";
  }
  const fs::path data = dir / "binary.csv";
  write_text(data, ss.str());

  RunConfig cfg;
  cfg.data_path = data.string();
  cfg.outcome.y_column = "y";
  cfg.statistic = StatisticKind::lcd;
  cfg.model_path = write_model_json(dir, {{"kind", "lasso"}, {"lambda", 0.1}}).string();
  cfg.seed = 3;
  cfg.out_dir = (dir / "out").string();
  const nlohmann::json rep = cmd_filter(cfg);

  REQUIRE(rep.at("data").at("outcome_kind") == "binary");
  REQUIRE(rep.at("data").contains("positive_fraction"));
  REQUIRE(rep.at("model").at("train_metrics").contains("accuracy"));
  REQUIRE(rep.at("model").at("train_metrics").contains("cross_entropy"));
}

TEST_CASE("knockoff+ with six features cannot select anything at q = 0.1") {
  // (1 + #negatives) / #positives is at least 1/6 > 0.1 whatever W comes out,
  // so the plus threshold is infinite by arithmetic, not by chance.
  const fs::path dir = fresh_dir("plus_empty");
  const fs::path data = write_noise_csv(dir, "noise.csv", 150, 6, 909, true);

  RunConfig cfg;
  cfg.data_path = data.string();
  cfg.outcome.y_column = "y";
  cfg.statistic = StatisticKind::lcd;
  cfg.model_path = write_model_json(dir, {{"kind", "lasso"}, {"lambda", 0.05}}).string();
  cfg.q = 0.1;
  cfg.plus = true;
  cfg.seed = 5;
  cfg.out_dir = (dir / "out").string();
  const nlohmann::json rep = cmd_filter(cfg);

  REQUIRE(rep.at("headline_selection") == "knockoff_plus");
  REQUIRE(rep.at("selection_plus").at("n_selected") == 0);
  REQUIRE(rep.at("selection_plus").at("selected_indices").empty());
  REQUIRE(rep.at("selection_plus").at("threshold").is_null());
}

TEST_CASE("filter fails fast on model/outcome and statistic/outcome mismatches") {
  const fs::path dir = fresh_dir("mismatch");

  Rng rng(13, 0);
  std::ostringstream surv;
  surv.precision(17);
  surv << "x1,x2,x3,time,event\n";
  for (int i = 0; i < 50; ++i) {
    for (int j = 0; j < 3; ++j) surv << rng.normal() << ",";
    surv << std::abs(rng.normal()) + 0.1 << "," << i % 2 << "\n";
  }
  const fs::path surv_path = dir / "surv.csv";
  write_text(surv_path, surv.str());

  RunConfig scalar_on_survival;
  scalar_on_survival.data_path = surv_path.string();
  scalar_on_survival.outcome.time_column = "time";
  scalar_on_survival.outcome.event_column = "event";
  scalar_on_survival.model_path = write_model_json(dir, {{"kind", "mlp"}}).string();
  scalar_on_survival.out_dir = (dir / "out").string();
  REQUIRE_THROWS_AS(cmd_filter(scalar_on_survival), OutcomeMismatchError);

  std::ostringstream cr;
  cr.precision(17);
  cr << "x1,x2,x3,time,cause\n";
  for (int i = 0; i < 50; ++i) {
    for (int j = 0; j < 3; ++j) cr << rng.normal() << ",";
    cr << std::abs(rng.normal()) + 0.1 << "," << i % 3 << "\n";
  }
  const fs::path cr_path = dir / "cr.csv";
  write_text(cr_path, cr.str());

  RunConfig lasso_on_cr;
  lasso_on_cr.data_path = cr_path.string();
  lasso_on_cr.outcome.time_column = "time";
  lasso_on_cr.outcome.cause_column = "cause";
  lasso_on_cr.statistic = StatisticKind::lcd;
  lasso_on_cr.out_dir = (dir / "out").string();
  REQUIRE_THROWS_AS(cmd_filter(lasso_on_cr), FamilyMismatchError);
}

TEST_CASE("outcome column flags resolve to the right family or are rejected") {
  RunConfig cfg;

  cfg.outcome = {};
  cfg.outcome.y_column = "y";
  REQUIRE(resolve_outcome_spec(cfg).kind == OutcomeKind::continuous);

  cfg.outcome = {};
  cfg.outcome.time_column = "t";
  cfg.outcome.event_column = "e";
  REQUIRE(resolve_outcome_spec(cfg).kind == OutcomeKind::survival);

  cfg.outcome = {};
  cfg.outcome.time_column = "t";
  cfg.outcome.cause_column = "c";
  REQUIRE(resolve_outcome_spec(cfg).kind == OutcomeKind::competing_risks);

  cfg.outcome = {};
  cfg.outcome.time_column = "t";
  cfg.outcome.event_column = "e";
  cfg.outcome.cause_column = "c";
  REQUIRE_THROWS_AS(resolve_outcome_spec(cfg), ValidationError);

  cfg.outcome = {};
  cfg.outcome.y_column = "y";
  cfg.outcome.time_column = "t";
  cfg.outcome.event_column = "e";
  REQUIRE_THROWS_AS(resolve_outcome_spec(cfg), ValidationError);

  cfg.outcome = {};
  cfg.outcome.time_column = "t";
  REQUIRE_THROWS_AS(resolve_outcome_spec(cfg), ValidationError);

  cfg.outcome = {};
  cfg.outcome.event_column = "e";
  REQUIRE_THROWS_AS(resolve_outcome_spec(cfg), ValidationError);

  cfg.outcome = {};
  cfg.outcome.cause_column = "c";
  REQUIRE_THROWS_AS(resolve_outcome_spec(cfg), ValidationError);

  cfg.outcome = {};
  REQUIRE_THROWS_WITH(resolve_outcome_spec(cfg),
                      Catch::Matchers::ContainsSubstring("no outcome columns"));
}

TEST_CASE("filter validates its inputs before any computation") {
  const fs::path dir = fresh_dir("inputs");

  RunConfig missing;
  missing.data_path = (dir / "nope.csv").string();
  missing.outcome.y_column = "y";
  REQUIRE_THROWS_WITH(cmd_filter(missing), Catch::Matchers::ContainsSubstring("does not exist"));

  const fs::path data = write_noise_csv(dir, "ok.csv", 30, 3, 1, true);
  RunConfig bad_q;
  bad_q.data_path = data.string();
  bad_q.outcome.y_column = "y";
  bad_q.q = 0.0;
  REQUIRE_THROWS_AS(cmd_filter(bad_q), InvalidQError);
  bad_q.q = 1.0;
  REQUIRE_THROWS_AS(cmd_filter(bad_q), InvalidQError);

  RunConfig bad_model;
  bad_model.data_path = data.string();
  bad_model.outcome.y_column = "y";
  bad_model.model_path = (dir / "missing_model.json").string();
  REQUIRE_THROWS_WITH(cmd_filter(bad_model),
                      Catch::Matchers::ContainsSubstring("model config"));
}

TEST_CASE("simulate runs are deterministic, resumable, and internally consistent") {
  const fs::path dir = fresh_dir("simulate");
  nlohmann::json scenario = {
      {"name", "cli-smoke"},
      {"outcome_family", "continuous"},
      {"link", "linear"},
      {"p", 10},
      {"N", 150},
      {"true_k", 2},
      {"feature_design", "iid_normal"},
      {"q", 0.2},
      {"statistic", "lcd"},
      {"selection_kind", "knockoff"},
      {"model", {{"kind", "lasso"}, {"lambda", 0.05}}},
      {"replications", 3},
      {"seed", 77},
  };
  const fs::path scen_path = dir / "scenario.json";
  write_text(scen_path, scenario.dump(2) + "\n");

  RunConfig cfg;
  cfg.scenario_path = scen_path.string();
  cfg.out_dir = (dir / "a").string();
  const nlohmann::json summary = cmd_simulate(cfg);

  REQUIRE(summary.at("command") == "simulate");
  REQUIRE(summary.at("scenario").at("name") == "cli-smoke");
  REQUIRE(summary.at("results").at("n_replications") == 3);

  cfg.out_dir = (dir / "b").string();
  cmd_simulate(cfg);
  for (const char* name : {"summary.json", "replications.csv", "boxplot.csv"}) {
    INFO(name);
    REQUIRE(read_bytes(dir / "a" / name) == read_bytes(dir / "b" / name));
  }

  // Resume: keep the header and first row, rerun, and get the same bytes back.
  {
    std::istringstream full(read_bytes(dir / "a" / "replications.csv"));
    std::string header, first;
    REQUIRE(std::getline(full, header));
    REQUIRE(std::getline(full, first));
    write_text(dir / "a" / "replications.csv", header + "\n" + first + "\n");
  }
  cfg.out_dir = (dir / "a").string();
  cmd_simulate(cfg);
  for (const char* name : {"summary.json", "replications.csv", "boxplot.csv"}) {
    INFO(name);
    REQUIRE(read_bytes(dir / "a" / name) == read_bytes(dir / "b" / name));
  }

  // The summary is the aggregate of exactly the logged rows.
  const std::vector<ReplicationResult> rows = detail::parse_rep_log(dir / "a" / "replications.csv");
  REQUIRE(rows.size() == 3);
  const SimulationSummary agg = aggregate(rows);
  REQUIRE(summary.at("results").at("knockoff").at("fdp").at("mean").get<double>() ==
          Catch::Approx(agg.fdp.mean).margin(1e-15));
  REQUIRE(summary.at("results").at("knockoff").at("power").at("mean").get<double>() ==
          Catch::Approx(agg.power.mean).margin(1e-15));

  // A row from a different configuration (wrong derived seed) is discarded
  // rather than trusted.
  std::istringstream full(read_bytes(dir / "b" / "replications.csv"));
  std::string header, first;
  std::getline(full, header);
  std::getline(full, first);
  std::string forged = first;
  const std::size_t comma = forged.find(',');
  forged = forged.substr(0, comma + 1) + "999" + forged.substr(forged.find(',', comma + 1));
  write_text(dir / "a" / "replications.csv", header + "\n" + forged + "\n");
  cmd_simulate(cfg);
  REQUIRE(read_bytes(dir / "a" / "replications.csv") == read_bytes(dir / "b" / "replications.csv"));

  // A log with a foreign header is an error, not silently replaced.
  write_text(dir / "a" / "replications.csv", "something,else\n");
  REQUIRE_THROWS_WITH(cmd_simulate(cfg), Catch::Matchers::ContainsSubstring("header"));
}

TEST_CASE("simulate applies command-line overrides only when flagged") {
  const fs::path dir = fresh_dir("override");
  nlohmann::json scenario = {
      {"name", "override"},
      {"outcome_family", "continuous"},
      {"link", "linear"},
      {"p", 8},
      {"N", 120},
      {"true_k", 2},
      {"feature_design", "iid_normal"},
      {"q", 0.2},
      {"statistic", "lcd"},
      {"model", {{"kind", "lasso"}, {"lambda", 0.05}}},
      {"replications", 2},
      {"seed", 4},
  };
  const fs::path scen_path = dir / "scenario.json";
  write_text(scen_path, scenario.dump(2) + "\n");

  RunConfig cfg;
  cfg.scenario_path = scen_path.string();
  cfg.q = 0.5;  // ignored without the override flag
  cfg.out_dir = (dir / "plain").string();
  REQUIRE(cmd_simulate(cfg).at("scenario").at("q") == 0.2);

  cfg.override_q = true;
  cfg.out_dir = (dir / "overridden").string();
  REQUIRE(cmd_simulate(cfg).at("scenario").at("q") == 0.5);
}

TEST_CASE("diagnose reports exchangeability and flags degenerate inputs") {
  const fs::path dir = fresh_dir("diagnose");
  const fs::path data = write_noise_csv(dir, "features.csv", 500, 4, 31, false);

  RunConfig cfg;
  cfg.data_path = data.string();
  cfg.seed = 9;
  cfg.out_dir = (dir / "out").string();
  const nlohmann::json rep = cmd_diagnose(cfg);

  REQUIRE(rep.at("command") == "diagnose");
  REQUIRE(rep.at("data").at("n_rows") == 500);
  REQUIRE(rep.at("data").at("n_features") == 4);
  REQUIRE(rep.at("exchangeability").at("threshold").get<double>() ==
          Catch::Approx(5.0 * std::sqrt(2.0 / 500.0)).margin(1e-15));
  REQUIRE(rep.at("exchangeability").at("verdict") == "pass");
  REQUIRE(rep.at("warnings").empty());
  REQUIRE(read_bytes(dir / "out" / "diagnose.json") == rep.dump(2) + "\n");

  // With an outcome column the feature count excludes it.
  const fs::path with_y = write_noise_csv(dir, "with_y.csv", 200, 4, 32, true);
  RunConfig ycfg;
  ycfg.data_path = with_y.string();
  ycfg.outcome.y_column = "y";
  ycfg.out_dir = (dir / "out_y").string();
  REQUIRE(cmd_diagnose(ycfg).at("data").at("n_features") == 4);

  // A duplicated column makes the covariance singular; shrinkage is reported.
  {
    Rng rng(33, 0);
    std::ostringstream ss;
    ss.precision(17);
    ss << "x1,x2,x3,x4\n";
    for (int i = 0; i < 300; ++i) {
      const double a = rng.normal();
      ss << a << "," << rng.normal() << "," << rng.normal() << "," << a << "\n";
    }
    write_text(dir / "dup.csv", ss.str());
  }
  RunConfig dup_cfg;
  dup_cfg.data_path = (dir / "dup.csv").string();
  dup_cfg.out_dir = (dir / "out_dup").string();
  const nlohmann::json dup_rep = cmd_diagnose(dup_cfg);
  REQUIRE_FALSE(dup_rep.at("warnings").empty());
  REQUIRE(dup_rep.at("sampler").at("shrinkage_applied") == true);

  // A constant column cannot be standardized.
  {
    std::ostringstream ss;
    ss << "x1,x2\n";
    Rng rng(34, 0);
    for (int i = 0; i < 50; ++i) ss << rng.normal() << ",2.5\n";
    write_text(dir / "const.csv", ss.str());
  }
  RunConfig const_cfg;
  const_cfg.data_path = (dir / "const.csv").string();
  const_cfg.out_dir = (dir / "out_const").string();
  REQUIRE_THROWS_AS(cmd_diagnose(const_cfg), ConstantColumnError);
}
