// Command-line front end. Subcommands: filter (knockoff selection on a
// CSV), simulate (replicated synthetic scenarios), diagnose (sampler
// exchangeability checks). Exit codes: 0 success, 1 invalid input or
// config, 2 numerical/runtime failure.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "cpfilter/cpfilter.hpp"

namespace {

void print_selection(const nlohmann::json& sel, const char* label) {
  std::cout << label << " (q=" << sel.at("q").get<double>()
            << "): " << sel.at("n_selected").get<std::size_t>() << " feature(s)";
  const auto& names = sel.at("selected_names");
  if (!names.empty()) {
    std::cout << ":";
    for (const auto& name : names) std::cout << ' ' << name.get<std::string>();
  }
  std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knockoff variable selection with conditional prediction importance"};
  app.require_subcommand(1);

  cpfilter::RunConfig cfg;
  std::string statistic = "cpf";

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", cfg.seed, "master seed; all randomness derives from it");
    sub->add_option("--out", cfg.out_dir, "output directory")->capture_default_str();
    sub->add_option("--threads", cfg.threads, "worker threads for replications")
        ->capture_default_str();
  };
  auto add_outcome = [&](CLI::App* sub) {
    sub->add_option("--outcome-col", cfg.outcome.y_column,
                    "outcome column (binary if all values are 0/1)");
    sub->add_option("--time-col", cfg.outcome.time_column, "observed time column");
    sub->add_option("--event-col", cfg.outcome.event_column,
                    "event indicator column (survival)");
    sub->add_option("--cause-col", cfg.outcome.cause_column,
                    "cause code column, 0 = censored (competing risks)");
  };

  CLI::App* filter = app.add_subcommand("filter", "run the knockoff filter on a CSV");
  filter->add_option("--data", cfg.data_path, "input CSV")->required();
  add_outcome(filter);
  filter->add_option("--statistic", statistic, "importance statistic")
      ->check(CLI::IsMember({"cpf", "lcd", "lsm"}))
      ->capture_default_str();
  filter->add_option("--model", cfg.model_path, "model config JSON");
  filter->add_option("--q", cfg.q, "target false discovery rate")->capture_default_str();
  filter->add_flag("--plus", cfg.plus, "make knockoff+ the headline selection");
  add_common(filter);

  CLI::App* simulate = app.add_subcommand("simulate", "run a replicated scenario");
  simulate->add_option("--scenario", cfg.scenario_path, "scenario config JSON")->required();
  CLI::Option* sim_stat = simulate->add_option("--statistic", statistic,
                                               "override the scenario's statistic")
                              ->check(CLI::IsMember({"cpf", "lcd", "lsm"}));
  CLI::Option* sim_q = simulate->add_option("--q", cfg.q, "override the scenario's q");
  CLI::Option* sim_seed =
      simulate->add_option("--seed", cfg.seed, "override the scenario's seed");
  simulate->add_option("--out", cfg.out_dir, "output directory")->capture_default_str();
  simulate->add_option("--threads", cfg.threads, "worker threads for replications")
      ->capture_default_str();

  CLI::App* diagnose =
      app.add_subcommand("diagnose", "check knockoff exchangeability on a CSV");
  diagnose->add_option("--data", cfg.data_path, "input CSV")->required();
  add_outcome(diagnose);
  add_common(diagnose);

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.statistic = cpfilter::parse_statistic_kind(statistic);
    if (filter->parsed()) {
      const nlohmann::json report = cpfilter::cmd_filter(cfg);
      print_selection(report.at(cfg.plus ? "selection_plus" : "selection"),
                      cfg.plus ? "knockoff+ selection" : "knockoff selection");
      std::cout << "report: " << cfg.out_dir << "/report.json\n";
    } else if (simulate->parsed()) {
      cfg.override_seed = sim_seed->count() > 0;
      cfg.override_q = sim_q->count() > 0;
      cfg.override_statistic = sim_stat->count() > 0;
      const nlohmann::json summary = cpfilter::cmd_simulate(cfg);
      const auto& res = summary.at("results");
      std::cout << "scenario '" << summary.at("scenario").at("name").get<std::string>()
                << "': " << res.at("n_replications").get<int>() << " replication(s)\n"
                << "  knockoff   mean FDP "
                << res.at("knockoff").at("fdp").at("mean").get<double>() << ", mean power "
                << res.at("knockoff").at("power").at("mean").get<double>() << '\n'
                << "  knockoff+  mean FDP "
                << res.at("knockoff_plus").at("fdp").at("mean").get<double>()
                << ", mean power "
                << res.at("knockoff_plus").at("power").at("mean").get<double>() << '\n'
                << "summary: " << cfg.out_dir << "/summary.json\n";
    } else {
      const nlohmann::json report = cpfilter::cmd_diagnose(cfg);
      const auto& ex = report.at("exchangeability");
      std::cout << "exchangeability: " << ex.at("verdict").get<std::string>()
                << " (worst deviation "
                << std::max({ex.at("max_cov_diff").get<double>(),
                             ex.at("max_cross_offdiag_diff").get<double>(),
                             ex.at("max_mean_diff").get<double>()})
                << ", threshold " << ex.at("threshold").get<double>() << ")\n";
      for (const auto& w : report.at("warnings")) {
        std::cout << "warning: " << w.get<std::string>() << '\n';
      }
      std::cout << "report: " << cfg.out_dir << "/diagnose.json\n";
    }
  } catch (const cpfilter::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const cpfilter::ComputeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
