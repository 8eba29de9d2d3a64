#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cpfilter/statistics.hpp"

using namespace cpfilter;

TEST_CASE("importance differences pair originals with their knockoffs") {
  ImportanceVector imp;
  imp.u = Eigen::VectorXd(4);
  imp.u << 4.0, 0.0, 1.0, 1.0;
  const KnockoffStats stats = cpf_statistics(imp);
  REQUIRE(stats.kind == StatisticKind::cpf);
  REQUIRE(stats.w.size() == 2);
  REQUIRE(stats.w[0] == 3.0);
  REQUIRE(stats.w[1] == -1.0);
  REQUIRE(stats.z_original[0] == 4.0);
  REQUIRE(stats.z_knockoff[1] == 1.0);
}

TEST_CASE("swapping a pair of columns flips the sign of its statistic") {
  ImportanceVector imp;
  imp.u = Eigen::VectorXd(6);
  imp.u << 2.0, 5.0, 0.5, 1.0, 3.0, 0.25;
  const KnockoffStats original = cpf_statistics(imp);

  ImportanceVector swapped = imp;
  std::swap(swapped.u[1], swapped.u[4]);  // swap feature 2 with its knockoff
  const KnockoffStats flipped = cpf_statistics(swapped);
  REQUIRE(flipped.w[1] == -original.w[1]);
  REQUIRE(flipped.w[0] == original.w[0]);
  REQUIRE(flipped.w[2] == original.w[2]);
}

TEST_CASE("odd-length importance vectors are rejected") {
  ImportanceVector imp;
  imp.u = Eigen::VectorXd::Ones(5);
  REQUIRE_THROWS_AS(cpf_statistics(imp), OddLengthError);
}

TEST_CASE("coefficient differences contrast absolute values") {
  LassoModel model;
  model.beta = Eigen::VectorXd(4);
  model.beta << 1.5, 0.0, 0.5, 0.1;  // originals then knockoffs
  const KnockoffStats stats = lcd_statistics(model, 2);
  REQUIRE(stats.kind == StatisticKind::lcd);
  REQUIRE(stats.w[0] == 1.0);
  REQUIRE(stats.w[1] == Catch::Approx(-0.1));

  model.beta << -1.5, 0.0, 0.5, -0.1;  // signs do not matter
  const KnockoffStats abs_stats = lcd_statistics(model, 2);
  REQUIRE(abs_stats.w[0] == 1.0);
  REQUIRE(abs_stats.w[1] == Catch::Approx(-0.1));

  REQUIRE_THROWS_AS(lcd_statistics(model, 3), DimensionMismatchError);
}

TEST_CASE("signed max keeps the larger entry penalty and zeroes ties") {
  LassoModel model;
  model.lambda_path = {0.8, 0.4, 0.2, 0.1};
  model.first_entry_lambda = {0.8, 0.2, 0.3, 0.1, 0.4, 0.3};  // p = 3
  const KnockoffStats stats = lsm_statistics(model, 3);
  REQUIRE(stats.kind == StatisticKind::lsm);
  REQUIRE(stats.w[0] == 0.8);    // original entered at 0.8, knockoff at 0.1
  REQUIRE(stats.w[1] == -0.4);   // knockoff entered first
  REQUIRE(stats.w[2] == 0.0);    // tie
}

TEST_CASE("signed max requires a penalty path") {
  LassoModel model;  // fixed-lambda fits leave the path empty
  model.first_entry_lambda = {0.5, 0.1};
  REQUIRE_THROWS_AS(lsm_statistics(model, 1), PathMissingError);

  model.lambda_path = {0.5, 0.25};
  REQUIRE_THROWS_AS(lsm_statistics(model, 2), DimensionMismatchError);
}

TEST_CASE("statistic names parse and print consistently") {
  REQUIRE(parse_statistic_kind("cpf") == StatisticKind::cpf);
  REQUIRE(parse_statistic_kind("lcd") == StatisticKind::lcd);
  REQUIRE(parse_statistic_kind("lsm") == StatisticKind::lsm);
  REQUIRE_THROWS_AS(parse_statistic_kind("lassoo"), ValidationError);
  REQUIRE(std::string(to_string(StatisticKind::lsm)) == "lsm");
}

TEST_CASE("statistic table round-trips through its CSV layout") {
  KnockoffStats stats;
  stats.kind = StatisticKind::cpf;
  stats.w = Eigen::VectorXd(2);
  stats.w << 3.0, -0.125;
  stats.z_original = Eigen::VectorXd(2);
  stats.z_original << 4.0, 0.375;
  stats.z_knockoff = Eigen::VectorXd(2);
  stats.z_knockoff << 1.0, 0.5;

  const auto path = std::filesystem::temp_directory_path() / "w_stats_test.csv";
  write_w_csv(path, {"age", "dose"}, stats);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "feature,U_original,U_knockoff,W,statistic_kind");
  std::getline(in, line);
  REQUIRE(line == "age,4,1,3,cpf");
  std::getline(in, line);
  REQUIRE(line == "dose,0.375,0.5,-0.125,cpf");
  REQUIRE_FALSE(std::getline(in, line));
  std::filesystem::remove(path);

  REQUIRE_THROWS_AS(write_w_csv(path, {"age"}, stats), DimensionMismatchError);
}
