#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include "cpfilter/csv.hpp"
#include "cpfilter/errors.hpp"

using namespace cpfilter;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("three-row continuous CSV ingests as N=3 p=2") {
  const auto path = write_temp("csv_basic.csv",
                               "x1,x2,y\n"
                               "1.0,2.0,3.5\n"
                               "0.5,-1.0,2.0\n"
                               "2.0,0.0,7.25\n");
  OutcomeSpec spec;
  spec.kind = OutcomeKind::continuous;
  spec.y_column = "y";
  const Dataset d = load_csv(path, spec);
  REQUIRE(d.x.rows() == 3);
  REQUIRE(d.x.cols() == 2);
  REQUIRE(d.y.kind == OutcomeKind::continuous);
  REQUIRE(d.y.y[2] == 7.25);
  REQUIRE(d.x.column_names == std::vector<std::string>{"x1", "x2"});
}

TEST_CASE("unparseable cell reports row and column") {
  const auto path = write_temp("csv_na.csv",
                               "x1,x2,y\n"
                               "1.0,2.0,3.5\n"
                               "NA,-1.0,2.0\n");
  OutcomeSpec spec;
  spec.y_column = "y";
  try {
    load_csv(path, spec);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    REQUIRE(msg.find("x1") != std::string::npos);
    REQUIRE(msg.find('2') != std::string::npos);
  }
}

TEST_CASE("negative survival time is rejected at ingestion") {
  const auto path = write_temp("csv_negtime.csv",
                               "x1,time,event\n"
                               "1.0,2.0,1\n"
                               "0.5,-1.0,0\n");
  OutcomeSpec spec;
  spec.kind = OutcomeKind::survival;
  spec.time_column = "time";
  spec.event_column = "event";
  REQUIRE_THROWS_AS(load_csv(path, spec), ValidationError);
}

TEST_CASE("missing outcome column is a schema error") {
  const auto path = write_temp("csv_nocol.csv", "x1,x2\n1,2\n");
  OutcomeSpec spec;
  spec.y_column = "y";
  REQUIRE_THROWS_AS(load_csv(path, spec), SchemaMismatchError);
}

TEST_CASE("0/1 feature columns are detected as binary") {
  const auto path = write_temp("csv_binary.csv",
                               "a,b,y\n"
                               "0,1.5,1\n"
                               "1,2.5,2\n"
                               "1,3.5,3\n");
  OutcomeSpec spec;
  spec.y_column = "y";
  const Dataset d = load_csv(path, spec);
  REQUIRE(d.x.column_kinds[0] == ColumnKind::binary);
  REQUIRE(d.x.column_kinds[1] == ColumnKind::continuous);
}

TEST_CASE("declared-binary column with other values is rejected") {
  const auto path = write_temp("csv_badbin.csv",
                               "a,y\n"
                               "0,1\n"
                               "2,2\n");
  OutcomeSpec spec;
  spec.y_column = "y";
  spec.binary_features = {"a"};
  REQUIRE_THROWS_AS(load_csv(path, spec), NonBinaryValueError);
}

TEST_CASE("binary outcome values outside 0/1 are rejected") {
  const auto path = write_temp("csv_badout.csv",
                               "a,y\n"
                               "0.5,1\n"
                               "1.5,2\n");
  OutcomeSpec spec;
  spec.kind = OutcomeKind::binary;
  spec.y_column = "y";
  REQUIRE_THROWS_AS(load_csv(path, spec), NonBinaryValueError);
}

TEST_CASE("write then load round-trips values exactly") {
  const auto src = write_temp("csv_rt_src.csv",
                              "x1,x2,y\n"
                              "0.1234567890123456,2.0,3.5\n"
                              "-1e-8,0.3333333333333333,2.0\n");
  OutcomeSpec spec;
  spec.y_column = "y";
  const Dataset d = load_csv(src, spec);
  const auto dst = std::filesystem::temp_directory_path() / "csv_rt_dst.csv";
  write_csv(dst, d, spec);
  const Dataset d2 = load_csv(dst, spec);
  REQUIRE(d.x.values == d2.x.values);
  REQUIRE(d.y.y == d2.y.y);
}

TEST_CASE("feature-only loader takes every column") {
  const auto path = write_temp("csv_feat.csv",
                               "a,b,c\n"
                               "1,0,2.5\n"
                               "0,1,3.5\n");
  const FeatureMatrix x = load_feature_csv(path);
  REQUIRE(x.rows() == 2);
  REQUIRE(x.cols() == 3);
  REQUIRE(x.column_kinds[0] == ColumnKind::binary);
  REQUIRE(x.column_kinds[2] == ColumnKind::continuous);
}

TEST_CASE("missing file raises a not-found error") {
  OutcomeSpec spec;
  spec.y_column = "y";
  REQUIRE_THROWS_AS(load_csv("/nonexistent/nope.csv", spec), FileNotFoundError);
}
