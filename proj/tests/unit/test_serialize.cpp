#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>

#include "cpfilter/competing_risks.hpp"
#include "cpfilter/cox.hpp"
#include "cpfilter/data.hpp"
#include "cpfilter/errors.hpp"
#include "cpfilter/lasso.hpp"
#include "cpfilter/mlp.hpp"
#include "cpfilter/rng.hpp"
#include "cpfilter/serialize.hpp"

using namespace cpfilter;

namespace {

FeatureMatrix wrap(const Eigen::MatrixXd& values) {
  FeatureMatrix m;
  m.values = values;
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    m.column_names.push_back("f" + std::to_string(j + 1));
  }
  m.column_kinds.assign(static_cast<std::size_t>(values.cols()), ColumnKind::continuous);
  return m;
}

Eigen::MatrixXd random_matrix(int n, int p, std::uint64_t seed) {
  Rng rng(seed, 0);
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = rng.normal();
  }
  return x;
}

}  // namespace

TEST_CASE("lasso weights round-trip with bit-identical predictions") {
  LassoModel m;
  m.family = LassoFamily::binomial;
  m.beta = Eigen::VectorXd(3);
  m.beta << 0.1, -2.0 / 3.0, 0.0;
  m.intercept = -0.25;
  m.lambda = 0.037;
  m.lambda_path = {0.5, 0.25, 0.125};
  m.first_entry_lambda = {0.5, 0.25, 0.0};

  const nlohmann::json j = serialize_model(m);
  REQUIRE(j.at("model_type") == "lasso");
  const auto restored = deserialize_model(j);
  const auto* lasso = dynamic_cast<const LassoModel*>(restored.get());
  REQUIRE(lasso != nullptr);
  REQUIRE(lasso->family == LassoFamily::binomial);
  REQUIRE(lasso->beta == m.beta);
  REQUIRE(lasso->intercept == m.intercept);
  REQUIRE(lasso->lambda == m.lambda);
  REQUIRE(lasso->lambda_path == m.lambda_path);
  REQUIRE(lasso->first_entry_lambda == m.first_entry_lambda);

  const Eigen::MatrixXd x = random_matrix(20, 3, 1201);
  REQUIRE(m.predict_probs_batch(x) == restored->predict_probs_batch(x));
}

TEST_CASE("network weights round-trip exactly through the file helpers") {
  Rng rng(1203, 0);
  const Eigen::MatrixXd x = random_matrix(60, 3, 1205);
  Eigen::VectorXd y(60);
  for (Eigen::Index i = 0; i < 60; ++i) y[i] = x(i, 0) + 0.1 * rng.normal();

  MlpConfig cfg;
  cfg.hidden = {6, 4};
  cfg.max_epochs = 20;
  cfg.seed = 1207;
  const MlpModel m = fit_mlp(Dataset{wrap(x), Outcome::continuous(y)}, cfg);

  const auto path = (std::filesystem::temp_directory_path() / "mlp_weights.json").string();
  save_model(m, path);
  const auto restored = load_model(path);
  std::filesystem::remove(path);

  REQUIRE(m.predict_scalar_batch(x) == restored->predict_scalar_batch(x));
  const auto* mlp = dynamic_cast<const MlpModel*>(restored.get());
  REQUIRE(mlp != nullptr);
  REQUIRE(mlp->head == MlpHead::scalar);
  REQUIRE(mlp->target_mean == m.target_mean);
  REQUIRE(mlp->target_scale == m.target_scale);
  for (int l = 0; l < m.stack.n_layers(); ++l) {
    REQUIRE(mlp->stack.w[l] == m.stack.w[l]);
    REQUIRE(mlp->stack.b[l] == m.stack.b[l]);
  }
}

TEST_CASE("cox weights carry the baseline hazard through the round trip") {
  Rng rng(1209, 0);
  const int n = 100;
  Eigen::MatrixXd x = random_matrix(n, 2, 1211);
  Eigen::VectorXd time(n);
  Eigen::VectorXi event(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    time[i] = rng.exponential(std::exp(0.5 * x(i, 0)));
    event[i] = rng.bernoulli(0.8) ? 1 : 0;
  }
  const Dataset d{wrap(x), Outcome::survival(time, event)};
  const CoxModel linear = fit_cox_linear(d);

  const auto restored = deserialize_model(serialize_model(linear));
  const std::vector<double> grid{0.1, 0.5, 1.0, 2.0};
  REQUIRE(linear.predict_survival_batch(x, grid) ==
          restored->predict_survival_batch(x, grid));

  CoxNetOptions opts;
  opts.hidden = {5};
  opts.max_epochs = 10;
  opts.seed = 1213;
  const CoxModel net = fit_cox_network(d, opts);
  const nlohmann::json j = serialize_model(net);
  REQUIRE(j.at("model_type") == "cox_network");
  const auto net_restored = deserialize_model(j);
  REQUIRE(net.predict_survival_batch(x, grid) ==
          net_restored->predict_survival_batch(x, grid));
}

TEST_CASE("incidence model weights reproduce every curve") {
  Rng rng(1215, 0);
  const int n = 300;
  Eigen::MatrixXd x = random_matrix(n, 2, 1217);
  Eigen::VectorXd time(n);
  Eigen::VectorXi cause(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    time[i] = rng.exponential(1.0);
    const double u = rng.uniform();
    cause[i] = u < 0.4 ? 1 : (u < 0.8 ? 2 : 0);
  }
  DiscreteCrOptions opts;
  opts.n_bins = 4;
  opts.hidden = {6};
  opts.max_epochs = 10;
  opts.seed = 1219;
  const DiscreteTimeCrModel m =
      fit_discrete_cr(Dataset{wrap(x), Outcome::competing_risks(time, cause)}, opts);

  const auto restored = deserialize_model(serialize_model(m));
  const std::vector<double> grid{0.25, 0.5, 1.0, 2.0};
  for (int c : {1, 2}) {
    REQUIRE(m.predict_cif_batch(x, c, grid) == restored->predict_cif_batch(x, c, grid));
  }
}

TEST_CASE("tampered payloads are rejected with specific messages") {
  LassoModel m;
  m.family = LassoFamily::gaussian;
  m.beta = Eigen::VectorXd::Ones(2);
  m.first_entry_lambda = {0.5, 0.5};

  nlohmann::json j = serialize_model(m);
  j["format_version"] = 99;
  REQUIRE_THROWS_WITH(deserialize_model(j),
                      Catch::Matchers::ContainsSubstring("format_version"));

  j = serialize_model(m);
  j.erase("model_type");
  REQUIRE_THROWS_AS(deserialize_model(j), ValidationError);

  j = serialize_model(m);
  j["model_type"] = "forest";
  REQUIRE_THROWS_WITH(deserialize_model(j), Catch::Matchers::ContainsSubstring("forest"));

  j = serialize_model(m);
  j["first_entry_lambda"] = {0.5};
  REQUIRE_THROWS_AS(deserialize_model(j), ValidationError);

  // Declared layer dimensions must match the weight payload.
  MlpModel mlp;
  mlp.stack = nn::init_stack(3, {4}, 1, Activation::relu, 0.01, 1221);
  nlohmann::json mj = serialize_model(mlp);
  mj["stack"]["layers"][1]["cols"] = 7;
  REQUIRE_THROWS_AS(deserialize_model(mj), ValidationError);
}

TEST_CASE("missing and malformed weight files fail loudly") {
  REQUIRE_THROWS_AS(load_model("/nonexistent/weights.json"), ValidationError);

  const auto path = (std::filesystem::temp_directory_path() / "broken_weights.json").string();
  std::ofstream(path) << "{ not json";
  REQUIRE_THROWS_AS(load_model(path), ValidationError);
  std::filesystem::remove(path);
}
