#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "cpfilter/data.hpp"
#include "cpfilter/errors.hpp"
#include "cpfilter/lasso.hpp"
#include "cpfilter/metrics.hpp"
#include "cpfilter/rng.hpp"

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

}  // namespace

TEST_CASE("concordance on a hand-worked example") {
  // Events at times 1 and 2, censored at 3. Permissible pairs:
  // (1,2) (1,3) from the first event, (2,3) from the second.
  Eigen::VectorXd time(3);
  time << 1.0, 2.0, 3.0;
  Eigen::VectorXi event(3);
  event << 1, 1, 0;

  Eigen::VectorXd perfect(3);
  perfect << 3.0, 2.0, 1.0;  // earlier events carry higher risk
  REQUIRE(harrell_c_index(perfect, time, event) == 1.0);

  Eigen::VectorXd inverted(3);
  inverted << 1.0, 2.0, 3.0;
  REQUIRE(harrell_c_index(inverted, time, event) == 0.0);

  Eigen::VectorXd tied = Eigen::VectorXd::Constant(3, 7.0);
  REQUIRE(harrell_c_index(tied, time, event) == 0.5);

  Eigen::VectorXd mixed(3);
  mixed << 3.0, 1.0, 2.0;  // (1,2) and (1,3) concordant, (2,3) discordant
  REQUIRE(harrell_c_index(mixed, time, event) == Catch::Approx(2.0 / 3.0));
}

TEST_CASE("censored rows never anchor a permissible pair") {
  Eigen::VectorXd time(2);
  time << 1.0, 2.0;
  Eigen::VectorXi event(2);
  event << 0, 1;  // only the later row is an event, so no pair qualifies
  Eigen::VectorXd risk(2);
  risk << 1.0, 2.0;
  REQUIRE(std::isnan(harrell_c_index(risk, time, event)));

  Eigen::VectorXi none = Eigen::VectorXi::Zero(2);
  REQUIRE_THROWS_AS(harrell_c_index(risk, time, none), NoEventsError);
}

TEST_CASE("random risk scores sit near one half") {
  Rng rng(701, 0);
  const int n = 1500;
  Eigen::VectorXd time(n), risk(n);
  Eigen::VectorXi event(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    time[i] = rng.exponential(1.0);
    event[i] = rng.bernoulli(0.7) ? 1 : 0;
    risk[i] = rng.normal();
  }
  const double c = harrell_c_index(risk, time, event);
  REQUIRE(c > 0.45);
  REQUIRE(c < 0.55);
}

TEST_CASE("perfect regression predictions score zero error") {
  Rng rng(703, 0);
  const int n = 50;
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    y[i] = 2.0 * x(i, 0) - x(i, 1);
  }
  LassoModel model;
  model.family = LassoFamily::gaussian;
  model.beta = Eigen::VectorXd(2);
  model.beta << 2.0, -1.0;
  model.intercept = 0.0;
  const FitMetrics m = fit_metrics(model, Dataset{wrap(x), Outcome::continuous(y)});
  REQUIRE(m.kind == OutcomeKind::continuous);
  REQUIRE(m.mse == Catch::Approx(0.0).margin(1e-24));
  REQUIRE(std::isnan(m.accuracy));
}

TEST_CASE("uninformative classifier scores chance accuracy and log-two entropy") {
  const int n = 400;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = i % 2 == 0 ? 1.0 : 0.0;

  LassoModel model;  // zero weights and intercept: p = 1/2 everywhere
  model.family = LassoFamily::binomial;
  model.beta = Eigen::VectorXd::Zero(1);
  model.intercept = 0.0;
  const FitMetrics m = fit_metrics(model, Dataset{wrap(x), Outcome::binary(y)});
  REQUIRE(m.kind == OutcomeKind::binary);
  REQUIRE(m.accuracy == 0.5);
  REQUIRE(m.cross_entropy == Catch::Approx(std::log(2.0)).margin(1e-12));
}

TEST_CASE("survival metrics use the risk score surface") {
  Rng rng(705, 0);
  const int n = 500;
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd time(n);
  Eigen::VectorXi event(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    time[i] = rng.exponential(std::exp(1.5 * x(i, 0)));
    event[i] = 1;
  }
  LassoModel model;
  model.family = LassoFamily::cox;
  model.beta = Eigen::VectorXd(1);
  model.beta << 1.5;
  const FitMetrics m = fit_metrics(model, Dataset{wrap(x), Outcome::survival(time, event)});
  REQUIRE(m.kind == OutcomeKind::survival);
  REQUIRE(m.c_index > 0.7);
  REQUIRE(std::isnan(m.mse));
}
