#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "cpfilter/competing_risks.hpp"
#include "cpfilter/data.hpp"
#include "cpfilter/errors.hpp"
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

TEST_CASE("time bins partition by cutpoint with overflow into the last bin") {
  const std::vector<double> cuts{1.0, 2.0, 3.0};
  REQUIRE(detail::time_bin(cuts, 0.5) == 1);
  REQUIRE(detail::time_bin(cuts, 1.0) == 1);
  REQUIRE(detail::time_bin(cuts, 1.5) == 2);
  REQUIRE(detail::time_bin(cuts, 3.0) == 3);
  REQUIRE(detail::time_bin(cuts, 99.0) == 3);
}

TEST_CASE("cutpoints sit at evenly spaced quantiles ending at the maximum") {
  Eigen::VectorXd time(8);
  time << 1, 2, 3, 4, 5, 6, 7, 8;
  const std::vector<double> cuts = cr_cutpoints(time, 4);
  REQUIRE(cuts.size() == 4);
  REQUIRE(std::is_sorted(cuts.begin(), cuts.end()));
  REQUIRE(cuts.back() == 8.0);
  REQUIRE(cuts[0] < cuts[1]);
  REQUIRE_THROWS_AS(cr_cutpoints(time, 1), ValidationError);
  const Eigen::VectorXd flat = Eigen::VectorXd::Constant(10, 2.0);
  REQUIRE_THROWS_AS(cr_cutpoints(flat, 4), ValidationError);
}

TEST_CASE("likelihood gradient matches finite differences") {
  const int K = 3;
  Rng rng(601, 0);
  Eigen::MatrixXd logits(6, 2 * K + 1);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    for (Eigen::Index j = 0; j < logits.cols(); ++j) logits(i, j) = rng.normal();
  }
  std::vector<detail::CrTarget> targets;
  targets.push_back(detail::cr_target(K, 1, 1));
  targets.push_back(detail::cr_target(K, 1, 3));
  targets.push_back(detail::cr_target(K, 2, 2));
  targets.push_back(detail::cr_target(K, 0, 1));
  targets.push_back(detail::cr_target(K, 0, 2));
  targets.push_back(detail::cr_target(K, 0, 3));

  Eigen::MatrixXd grad;
  detail::cr_loss(logits, targets, K, &grad);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      Eigen::MatrixXd up = logits, down = logits;
      up(i, j) += h;
      down(i, j) -= h;
      const double numeric = (detail::cr_loss(up, targets, K, nullptr) -
                              detail::cr_loss(down, targets, K, nullptr)) /
                             (2.0 * h);
      REQUIRE(grad(i, j) == Catch::Approx(numeric).margin(1e-6));
    }
  }
}

TEST_CASE("fully-censored rows beyond the last cutpoint carry no event mass") {
  // A row censored in the last bin puts its whole likelihood on the
  // survive-past output; the loss at that target must be -log p_2K.
  const int K = 2;
  Eigen::MatrixXd logits(1, 2 * K + 1);
  logits << 0.1, -0.3, 0.2, 0.4, 1.5;
  std::vector<detail::CrTarget> targets{detail::cr_target(K, 0, K)};
  const double loss = detail::cr_loss(logits, targets, K, nullptr);
  Eigen::VectorXd p = logits.row(0).transpose();
  p = (p.array() - p.maxCoeff()).exp();
  p /= p.sum();
  REQUIRE(loss == Catch::Approx(-std::log(p[2 * K])).margin(1e-12));
}

TEST_CASE("covariate-free incidence converges to empirical frequencies") {
  Rng rng(603, 0);
  const int n = 5000, p = 2;
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd time(n);
  Eigen::VectorXi cause(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = rng.normal();
    if (rng.bernoulli(0.6)) {
      cause[i] = 1;
      time[i] = rng.exponential(1.0);
    } else {
      cause[i] = 2;
      time[i] = rng.exponential(0.5);
    }
  }
  const Dataset d{wrap(x), Outcome::competing_risks(time, cause)};

  DiscreteCrOptions opts;
  opts.n_bins = 4;
  opts.hidden = {8};
  opts.max_epochs = 200;
  opts.batch_size = 200;
  opts.seed = 605;
  const DiscreteTimeCrModel model = fit_discrete_cr(d, opts);
  const int K = model.n_bins();
  REQUIRE(K == 4);

  // Empirical cell frequencies; every subject has an event, so the
  // survive-past cell is empty.
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(2 * K + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int bin = detail::time_bin(model.cutpoints, time[i]);
    freq[(cause[i] - 1) * K + (bin - 1)] += 1.0 / n;
  }

  const Eigen::MatrixXd mass = model.predict_mass_batch(x);
  const Eigen::VectorXd avg = mass.colwise().mean();
  for (Eigen::Index j = 0; j < avg.size(); ++j) {
    REQUIRE(avg[j] == Catch::Approx(freq[j]).margin(0.05));
  }
  REQUIRE(avg[2 * K] <= 0.05);
}

TEST_CASE("predicted masses form a distribution and the CIF is monotone") {
  Rng rng(607, 0);
  const int n = 400;
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd time(n);
  Eigen::VectorXi cause(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = rng.normal();
    const double u = rng.uniform();
    cause[i] = u < 0.4 ? 1 : (u < 0.7 ? 2 : 0);
    time[i] = rng.exponential(1.0);
  }
  DiscreteCrOptions opts;
  opts.n_bins = 5;
  opts.hidden = {8, 8};
  opts.max_epochs = 60;
  opts.seed = 609;
  const DiscreteTimeCrModel model =
      fit_discrete_cr(Dataset{wrap(x), Outcome::competing_risks(time, cause)}, opts);

  const Eigen::MatrixXd mass = model.predict_mass_batch(x.topRows(20));
  for (Eigen::Index i = 0; i < mass.rows(); ++i) {
    REQUIRE(mass.row(i).sum() == Catch::Approx(1.0).margin(1e-9));
    REQUIRE(mass.row(i).minCoeff() >= 0.0);
  }

  std::vector<double> grid;
  for (double t = 0.0; t <= 6.0; t += 0.5) grid.push_back(t);
  for (int cause_id : {1, 2}) {
    const Eigen::MatrixXd cif = model.predict_cif_batch(x.topRows(20), cause_id, grid);
    for (Eigen::Index i = 0; i < cif.rows(); ++i) {
      REQUIRE(cif(i, 0) >= 0.0);
      for (Eigen::Index k = 1; k < cif.cols(); ++k) {
        REQUIRE(cif(i, k) >= cif(i, k - 1));
      }
      REQUIRE(cif(i, cif.cols() - 1) <= 1.0);
    }
  }
  // Before the first cutpoint no mass has accumulated.
  const Eigen::MatrixXd early =
      model.predict_cif_batch(x.topRows(3), 1, {model.cutpoints.front() / 2.0});
  REQUIRE(early.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE_THROWS_AS(model.predict_cif(x.row(0), 3, grid), ValidationError);
}

TEST_CASE("degenerate cause patterns are rejected") {
  Rng rng(611, 0);
  const int n = 50;
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd time(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    time[i] = rng.exponential(1.0);
  }
  DiscreteCrOptions opts;
  opts.max_epochs = 5;

  Eigen::VectorXi censored = Eigen::VectorXi::Zero(n);
  REQUIRE_THROWS_AS(
      fit_discrete_cr(Dataset{wrap(x), Outcome::competing_risks(time, censored)}, opts),
      NoEventsError);

  Eigen::VectorXi only_one = Eigen::VectorXi::Ones(n);
  REQUIRE_THROWS_AS(
      fit_discrete_cr(Dataset{wrap(x), Outcome::competing_risks(time, only_one)}, opts),
      SingleCauseDataError);
}
