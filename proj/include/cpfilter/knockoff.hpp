#pragma once

// Second-order Gaussian knockoffs with the equicorrelated s construction.
// Knockoff rows are drawn from the conditional Gaussian
//   X~ | X = x  ~  N(mu + (Sigma - D) Sigma^-1 (x - mu), 2D - D Sigma^-1 D),
// D = diag(s), which makes the joint covariance of (X, X~) equal to
//   G = [[Sigma, Sigma - D], [Sigma - D, Sigma]].

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cpfilter/data.hpp"
#include "cpfilter/errors.hpp"
#include "cpfilter/rng.hpp"

namespace cpfilter {

struct MomentFit {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  bool shrinkage_applied = false;
  double shrinkage_amount = 0.0;  // ridge added to the diagonal
};

/// Sample mean and covariance (N-1 denominator). If the smallest
/// eigenvalue falls below shrinkage_floor, a ridge lifting it to the
/// floor is added and recorded.
inline MomentFit fit_moments(const FeatureMatrix& m, double shrinkage_floor = 1e-6) {
  const Eigen::Index n = m.rows();
  if (n < 2) throw ValidationError("moment fitting needs at least two rows");
  MomentFit fit;
  fit.mean = m.values.colwise().mean();
  const Eigen::MatrixXd centered = m.values.rowwise() - fit.mean.transpose();
  fit.covariance = centered.transpose() * centered / static_cast<double>(n - 1);
  fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fit.covariance);
  const double min_eig = eig.eigenvalues().minCoeff();
  if (min_eig < shrinkage_floor) {
    fit.shrinkage_applied = true;
    fit.shrinkage_amount = shrinkage_floor - min_eig;
    fit.covariance.diagonal().array() += fit.shrinkage_amount;
  }
  return fit;
}

/// Equicorrelated diagonal: on the correlation scale every entry equals
/// min(1, 2*lambda_min), rescaled to the covariance scale and shrunk by
/// (1 - 1e-6) so the joint covariance stays strictly feasible.
inline Eigen::VectorXd solve_equicorrelated_s(const Eigen::MatrixXd& sigma) {
  const Eigen::Index p = sigma.rows();
  const Eigen::VectorXd d = sigma.diagonal();
  if ((d.array() <= 0.0).any()) {
    throw NotPositiveDefiniteError("covariance has a nonpositive diagonal entry");
  }
  const Eigen::VectorXd inv_sd = d.array().sqrt().inverse();
  const Eigen::MatrixXd corr = inv_sd.asDiagonal() * sigma * inv_sd.asDiagonal();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
  const double min_eig = eig.eigenvalues().minCoeff();
  if (min_eig <= 0.0) {
    throw NotPositiveDefiniteError("correlation matrix is not positive definite (lambda_min = " +
                                   std::to_string(min_eig) + ")");
  }
  const double s_corr = std::min(1.0, 2.0 * min_eig) * (1.0 - 1e-6);
  return (s_corr * d.array()).matrix();
}

class GaussianKnockoffSampler {
 public:
  /// Builds the sampler from fitted moments. The s vector defaults to the
  /// equicorrelated solution for sigma.
  GaussianKnockoffSampler(Eigen::VectorXd mu, Eigen::MatrixXd sigma, Eigen::VectorXd s)
      : mu_(std::move(mu)), sigma_(std::move(sigma)), s_(std::move(s)) {
    const Eigen::Index p = sigma_.rows();
    if (mu_.size() != p || s_.size() != p || sigma_.cols() != p) {
      throw DimensionMismatchError("sampler: mu/sigma/s sizes disagree");
    }
    if ((sigma_ - sigma_.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
      throw ValidationError("sampler: covariance is not symmetric");
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(sigma_);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw NotPositiveDefiniteError("sampler: covariance is not positive definite");
    }
    const Eigen::MatrixXd sigma_inv_d = ldlt.solve(Eigen::MatrixXd(s_.asDiagonal()));
    conditional_mean_map_ = Eigen::MatrixXd::Identity(p, p) - sigma_inv_d.transpose();
    Eigen::MatrixXd cond_cov =
        2.0 * Eigen::MatrixXd(s_.asDiagonal()) - s_.asDiagonal() * sigma_inv_d;
    cond_cov = 0.5 * (cond_cov + cond_cov.transpose()).eval();
    conditional_cov_factor_ = psd_factor(cond_cov);
  }

  static GaussianKnockoffSampler fit(const FeatureMatrix& m, double shrinkage_floor = 1e-6) {
    MomentFit moments = fit_moments(m, shrinkage_floor);
    Eigen::VectorXd s = solve_equicorrelated_s(moments.covariance);
    GaussianKnockoffSampler sampler(std::move(moments.mean), std::move(moments.covariance),
                                    std::move(s));
    sampler.shrinkage_applied_ = moments.shrinkage_applied;
    sampler.shrinkage_amount_ = moments.shrinkage_amount;
    return sampler;
  }

  const Eigen::VectorXd& mu() const { return mu_; }
  const Eigen::MatrixXd& sigma() const { return sigma_; }
  const Eigen::VectorXd& s() const { return s_; }
  const Eigen::MatrixXd& conditional_mean_map() const { return conditional_mean_map_; }
  const Eigen::MatrixXd& conditional_cov_factor() const { return conditional_cov_factor_; }
  bool shrinkage_applied() const { return shrinkage_applied_; }
  double shrinkage_amount() const { return shrinkage_amount_; }
  Eigen::Index dim() const { return mu_.size(); }

  /// Joint covariance of (X, X~) implied by (sigma, s).
  Eigen::MatrixXd joint_covariance() const {
    const Eigen::Index p = dim();
    Eigen::MatrixXd g(2 * p, 2 * p);
    const Eigen::MatrixXd cross = sigma_ - Eigen::MatrixXd(s_.asDiagonal());
    g.topLeftCorner(p, p) = sigma_;
    g.topRightCorner(p, p) = cross;
    g.bottomLeftCorner(p, p) = cross;
    g.bottomRightCorner(p, p) = sigma_;
    return g;
  }

  double joint_min_eigenvalue() const {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(joint_covariance());
    return eig.eigenvalues().minCoeff();
  }

 private:
  // Factor F with F F^T = m, falling back to an eigendecomposition square
  // root when the matrix is only semidefinite (s = 0 makes it exactly 0).
  static Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& m) {
    const Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    if (eig.eigenvalues().minCoeff() < -1e-8) {
      throw NotPositiveDefiniteError("conditional knockoff covariance is indefinite");
    }
    const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal();
  }

  Eigen::VectorXd mu_;
  Eigen::MatrixXd sigma_;
  Eigen::VectorXd s_;
  Eigen::MatrixXd conditional_mean_map_;   // (Sigma - D) Sigma^-1
  Eigen::MatrixXd conditional_cov_factor_; // F with F F^T = 2D - D Sigma^-1 D
  bool shrinkage_applied_ = false;
  double shrinkage_amount_ = 0.0;
};

/// Draws one knockoff row per input row. Each row uses its own stream
/// derived from (seed, row index), so output is reproducible and rows may
/// be generated in any order. Column names get a "_knockoff" suffix and
/// kinds are inherited from the originals.
inline FeatureMatrix sample_knockoffs(const GaussianKnockoffSampler& sampler,
                                      const FeatureMatrix& m, std::uint64_t seed) {
  const Eigen::Index p = sampler.dim();
  if (m.cols() != p) {
    throw DimensionMismatchError("sample_knockoffs: matrix has " + std::to_string(m.cols()) +
                                 " columns, sampler was fitted on " + std::to_string(p));
  }
  FeatureMatrix out;
  out.values.resize(m.rows(), p);
  out.column_kinds = m.column_kinds;
  out.column_names.reserve(p);
  for (const auto& name : m.column_names) out.column_names.push_back(name + "_knockoff");

  const Eigen::MatrixXd& mean_map = sampler.conditional_mean_map();
  const Eigen::MatrixXd& factor = sampler.conditional_cov_factor();
  Eigen::VectorXd z(factor.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Rng rng(seed, static_cast<std::uint64_t>(i));
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.normal();
    out.values.row(i) = (sampler.mu() +
                         mean_map * (m.values.row(i).transpose() - sampler.mu()) + factor * z)
                            .transpose();
  }
  return out;
}

/// Moment-level exchangeability check between originals and knockoffs.
/// Valid second-order knockoffs should show small deviations everywhere;
/// an invalid construction (e.g. permuted rows) inflates the cross term.
struct ExchangeabilityReport {
  double max_cov_diff = 0.0;            // max |cov(X) - cov(X~)|
  double max_cross_offdiag_diff = 0.0;  // max off-diag |cov(X, X~) - cov(X)|
  double max_mean_diff = 0.0;           // max_j |mean X_j - mean X~_j|
  Eigen::VectorXd estimated_s;          // diag(cov(X)) - diag(cov(X, X~))
};

inline ExchangeabilityReport exchangeability_diagnostic(const FeatureMatrix& x,
                                                        const FeatureMatrix& x_knock) {
  if (x.rows() != x_knock.rows() || x.cols() != x_knock.cols()) {
    throw DimensionMismatchError("exchangeability diagnostic: shapes differ");
  }
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (n < 2) throw ValidationError("exchangeability diagnostic needs at least two rows");
  const Eigen::RowVectorXd mean_x = x.values.colwise().mean();
  const Eigen::RowVectorXd mean_k = x_knock.values.colwise().mean();
  const Eigen::MatrixXd cx = x.values.rowwise() - mean_x;
  const Eigen::MatrixXd ck = x_knock.values.rowwise() - mean_k;
  const double denom = static_cast<double>(n - 1);
  const Eigen::MatrixXd cov_x = cx.transpose() * cx / denom;
  const Eigen::MatrixXd cov_k = ck.transpose() * ck / denom;
  const Eigen::MatrixXd cov_cross = cx.transpose() * ck / denom;

  ExchangeabilityReport report;
  report.max_cov_diff = (cov_x - cov_k).cwiseAbs().maxCoeff();
  report.max_mean_diff = (mean_x - mean_k).cwiseAbs().maxCoeff();
  double max_off = 0.0;
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      if (i == j) continue;
      max_off = std::max(max_off, std::abs(cov_cross(i, j) - cov_x(i, j)));
    }
  }
  report.max_cross_offdiag_diff = max_off;
  report.estimated_s = cov_x.diagonal() - cov_cross.diagonal();
  return report;
}

}  // namespace cpfilter
