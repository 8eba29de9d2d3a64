#pragma once

// The prediction interface every importance statistic consumes. Concrete
// models implement the surfaces matching their outcome type; the rest
// throw OutcomeMismatch. Trained models are immutable and safe for
// concurrent prediction.

#include <Eigen/Dense>
#include <vector>

#include "cpfilter/errors.hpp"

namespace cpfilter {

enum class PredictionSurface { scalar, probs, survival, cif };

inline const char* to_string(PredictionSurface s) {
  switch (s) {
    case PredictionSurface::scalar: return "scalar";
    case PredictionSurface::probs: return "probs";
    case PredictionSurface::survival: return "survival";
    case PredictionSurface::cif: return "cif";
  }
  return "?";
}

class PredictionModel {
 public:
  virtual ~PredictionModel() = default;

  virtual int input_dim() const = 0;

  /// The surface importance probing differences: scalar and probs models
  /// are handled directly, survival and cif models via a time grid.
  virtual PredictionSurface primary_surface() const = 0;

  /// Continuous outcomes: one real prediction per row.
  virtual double predict_scalar(const Eigen::Ref<const Eigen::RowVectorXd>&) const {
    throw OutcomeMismatchError("model has no scalar prediction surface");
  }

  /// Categorical outcomes: probabilities per category (nonnegative, sum 1).
  virtual Eigen::VectorXd predict_probs(const Eigen::Ref<const Eigen::RowVectorXd>&) const {
    throw OutcomeMismatchError("model has no probability prediction surface");
  }

  /// Survival outcomes: S(t | x) over the given time grid, nonincreasing.
  virtual Eigen::VectorXd predict_survival(const Eigen::Ref<const Eigen::RowVectorXd>&,
                                           const std::vector<double>&) const {
    throw OutcomeMismatchError("model has no survival prediction surface");
  }

  /// Competing risks: CIF_cause(t | x) over the grid, nondecreasing.
  virtual Eigen::VectorXd predict_cif(const Eigen::Ref<const Eigen::RowVectorXd>&, int,
                                      const std::vector<double>&) const {
    throw OutcomeMismatchError("model has no CIF prediction surface");
  }

  // Batched variants; the defaults loop row-wise, dense models override
  // with matrix kernels.

  virtual Eigen::VectorXd predict_scalar_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = predict_scalar(x.row(i));
    return out;
  }

  virtual Eigen::MatrixXd predict_probs_batch(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    Eigen::MatrixXd out;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Eigen::VectorXd probs = predict_probs(x.row(i));
      if (i == 0) out.resize(x.rows(), probs.size());
      out.row(i) = probs.transpose();
    }
    return out;
  }

  virtual Eigen::MatrixXd predict_survival_batch(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                                 const std::vector<double>& times) const {
    Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(times.size()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      out.row(i) = predict_survival(x.row(i), times).transpose();
    }
    return out;
  }

  virtual Eigen::MatrixXd predict_cif_batch(const Eigen::Ref<const Eigen::MatrixXd>& x, int cause,
                                            const std::vector<double>& times) const {
    Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(times.size()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      out.row(i) = predict_cif(x.row(i), cause, times).transpose();
    }
    return out;
  }
};

}  // namespace cpfilter
