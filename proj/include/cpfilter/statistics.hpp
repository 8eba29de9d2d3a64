#pragma once

// Antisymmetric knockoff statistics W over original/knockoff column
// pairs: the importance difference (cpf), the lasso coefficient
// difference (lcd), and the lasso signed max over first-entry penalties
// (lsm). Each statistic also keeps the per-column scores it contrasted,
// for reporting.

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cpfilter/cpf.hpp"
#include "cpfilter/csv.hpp"
#include "cpfilter/errors.hpp"
#include "cpfilter/lasso.hpp"

namespace cpfilter {

enum class StatisticKind { cpf, lcd, lsm };

inline const char* to_string(StatisticKind k) {
  switch (k) {
    case StatisticKind::cpf: return "cpf";
    case StatisticKind::lcd: return "lcd";
    case StatisticKind::lsm: return "lsm";
  }
  return "?";
}

inline StatisticKind parse_statistic_kind(const std::string& s) {
  if (s == "cpf") return StatisticKind::cpf;
  if (s == "lcd") return StatisticKind::lcd;
  if (s == "lsm") return StatisticKind::lsm;
  throw ValidationError("unknown statistic '" + s + "' (expected cpf, lcd, or lsm)");
}

struct KnockoffStats {
  Eigen::VectorXd w;           // length p
  Eigen::VectorXd z_original;  // per-feature score of the original column
  Eigen::VectorXd z_knockoff;  // per-feature score of its knockoff column
  StatisticKind kind = StatisticKind::cpf;
};

/// W_m = U_m - U_{m+p}.
inline KnockoffStats cpf_statistics(const ImportanceVector& imp) {
  const Eigen::Index len = imp.u.size();
  if (len % 2 != 0) {
    throw OddLengthError("importance vector has odd length " + std::to_string(len));
  }
  const Eigen::Index p = len / 2;
  KnockoffStats stats;
  stats.kind = StatisticKind::cpf;
  stats.z_original = imp.u.head(p);
  stats.z_knockoff = imp.u.tail(p);
  stats.w = stats.z_original - stats.z_knockoff;
  return stats;
}

/// W_j = |beta_j| - |beta_{j+p}|.
inline KnockoffStats lcd_statistics(const LassoModel& model, int p) {
  if (model.beta.size() != 2 * static_cast<Eigen::Index>(p)) {
    throw DimensionMismatchError("coefficient difference needs 2p = " + std::to_string(2 * p) +
                                 " coefficients, model has " + std::to_string(model.beta.size()));
  }
  KnockoffStats stats;
  stats.kind = StatisticKind::lcd;
  stats.z_original = model.beta.head(p).cwiseAbs();
  stats.z_knockoff = model.beta.tail(p).cwiseAbs();
  stats.w = stats.z_original - stats.z_knockoff;
  return stats;
}

/// Z_j is the largest path penalty at which column j enters; W_j =
/// max(Z_j, Z_j-knockoff) signed by which entered first, 0 on ties.
inline KnockoffStats lsm_statistics(const LassoModel& model, int p) {
  if (model.lambda_path.empty()) {
    throw PathMissingError("signed-max statistic needs a fitted penalty path");
  }
  if (model.first_entry_lambda.size() != static_cast<std::size_t>(2 * p)) {
    throw DimensionMismatchError("signed-max statistic needs 2p first-entry penalties");
  }
  KnockoffStats stats;
  stats.kind = StatisticKind::lsm;
  stats.z_original.resize(p);
  stats.z_knockoff.resize(p);
  stats.w.resize(p);
  for (int j = 0; j < p; ++j) {
    const double z = model.first_entry_lambda[static_cast<std::size_t>(j)];
    const double zk = model.first_entry_lambda[static_cast<std::size_t>(j + p)];
    stats.z_original[j] = z;
    stats.z_knockoff[j] = zk;
    if (z == zk) {
      stats.w[j] = 0.0;
    } else {
      stats.w[j] = std::max(z, zk) * (z > zk ? 1.0 : -1.0);
    }
  }
  return stats;
}

/// One row per feature: name, both column scores, W, and the statistic kind.
inline void write_w_csv(const std::filesystem::path& path,
                        const std::vector<std::string>& feature_names,
                        const KnockoffStats& stats) {
  if (static_cast<Eigen::Index>(feature_names.size()) != stats.w.size()) {
    throw DimensionMismatchError("feature name count does not match W length");
  }
  std::ofstream out(path);
  if (!out.is_open()) throw ValidationError("cannot open for writing: " + path.string());
  out << "feature,U_original,U_knockoff,W,statistic_kind\n";
  for (Eigen::Index j = 0; j < stats.w.size(); ++j) {
    out << feature_names[static_cast<std::size_t>(j)] << ','
        << detail::format_double(stats.z_original[j]) << ','
        << detail::format_double(stats.z_knockoff[j]) << ','
        << detail::format_double(stats.w[j]) << ',' << to_string(stats.kind) << '\n';
  }
}

}  // namespace cpfilter
