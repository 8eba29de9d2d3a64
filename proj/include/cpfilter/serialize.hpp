#pragma once

// Versioned JSON weight format for trained models. The payload carries
// exactly the state needed to reproduce predictions (plus the lasso path
// fields the signed-max statistic reads); fit traces and solver
// diagnostics are not part of the format. Doubles survive a round trip
// bit-for-bit: the writer emits shortest exact decimal forms.

#include <json.hpp>

#include <Eigen/Dense>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "cpfilter/competing_risks.hpp"
#include "cpfilter/cox.hpp"
#include "cpfilter/errors.hpp"
#include "cpfilter/lasso.hpp"
#include "cpfilter/mlp.hpp"
#include "cpfilter/model.hpp"
#include "cpfilter/model_config.hpp"
#include "cpfilter/version.hpp"

namespace cpfilter {

inline constexpr int kWeightFormatVersion = 1;

namespace detail {

inline std::vector<double> flatten_row_major(const Eigen::MatrixXd& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  }
  return flat;
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline nlohmann::json stack_to_json(const nn::DenseStack& stack) {
  nlohmann::json layers = nlohmann::json::array();
  for (int l = 0; l < stack.n_layers(); ++l) {
    layers.push_back({{"rows", stack.w[static_cast<std::size_t>(l)].rows()},
                      {"cols", stack.w[static_cast<std::size_t>(l)].cols()},
                      {"weights", flatten_row_major(stack.w[static_cast<std::size_t>(l)])},
                      {"bias", to_std(stack.b[static_cast<std::size_t>(l)])}});
  }
  return {{"activation", to_string(stack.activation)},
          {"leaky_alpha", stack.leaky_alpha},
          {"layers", layers}};
}

inline nn::DenseStack stack_from_json(const nlohmann::json& j) {
  require_known_keys(j, {"activation", "leaky_alpha", "layers"}, "weight stack");
  nn::DenseStack stack;
  stack.activation = parse_activation(j.at("activation"));
  stack.leaky_alpha = j.value("leaky_alpha", stack.leaky_alpha);
  const auto& layers = j.at("layers");
  if (!layers.is_array() || layers.empty()) {
    throw ValidationError("weight stack needs at least one layer");
  }
  Eigen::Index prev_out = -1;
  for (const auto& layer : layers) {
    require_known_keys(layer, {"rows", "cols", "weights", "bias"}, "weight layer");
    const Eigen::Index rows = layer.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = layer.at("cols").get<Eigen::Index>();
    const auto flat = layer.at("weights").get<std::vector<double>>();
    const auto bias = layer.at("bias").get<std::vector<double>>();
    if (rows < 1 || cols < 1 ||
        static_cast<Eigen::Index>(flat.size()) != rows * cols ||
        static_cast<Eigen::Index>(bias.size()) != rows) {
      throw ValidationError("weight layer dimensions do not match its payload");
    }
    if (prev_out >= 0 && cols != prev_out) {
      throw ValidationError("weight layers do not chain: input width mismatch");
    }
    prev_out = rows;
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        w(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
      }
    }
    stack.w.push_back(std::move(w));
    stack.b.push_back(to_eigen(bias));
  }
  return stack;
}

inline nlohmann::json weight_envelope(const char* model_type) {
  nlohmann::json j;
  j["format_version"] = kWeightFormatVersion;
  j["library_version"] = kVersion;
  j["model_type"] = model_type;
  return j;
}

inline void check_envelope(const nlohmann::json& j) {
  if (!j.contains("format_version") || !j.contains("model_type")) {
    throw ValidationError("weight payload is missing format_version or model_type");
  }
  const int version = j.at("format_version").get<int>();
  if (version != kWeightFormatVersion) {
    throw ValidationError("unsupported weight format_version " + std::to_string(version) +
                          " (this build reads version " +
                          std::to_string(kWeightFormatVersion) + ")");
  }
}

}  // namespace detail

inline nlohmann::json serialize_model(const LassoModel& m) {
  nlohmann::json j = detail::weight_envelope("lasso");
  j["family"] = to_string(m.family);
  j["beta"] = detail::to_std(m.beta);
  j["intercept"] = m.intercept;
  j["lambda"] = m.lambda;
  j["lambda_path"] = m.lambda_path;
  j["first_entry_lambda"] = m.first_entry_lambda;
  return j;
}

inline nlohmann::json serialize_model(const MlpModel& m) {
  nlohmann::json j = detail::weight_envelope("mlp");
  j["head"] = m.head == MlpHead::scalar ? "scalar" : "binary";
  j["target_mean"] = m.target_mean;
  j["target_scale"] = m.target_scale;
  j["stack"] = detail::stack_to_json(m.stack);
  return j;
}

inline nlohmann::json serialize_model(const CoxModel& m) {
  nlohmann::json j = detail::weight_envelope(m.network ? "cox_network" : "cox_linear");
  if (m.network) {
    j["stack"] = detail::stack_to_json(m.stack);
  } else {
    j["beta"] = detail::to_std(m.beta);
  }
  j["baseline"] = {{"times", m.baseline.times}, {"cum_hazard", m.baseline.cum_hazard}};
  return j;
}

inline nlohmann::json serialize_model(const DiscreteTimeCrModel& m) {
  nlohmann::json j = detail::weight_envelope("discrete_cr");
  j["cutpoints"] = m.cutpoints;
  j["stack"] = detail::stack_to_json(m.stack);
  return j;
}

/// Runtime dispatch over the supported model classes.
inline nlohmann::json serialize_model(const PredictionModel& m) {
  if (const auto* lasso = dynamic_cast<const LassoModel*>(&m)) return serialize_model(*lasso);
  if (const auto* mlp = dynamic_cast<const MlpModel*>(&m)) return serialize_model(*mlp);
  if (const auto* cox = dynamic_cast<const CoxModel*>(&m)) return serialize_model(*cox);
  if (const auto* cr = dynamic_cast<const DiscreteTimeCrModel*>(&m)) return serialize_model(*cr);
  throw ValidationError("model type does not support weight serialization");
}

inline std::unique_ptr<PredictionModel> deserialize_model(const nlohmann::json& j) {
  detail::check_envelope(j);
  const std::string type = j.at("model_type");
  if (type == "lasso") {
    auto m = std::make_unique<LassoModel>();
    m->family = parse_lasso_family(j.at("family"));
    m->beta = detail::to_eigen(j.at("beta").get<std::vector<double>>());
    m->intercept = j.at("intercept").get<double>();
    m->lambda = j.at("lambda").get<double>();
    m->lambda_path = j.value("lambda_path", std::vector<double>{});
    m->first_entry_lambda = j.value("first_entry_lambda", std::vector<double>{});
    if (!m->first_entry_lambda.empty() &&
        m->first_entry_lambda.size() != static_cast<std::size_t>(m->beta.size())) {
      throw ValidationError("first_entry_lambda length does not match beta");
    }
    return m;
  }
  if (type == "mlp") {
    auto m = std::make_unique<MlpModel>();
    const std::string head = j.at("head");
    if (head == "scalar") {
      m->head = MlpHead::scalar;
    } else if (head == "binary") {
      m->head = MlpHead::binary;
    } else {
      throw ValidationError("unknown mlp head '" + head + "'");
    }
    m->target_mean = j.at("target_mean").get<double>();
    m->target_scale = j.at("target_scale").get<double>();
    m->stack = detail::stack_from_json(j.at("stack"));
    if (m->stack.output_dim() != 1) {
      throw ValidationError("mlp weight stack must end in a single output");
    }
    return m;
  }
  if (type == "cox_linear" || type == "cox_network") {
    auto m = std::make_unique<CoxModel>();
    m->network = type == "cox_network";
    if (m->network) {
      m->stack = detail::stack_from_json(j.at("stack"));
      if (m->stack.output_dim() != 1) {
        throw ValidationError("cox weight stack must end in a single output");
      }
    } else {
      m->beta = detail::to_eigen(j.at("beta").get<std::vector<double>>());
    }
    const auto& base = j.at("baseline");
    detail::require_known_keys(base, {"times", "cum_hazard"}, "baseline hazard");
    m->baseline.times = base.at("times").get<std::vector<double>>();
    m->baseline.cum_hazard = base.at("cum_hazard").get<std::vector<double>>();
    if (m->baseline.times.size() != m->baseline.cum_hazard.size()) {
      throw ValidationError("baseline hazard arrays differ in length");
    }
    return m;
  }
  if (type == "discrete_cr") {
    auto m = std::make_unique<DiscreteTimeCrModel>();
    m->cutpoints = j.at("cutpoints").get<std::vector<double>>();
    m->stack = detail::stack_from_json(j.at("stack"));
    if (m->cutpoints.size() < 2) {
      throw ValidationError("discrete_cr weights need at least two cutpoints");
    }
    if (m->stack.output_dim() != 2 * static_cast<int>(m->cutpoints.size()) + 1) {
      throw ValidationError("discrete_cr stack output does not match 2K+1 logits");
    }
    return m;
  }
  throw ValidationError("unknown model_type '" + type + "' in weight payload");
}

inline void save_model(const PredictionModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open '" + path + "' for writing");
  out << serialize_model(m).dump(2) << '\n';
  if (!out) throw ComputeError("failed while writing '" + path + "'");
}

inline std::unique_ptr<PredictionModel> load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("invalid JSON in '" + path + "': " + e.what());
  }
  return deserialize_model(j);
}

}  // namespace cpfilter
