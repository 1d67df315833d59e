#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cronos/am.hpp"
#include "cronos/data.hpp"
#include "cronos/linops.hpp"
#include "cronos/solver.hpp"

namespace cronos {

inline constexpr int kModelVersion = 1;

/// Everything needed to predict on raw (unstandardized) rows.
struct Model {
  std::string task;                 ///< "cronos", "cronos-general" or "cronos-am"
  MlpParams params;                 ///< empty for two-layer models
  GateSet gates;
  ConvexState state;
  Standardization standardization;  ///< empty if the data was used as-is
};

/// Standardizes x with the stored statistics, then evaluates the network.
std::vector<double> model_predict(const Model& model, const Matrix& x);

/// JSON with 17 significant digits, so doubles round-trip exactly.
void save_model(const std::string& path, const Model& model);
Model load_model(const std::string& path);

void to_json(nlohmann::json& j, const Model& m);
/// Throws std::runtime_error on an unknown format or version.
void from_json(const nlohmann::json& j, Model& m);

}  // namespace cronos
