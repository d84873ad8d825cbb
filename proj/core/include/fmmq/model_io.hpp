#pragma once

#include "fmmq/calibrate.hpp"
#include "fmmq/dataset.hpp"
#include "fmmq/model.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>

namespace fmmq {

inline constexpr int kModelSchemaVersion = 1;

/// A calibrated model together with everything needed to predict in original units.
struct FittedModel {
  ModelSpec spec;
  ParamMatrix params;
  /// Maps raw data to the units the model was fit in.
  Standardizer standardizer;
  std::optional<LowRankParams> lowrank;
  SolveReport report;
  /// Calibration config echo, stored as a JSON document.
  std::string config_json = "{}";
  /// ISO-8601 UTC; not part of the deterministic content.
  std::string created_at;

  /// G(p, x) in original units; x is in raw units.
  double evaluate(double p, std::span<const double> x_raw) const;
  /// N x L quantiles in original units for each row of a raw dataset.
  Eigen::MatrixXd predict(const Dataset& raw, std::span<const double> levels) const;
};

std::string model_to_json(const FittedModel& model, int indent = 2);
/// Throws ConfigError on an unknown schema version or malformed content.
FittedModel model_from_json(const std::string& text);

void save_model(const std::filesystem::path& path, const FittedModel& model);
FittedModel load_model(const std::filesystem::path& path);

/// Current time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

}  // namespace fmmq
