#pragma once

// JSON conversions shared by the model file and run config readers.

#include "fmmq/calibrate.hpp"
#include "fmmq/dataset.hpp"
#include "fmmq/model.hpp"

#include <json.hpp>

#include <initializer_list>
#include <string>

namespace fmmq::detail {

using nlohmann::json;

/// Throws ConfigError on keys outside `allowed` (catches typos in hand-written files).
void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where);

template <class T>
T field_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

json to_json(const KnotVector& k);
KnotVector knots_from_json(const json& j);

std::string to_string(Extrapolation e);
Extrapolation extrapolation_from_string(const std::string& s);
std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

json to_json(const ResponseBasis& b);
ResponseBasis basis_from_json(const json& j, Mode mode);

json to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const json& j);

json to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const json& j);

json to_json(const Standardizer& s);
Standardizer standardizer_from_json(const json& j);

json to_json(const Penalty& p);
Penalty penalty_from_json(const json& j);

json to_json(const CalibrationConfig& c);
/// Missing levels fall back to the default grid; weights are normalized.
CalibrationConfig calibration_from_json(const json& j);

json to_json(const SolveReport& r);
SolveReport report_from_json(const json& j);

}  // namespace fmmq::detail
