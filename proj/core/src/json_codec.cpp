#include "json_codec.hpp"

#include "fmmq/exceptions.hpp"

#include <algorithm>
#include <cstring>

namespace fmmq::detail {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

json to_json(const KnotVector& k) {
  return json{{"lower", k.lower}, {"upper", k.upper}, {"interior", k.interior}, {"degree", k.degree}};
}

KnotVector knots_from_json(const json& j) {
  check_keys(j, {"lower", "upper", "interior", "degree"}, "knots");
  KnotVector k;
  k.lower = j.at("lower").get<double>();
  k.upper = j.at("upper").get<double>();
  k.interior = field_or(j, "interior", std::vector<double>{});
  k.degree = j.at("degree").get<int>();
  k.validate();
  return k;
}

std::string to_string(Extrapolation e) { return e == Extrapolation::Clamp ? "clamp" : "linear_nonnegative"; }

Extrapolation extrapolation_from_string(const std::string& s) {
  if (s == "clamp") return Extrapolation::Clamp;
  if (s == "linear_nonnegative") return Extrapolation::LinearNonnegative;
  throw ConfigError("unknown extrapolation '" + s + "'");
}

std::string to_string(Mode m) { return m == Mode::Quantile ? "quantile" : "cvar"; }

Mode mode_from_string(const std::string& s) {
  if (s == "quantile") return Mode::Quantile;
  if (s == "cvar") return Mode::CVaR;
  throw ConfigError("unknown mode '" + s + "'");
}

namespace {

const char* kind_name(QuantileBasis::Kind k) {
  switch (k) {
    case QuantileBasis::Kind::Constant: return "constant";
    case QuantileBasis::Kind::Normal: return "normal";
    case QuantileBasis::Kind::Logistic: return "logistic";
    case QuantileBasis::Kind::ExpRight: return "exp_right";
    case QuantileBasis::Kind::ExpLeft: return "exp_left";
    case QuantileBasis::Kind::ISpline: return "ispline";
  }
  return "?";
}

const char* kind_name(CVaRBasis::Kind k) {
  switch (k) {
    case CVaRBasis::Kind::Constant: return "constant";
    case CVaRBasis::Kind::NormalCVaR: return "normal";
    case CVaRBasis::Kind::LogisticCVaR: return "logistic";
    case CVaRBasis::Kind::ExponentialCVaR: return "exponential";
    case CVaRBasis::Kind::ISpline: return "ispline";
  }
  return "?";
}

}  // namespace

json to_json(const ResponseBasis& b) {
  if (const auto* q = std::get_if<QuantileBasis>(&b)) {
    json j{{"kind", kind_name(q->kind())}};
    if (q->kind() == QuantileBasis::Kind::ExpRight || q->kind() == QuantileBasis::Kind::ExpLeft) {
      j["threshold"] = q->threshold();
    }
    if (q->kind() == QuantileBasis::Kind::ISpline) {
      j["knots"] = to_json(q->knots());
      j["index"] = q->index();
    }
    return j;
  }
  const auto& c = std::get<CVaRBasis>(b);
  json j{{"kind", kind_name(c.kind())}};
  if (c.kind() == CVaRBasis::Kind::ISpline) {
    j["knots"] = to_json(c.knots());
    j["index"] = c.index();
  }
  return j;
}

ResponseBasis basis_from_json(const json& j, Mode mode) {
  check_keys(j, {"kind", "threshold", "knots", "index"}, "basis");
  const auto kind = j.at("kind").get<std::string>();
  if (mode == Mode::Quantile) {
    if (kind == "constant") return QuantileBasis::constant();
    if (kind == "normal") return QuantileBasis::normal();
    if (kind == "logistic") return QuantileBasis::logistic();
    if (kind == "exp_right") return QuantileBasis::exp_right(field_or(j, "threshold", 0.75));
    if (kind == "exp_left") return QuantileBasis::exp_left(field_or(j, "threshold", 0.25));
    if (kind == "ispline") return QuantileBasis::ispline(knots_from_json(j.at("knots")), j.at("index").get<int>());
  } else {
    if (kind == "constant") return CVaRBasis::constant();
    if (kind == "normal") return CVaRBasis::normal();
    if (kind == "logistic") return CVaRBasis::logistic();
    if (kind == "exponential") return CVaRBasis::exponential();
    if (kind == "ispline") return CVaRBasis::ispline(knots_from_json(j.at("knots")), j.at("index").get<int>());
  }
  throw ConfigError("unknown " + to_string(mode) + " basis kind '" + kind + "'");
}

json to_json(const ModelSpec& spec) {
  json bases = json::array();
  for (const auto& b : spec.bases) bases.push_back(to_json(b));
  json factors = json::array();
  for (const auto& f : spec.factors) {
    factors.push_back({{"knots", to_json(f.knots)}, {"extrapolation", to_string(f.extrapolation)}});
  }
  return json{{"mode", to_string(spec.mode)}, {"bases", bases}, {"factors", factors}};
}

ModelSpec spec_from_json(const json& j) {
  check_keys(j, {"mode", "bases", "factors"}, "spec");
  ModelSpec spec;
  spec.mode = mode_from_string(j.at("mode").get<std::string>());
  for (const auto& b : j.at("bases")) spec.bases.push_back(basis_from_json(b, spec.mode));
  for (const auto& f : j.at("factors")) {
    check_keys(f, {"knots", "extrapolation"}, "factor");
    FactorSplineSpec fs;
    fs.knots = knots_from_json(f.at("knots"));
    fs.extrapolation = extrapolation_from_string(field_or<std::string>(f, "extrapolation", "clamp"));
    spec.factors.push_back(std::move(fs));
  }
  spec.validate();
  return spec;
}

json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array()) throw ConfigError("matrix: expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& r = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(r.size()) != cols) throw ConfigError("matrix: ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = r.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

namespace {

json scale_json(const ColumnScale& s) { return json{{"name", s.name}, {"median", s.median}, {"iqr", s.iqr}}; }

ColumnScale scale_from_json(const json& j) {
  ColumnScale s;
  s.name = j.at("name").get<std::string>();
  s.median = j.at("median").get<double>();
  s.iqr = j.at("iqr").get<double>();
  if (!(s.iqr > 0.0)) throw ConfigError("standardizer: IQR of '" + s.name + "' must be positive");
  return s;
}

}  // namespace

json to_json(const Standardizer& s) {
  json f = json::array();
  for (const auto& c : s.factors) f.push_back(scale_json(c));
  return json{{"response", scale_json(s.response)}, {"factors", f}};
}

Standardizer standardizer_from_json(const json& j) {
  Standardizer s;
  s.response = scale_from_json(j.at("response"));
  for (const auto& f : j.at("factors")) s.factors.push_back(scale_from_json(f));
  return s;
}

json to_json(const Penalty& p) {
  const char* type = p.type == Penalty::Type::None ? "none" : p.type == Penalty::Type::SquaredDiff ? "squared_diff" : "abs_diff";
  return json{{"type", type}, {"order", p.order}, {"lambda", p.lambda}};
}

Penalty penalty_from_json(const json& j) {
  check_keys(j, {"type", "order", "lambda"}, "penalty");
  Penalty p;
  const auto type = field_or<std::string>(j, "type", "none");
  if (type == "none") {
    p.type = Penalty::Type::None;
  } else if (type == "squared_diff") {
    p.type = Penalty::Type::SquaredDiff;
  } else if (type == "abs_diff") {
    p.type = Penalty::Type::AbsDiff;
  } else {
    throw ConfigError("unknown penalty type '" + type + "'");
  }
  p.order = field_or(j, "order", 1);
  p.lambda = field_or(j, "lambda", 0.0);
  return p;
}

json to_json(const CalibrationConfig& c) {
  return json{{"levels", c.levels},
              {"weights", c.weights},
              {"penalty", to_json(c.penalty)},
              {"solver", {{"tolerance_gap", c.solver.tolerance_gap}, {"max_iterations", c.solver.max_iterations}}},
              {"error", c.error == CalibrationError::Pinball ? "pinball" : "superquantile"},
              {"beta_grid_size", c.beta_grid_size},
              {"beta_max", c.beta_max},
              {"enforce_nonnegativity", c.enforce_nonnegativity}};
}

CalibrationConfig calibration_from_json(const json& j) {
  check_keys(j, {"levels", "weights", "penalty", "solver", "error", "beta_grid_size", "beta_max", "enforce_nonnegativity"},
             "calibration");
  CalibrationConfig c = CalibrationConfig::default_grid();
  if (j.contains("levels")) {
    c.levels = j.at("levels").get<std::vector<double>>();
    c.weights.assign(c.levels.size(), 1.0 / static_cast<double>(c.levels.size()));
  }
  if (j.contains("weights")) {
    const auto raw = j.at("weights").get<std::vector<double>>();
    if (raw.size() != c.levels.size()) throw ConfigError("calibration: weights and levels differ in length");
    c.weights = normalize_weights(raw);
  }
  if (j.contains("penalty")) c.penalty = penalty_from_json(j.at("penalty"));
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    check_keys(s, {"tolerance_gap", "max_iterations"}, "calibration.solver");
    c.solver.tolerance_gap = field_or(s, "tolerance_gap", c.solver.tolerance_gap);
    c.solver.max_iterations = field_or(s, "max_iterations", c.solver.max_iterations);
  }
  const auto err = field_or<std::string>(j, "error", "pinball");
  if (err == "pinball") {
    c.error = CalibrationError::Pinball;
  } else if (err == "superquantile") {
    c.error = CalibrationError::Superquantile;
  } else {
    throw ConfigError("unknown calibration error '" + err + "'");
  }
  c.beta_grid_size = field_or(j, "beta_grid_size", c.beta_grid_size);
  c.beta_max = field_or(j, "beta_max", c.beta_max);
  c.enforce_nonnegativity = field_or(j, "enforce_nonnegativity", c.enforce_nonnegativity);
  c.validate();
  return c;
}

json to_json(const SolveReport& r) {
  return json{{"objective", r.objective},
              {"solver_objective", r.solver_objective},
              {"gap", r.gap},
              {"primal_infeasibility", r.primal_infeasibility},
              {"dual_infeasibility", r.dual_infeasibility},
              {"iterations", r.iterations},
              {"status", r.status},
              {"warnings", r.warnings}};
}

SolveReport report_from_json(const json& j) {
  SolveReport r;
  r.objective = field_or(j, "objective", 0.0);
  r.solver_objective = field_or(j, "solver_objective", 0.0);
  r.gap = field_or(j, "gap", 0.0);
  r.primal_infeasibility = field_or(j, "primal_infeasibility", 0.0);
  r.dual_infeasibility = field_or(j, "dual_infeasibility", 0.0);
  r.iterations = field_or(j, "iterations", 0);
  r.status = field_or<std::string>(j, "status", "");
  r.warnings = field_or(j, "warnings", std::vector<std::string>{});
  return r;
}

}  // namespace fmmq::detail
