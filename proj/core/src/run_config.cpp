#include "fmmq/run_config.hpp"

#include "fmmq/exceptions.hpp"
#include "json_codec.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace fmmq {

using detail::check_keys;
using detail::field_or;
using detail::json;

ModelConfig ModelConfig::mixture_default(int num_factors) {
  ModelConfig m;
  m.bases = {QuantileBasis::constant(), QuantileBasis::normal(), QuantileBasis::exp_right(0.75),
             QuantileBasis::exp_left(0.25)};
  m.factors.assign(static_cast<std::size_t>(num_factors), FactorConfig{});
  return m;
}

ModelSpec ModelConfig::build(const Dataset& data) const {
  if (static_cast<int>(factors.size()) != data.num_factors()) {
    throw ConfigError("model declares " + std::to_string(factors.size()) + " factors but the data has " +
                      std::to_string(data.num_factors()));
  }
  ModelSpec spec;
  spec.mode = mode;
  spec.bases = bases;
  for (int k = 0; k < data.num_factors(); ++k) {
    const FactorConfig& f = factors[static_cast<std::size_t>(k)];
    std::vector<double> col(static_cast<std::size_t>(data.size()));
    for (Eigen::Index n = 0; n < data.size(); ++n) col[static_cast<std::size_t>(n)] = data.X(n, k);
    if (col.empty() && !(f.lower && f.upper)) throw InputError("cannot place knots without data");
    const auto [mn, mx] = col.empty() ? std::pair{0.0, 0.0} : [&] {
      const auto [a, b] = std::minmax_element(col.begin(), col.end());
      return std::pair{*a, *b};
    }();
    const double lo = f.lower.value_or(mn);
    const double hi = f.upper.value_or(mx);
    if (!(hi > lo)) {
      throw InputError("factor '" + data.factor_names[static_cast<std::size_t>(k)] + "' has an empty range");
    }
    FactorSplineSpec fs;
    fs.extrapolation = f.extrapolation;
    switch (f.placement) {
      case FactorConfig::Placement::Equidistant:
        fs.knots = equidistant_knots(lo, hi, f.n_interior, f.degree);
        break;
      case FactorConfig::Placement::Quantile:
        fs.knots = quantile_knots(col, f.n_interior, f.degree);
        fs.knots.lower = lo;
        fs.knots.upper = hi;
        fs.knots.validate();
        break;
      case FactorConfig::Placement::Explicit:
        fs.knots = KnotVector{lo, hi, f.interior, f.degree};
        fs.knots.validate();
        break;
    }
    spec.factors.push_back(std::move(fs));
  }
  spec.validate();
  return spec;
}

std::string RunConfig::calibration_json() const { return detail::to_json(calibration).dump(); }

void RunConfig::validate() const {
  if (schema_version != kRunConfigSchemaVersion) {
    throw ConfigError("unsupported config schema_version " + std::to_string(schema_version));
  }
  calibration.validate();
  scoring.crps.validate();
  for (const auto& iv : scoring.intervals) {
    if (!(iv.lo > 0.0 && iv.lo < iv.hi && iv.hi < 1.0)) throw ConfigError("coverage intervals need 0 < lo < hi < 1");
  }
  for (double p : scoring.predict_levels) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("predict levels must lie in (0, 1)");
  }
  for (double p : scoring.surface_levels) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("surface levels must lie in (0, 1)");
  }
  if (scoring.surface_points < 2) throw ConfigError("surface_points must be at least 2");
  if (cv.k < 2) throw ConfigError("cv.k must be at least 2");
  if (als.ranks.empty()) throw ConfigError("als.ranks is empty");
  for (int r : als.ranks) {
    if (r < 1) throw ConfigError("ALS ranks must be positive");
  }
  if (als.steps < 0) throw ConfigError("als.steps must be nonnegative");
  if (!data.factors.empty() && model.factors.size() != data.factors.size()) {
    throw ConfigError("model.factors must have one entry per data factor");
  }
  if (model.bases.empty()) throw ConfigError("model.bases is empty");
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  if (path.is_absolute() || base.empty()) return path;
  return base / path;
}

FactorConfig factor_from_json(const json& j, FactorConfig f) {
  check_keys(j, {"placement", "n_interior", "degree", "lower", "upper", "interior", "extrapolation"}, "model.factor");
  const auto placement = field_or<std::string>(j, "placement", "");
  if (placement == "equidistant") {
    f.placement = FactorConfig::Placement::Equidistant;
  } else if (placement == "quantile") {
    f.placement = FactorConfig::Placement::Quantile;
  } else if (placement == "explicit") {
    f.placement = FactorConfig::Placement::Explicit;
  } else if (!placement.empty()) {
    throw ConfigError("unknown knot placement '" + placement + "'");
  }
  f.n_interior = field_or(j, "n_interior", f.n_interior);
  f.degree = field_or(j, "degree", f.degree);
  if (j.contains("lower")) f.lower = j.at("lower").get<double>();
  if (j.contains("upper")) f.upper = j.at("upper").get<double>();
  if (j.contains("interior")) {
    f.interior = j.at("interior").get<std::vector<double>>();
    if (placement.empty()) f.placement = FactorConfig::Placement::Explicit;
  }
  if (j.contains("extrapolation")) f.extrapolation = detail::extrapolation_from_string(j.at("extrapolation").get<std::string>());
  return f;
}

// Bases accept everything the model file does plus an "ispline_family" entry
// that expands to every element of an I-spline basis on [0, 1].
void append_bases(const json& j, Mode mode, std::vector<ResponseBasis>& out) {
  if (j.value("kind", std::string{}) != "ispline_family") {
    out.push_back(detail::basis_from_json(j, mode));
    return;
  }
  check_keys(j, {"kind", "degree", "n_interior", "interior"}, "ispline_family");
  const int degree = field_or(j, "degree", 3);
  KnotVector kv = j.contains("interior") ? KnotVector{0.0, 1.0, j.at("interior").get<std::vector<double>>(), degree}
                                         : equidistant_knots(0.0, 1.0, field_or(j, "n_interior", 5), degree);
  kv.validate();
  for (int i = 0; i < kv.basis_count(); ++i) {
    if (mode == Mode::Quantile) {
      out.push_back(QuantileBasis::ispline(kv, i));
    } else {
      out.push_back(CVaRBasis::ispline(kv, i));
    }
  }
}

ModelConfig model_from_json(const json& j, int num_factors) {
  check_keys(j, {"mode", "bases", "factors", "factor_defaults"}, "model");
  ModelConfig m = ModelConfig::mixture_default(num_factors);
  m.mode = detail::mode_from_string(field_or<std::string>(j, "mode", "quantile"));
  if (j.contains("bases")) {
    m.bases.clear();
    for (const auto& b : j.at("bases")) append_bases(b, m.mode, m.bases);
  } else if (m.mode == Mode::CVaR) {
    m.bases = {CVaRBasis::constant(), CVaRBasis::exponential()};
    append_bases(json{{"kind", "ispline_family"}, {"degree", 3}, {"n_interior", 5}}, m.mode, m.bases);
  }
  FactorConfig defaults;
  if (j.contains("factor_defaults")) defaults = factor_from_json(j.at("factor_defaults"), defaults);
  m.factors.assign(static_cast<std::size_t>(num_factors), defaults);
  if (j.contains("factors")) {
    m.factors.clear();
    for (const auto& f : j.at("factors")) m.factors.push_back(factor_from_json(f, defaults));
  }
  return m;
}

StandardizeMode standardize_mode(const std::string& s) {
  if (s == "per_fold") return StandardizeMode::PerFold;
  if (s == "global") return StandardizeMode::Global;
  if (s == "none") return StandardizeMode::None;
  throw ConfigError("unknown cv.standardize '" + s + "'");
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    check_keys(j, {"schema_version", "data", "model", "calibration", "scoring", "cv", "als", "fetch", "output_dir"},
               "config");
    RunConfig c;
    c.schema_version = field_or(j, "schema_version", -1);
    if (c.schema_version != kRunConfigSchemaVersion) {
      throw ConfigError("unsupported or missing config schema_version (expected " +
                        std::to_string(kRunConfigSchemaVersion) + ")");
    }
    if (j.contains("data")) {
      const auto& d = j.at("data");
      check_keys(d, {"path", "response", "factors", "standardize"}, "data");
      if (d.contains("path")) c.data.path = resolve(base_dir, d.at("path").get<std::string>());
      c.data.response = field_or<std::string>(d, "response", "");
      c.data.factors = field_or(d, "factors", std::vector<std::string>{});
      c.data.standardize = field_or(d, "standardize", true);
    }
    const int num_factors = static_cast<int>(c.data.factors.size());
    c.model = j.contains("model") ? model_from_json(j.at("model"), num_factors) : ModelConfig::mixture_default(num_factors);
    if (j.contains("calibration")) c.calibration = detail::calibration_from_json(j.at("calibration"));
    if (j.contains("scoring")) {
      const auto& s = j.at("scoring");
      check_keys(s, {"quadrature", "nodes", "intervals", "predict_levels", "surface_levels", "surface_points"}, "scoring");
      const auto q = field_or<std::string>(s, "quadrature", "uniform");
      if (q == "uniform") {
        c.scoring.crps.quadrature = CRPSConfig::Quadrature::UniformGrid;
      } else if (q == "gauss_legendre") {
        c.scoring.crps.quadrature = CRPSConfig::Quadrature::GaussLegendre;
      } else {
        throw ConfigError("unknown quadrature '" + q + "'");
      }
      c.scoring.crps.nodes = field_or(s, "nodes", c.scoring.crps.nodes);
      if (s.contains("intervals")) {
        c.scoring.intervals.clear();
        for (const auto& iv : s.at("intervals")) {
          const auto pair = iv.get<std::vector<double>>();
          if (pair.size() != 2) throw ConfigError("coverage intervals are [lo, hi] pairs");
          c.scoring.intervals.push_back({pair[0], pair[1], pair[1] - pair[0]});
        }
      }
      c.scoring.predict_levels = field_or(s, "predict_levels", c.scoring.predict_levels);
      c.scoring.surface_levels = field_or(s, "surface_levels", c.scoring.surface_levels);
      c.scoring.surface_points = field_or(s, "surface_points", c.scoring.surface_points);
    }
    if (j.contains("cv")) {
      const auto& v = j.at("cv");
      check_keys(v, {"k", "seed", "standardize"}, "cv");
      c.cv.k = field_or(v, "k", c.cv.k);
      c.cv.seed = field_or(v, "seed", c.cv.seed);
      c.cv.standardize = standardize_mode(field_or<std::string>(v, "standardize", "per_fold"));
    }
    if (j.contains("als")) {
      const auto& a = j.at("als");
      check_keys(a, {"ranks", "steps", "epsilon", "max_sweeps", "init", "seed"}, "als");
      c.als.ranks = field_or(a, "ranks", c.als.ranks);
      c.als.steps = field_or(a, "steps", c.als.steps);
      c.als.epsilon = field_or(a, "epsilon", c.als.epsilon);
      c.als.max_sweeps = field_or(a, "max_sweeps", c.als.max_sweeps);
      const auto init = field_or<std::string>(a, "init", "random");
      if (init == "random") {
        c.als.init = ALSConfig::Init::RandomNonneg;
      } else if (init == "ones") {
        c.als.init = ALSConfig::Init::Ones;
      } else {
        throw ConfigError("unknown als.init '" + init + "'");
      }
      c.als.seed = field_or(a, "seed", c.als.seed);
    }
    if (j.contains("fetch")) {
      const auto& f = j.at("fetch");
      check_keys(f, {"series", "cache_dir", "output", "offline", "start", "end"}, "fetch");
      for (const auto& s : f.at("series")) {
        check_keys(s, {"id", "column", "pc1"}, "fetch.series");
        FetchSeries fs;
        fs.id = s.at("id").get<std::string>();
        fs.column = field_or(s, "column", fs.id);
        fs.pc1 = field_or(s, "pc1", true);
        c.fetch.series.push_back(std::move(fs));
      }
      if (f.contains("cache_dir")) c.fetch.cache_dir = resolve(base_dir, f.at("cache_dir").get<std::string>());
      if (f.contains("output")) c.fetch.output = resolve(base_dir, f.at("output").get<std::string>());
      c.fetch.offline = field_or(f, "offline", false);
      c.fetch.start = field_or(f, "start", std::string());
      c.fetch.end = field_or(f, "end", std::string());
      for (const auto* d : {&c.fetch.start, &c.fetch.end}) {
        if (!d->empty() && (d->size() != 10 || (*d)[4] != '-' || (*d)[7] != '-')) {
          throw ConfigError("fetch dates must be YYYY-MM-DD, got '" + *d + "'");
        }
      }
    }
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path());
}

void apply_overrides(RunConfig& config, const RunOverrides& overrides) {
  if (overrides.seed) {
    config.cv.seed = *overrides.seed;
    config.als.seed = *overrides.seed;
    config.calibration.solver.seed = *overrides.seed;
  }
  if (overrides.rank) config.als.ranks = {*overrides.rank};
  if (overrides.levels) {
    config.calibration.levels = *overrides.levels;
    config.calibration.weights.assign(overrides.levels->size(), 1.0 / static_cast<double>(overrides.levels->size()));
    config.scoring.predict_levels = *overrides.levels;
    config.scoring.surface_levels = *overrides.levels;
  }
  config.validate();
}

std::vector<double> parse_level_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse level '" + item + "'");
    }
    if (item.find_first_not_of(" \t", used) != std::string::npos) throw ConfigError("cannot parse level '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty level list");
  return out;
}

Dataset load_data(const RunConfig& config) {
  if (config.data.path.empty()) throw ConfigError("config has no data.path");
  if (config.data.response.empty()) throw ConfigError("config has no data.response");
  if (config.data.factors.empty()) throw ConfigError("config needs at least one data factor");
  return load_csv(config.data.path, config.data.response, config.data.factors);
}

}  // namespace fmmq
