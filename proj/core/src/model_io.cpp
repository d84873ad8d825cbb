#include "fmmq/model_io.hpp"

#include "fmmq/exceptions.hpp"
#include "fmmq/scoring.hpp"
#include "json_codec.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

namespace fmmq {

using detail::json;

double FittedModel::evaluate(double p, std::span<const double> x_raw) const {
  const auto x = standardizer.transform_factors(x_raw);
  return standardizer.destandardize(eval_model(spec, params, p, x));
}

Eigen::MatrixXd FittedModel::predict(const Dataset& raw, std::span<const double> levels) const {
  Eigen::MatrixXd G = predict_quantiles(spec, params, standardizer.apply(raw), levels);
  for (Eigen::Index i = 0; i < G.size(); ++i) G.data()[i] = standardizer.destandardize(G.data()[i]);
  return G;
}

std::string model_to_json(const FittedModel& model, int indent) {
  check_dimensions(model.spec, model.params);
  json j;
  j["schema"] = "fmmq.model";
  j["schema_version"] = kModelSchemaVersion;
  j["created_at"] = model.created_at;
  j["spec"] = detail::to_json(model.spec);
  j["params"] = detail::to_json(model.params.matrix());
  j["standardizer"] = detail::to_json(model.standardizer);
  j["report"] = detail::to_json(model.report);
  j["config"] = json::parse(model.config_json.empty() ? "{}" : model.config_json);
  if (model.lowrank) {
    json factors = json::array();
    for (const auto& f : model.lowrank->factors) factors.push_back(detail::to_json(f));
    j["lowrank"] = {{"rank", model.lowrank->rank}, {"shift", model.lowrank->shift}, {"factors", factors}};
  }
  return j.dump(indent) + "\n";
}

FittedModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (j.value("schema", std::string{}) != "fmmq.model") throw ConfigError("not an fmmq model file");
    const int version = j.at("schema_version").get<int>();
    if (version != kModelSchemaVersion) {
      throw ConfigError("unsupported model schema version " + std::to_string(version));
    }
    FittedModel m;
    m.created_at = j.value("created_at", std::string{});
    m.spec = detail::spec_from_json(j.at("spec"));
    m.params = ParamMatrix(detail::matrix_from_json(j.at("params")));
    check_dimensions(m.spec, m.params);
    m.standardizer = detail::standardizer_from_json(j.at("standardizer"));
    if (static_cast<int>(m.standardizer.factors.size()) != m.spec.num_factors()) {
      throw ConfigError("standardizer and spec disagree on the number of factors");
    }
    if (j.contains("report")) m.report = detail::report_from_json(j.at("report"));
    m.config_json = j.contains("config") ? j.at("config").dump() : "{}";
    if (j.contains("lowrank")) {
      const auto& l = j.at("lowrank");
      LowRankParams lr;
      lr.rank = l.at("rank").get<int>();
      lr.shift = l.at("shift").get<double>();
      for (const auto& f : l.at("factors")) lr.factors.push_back(detail::matrix_from_json(f));
      lr.validate(m.spec);
      m.lowrank = std::move(lr);
    }
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const FittedModel& model) {
  write_file_atomic(path, model_to_json(model));
}

FittedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace fmmq
