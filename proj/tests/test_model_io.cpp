#include "fmmq/exceptions.hpp"
#include "fmmq/lowrank.hpp"
#include "fmmq/model_io.hpp"
#include "test_util.hpp"

#include <json.hpp>

#include <fstream>
#include <random>
#include <regex>

using namespace fmmq;

namespace {

std::vector<ModelSpec> assorted_specs() {
  std::vector<ModelSpec> out;
  out.push_back(linear_normal_spec(-1.0, 2.0));
  {
    ModelSpec s;
    s.bases = {QuantileBasis::constant(), QuantileBasis::logistic(), QuantileBasis::exp_right(0.7),
               QuantileBasis::exp_left(0.2)};
    s.factors = {FactorSplineSpec{equidistant_knots(0.0, 1.0, 2, 3), Extrapolation::LinearNonnegative},
                 FactorSplineSpec{KnotVector{-2.0, 2.0, {-0.5, 0.1}, 2}, Extrapolation::Clamp}};
    out.push_back(s);
  }
  {
    const KnotVector pk = equidistant_knots(0.0, 1.0, 3, 2);
    const std::vector<FactorSplineSpec> f{FactorSplineSpec{equidistant_knots(0.0, 5.0, 1, 1), Extrapolation::Clamp}};
    out.push_back(quantile_process_spec(pk, f));
  }
  {
    ModelSpec s;
    s.mode = Mode::CVaR;
    s.bases = {CVaRBasis::constant(), CVaRBasis::normal(), CVaRBasis::logistic(), CVaRBasis::exponential(),
               CVaRBasis::ispline(equidistant_knots(0.0, 1.0, 1, 2), 1)};
    s.factors = {FactorSplineSpec{equidistant_knots(0.0, 1.0, 1, 1), Extrapolation::Clamp}};
    out.push_back(s);
  }
  return out;
}

FittedModel make_model(const ModelSpec& spec, std::mt19937_64& rng) {
  FittedModel m;
  m.spec = spec;
  m.params = test::random_admissible(spec, rng);
  m.standardizer.response = ColumnScale{"y", 1.5, 2.25};
  for (int k = 0; k < spec.num_factors(); ++k) {
    m.standardizer.factors.push_back(ColumnScale{"x" + std::to_string(k), 0.1 * k, 1.0 + k});
  }
  m.report.objective = 0.123456789012345;
  m.report.status = "optimal";
  m.report.warnings = {"a warning"};
  m.config_json = R"({"levels":[0.1,0.5,0.9]})";
  m.created_at = "2026-01-02T03:04:05Z";
  return m;
}

}  // namespace

TEST(ModelIo, RoundTripEvaluatesIdentically) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& spec : assorted_specs()) {
    const FittedModel m = make_model(spec, rng);
    const FittedModel back = model_from_json(model_to_json(m));
    EXPECT_EQ(back.params.matrix(), m.params.matrix());
    EXPECT_EQ(back.standardizer, m.standardizer);
    EXPECT_EQ(back.report.status, "optimal");
    EXPECT_EQ(back.report.warnings, m.report.warnings);
    EXPECT_EQ(back.report.objective, m.report.objective);
    EXPECT_EQ(back.created_at, m.created_at);
    EXPECT_EQ(model_to_json(back), model_to_json(m));
    std::vector<double> x(static_cast<std::size_t>(spec.num_factors()));
    for (int t = 0; t < 1000; ++t) {
      const double p = 0.001 + 0.998 * u(rng);
      for (auto& v : x) v = 6.0 * u(rng) - 2.0;
      EXPECT_NEAR(back.evaluate(p, x), m.evaluate(p, x), 1e-12);
    }
  }
}

TEST(ModelIo, PredictionsAreInOriginalUnits) {
  std::mt19937_64 rng(2);
  const FittedModel m = make_model(linear_normal_spec(-1.0, 2.0), rng);
  Dataset raw;
  raw.factor_names = {"x0"};
  raw.y = Eigen::VectorXd::Zero(3);
  raw.X = RowMatrix(3, 1);
  raw.X << -0.5, 0.7, 1.9;
  const std::vector<double> levels{0.1, 0.5, 0.9};
  const Eigen::MatrixXd G = m.predict(raw, levels);
  for (Eigen::Index n = 0; n < 3; ++n) {
    const std::vector<double> z{m.standardizer.factors[0].forward(raw.X(n, 0))};
    for (int l = 0; l < 3; ++l) {
      const double model_units = eval_model(m.spec, m.params, levels[static_cast<std::size_t>(l)], z);
      EXPECT_NEAR(G(n, l), 2.25 * model_units + 1.5, 1e-12);
      EXPECT_NEAR(G(n, l), m.evaluate(levels[static_cast<std::size_t>(l)], raw.row(n)), 1e-12);
    }
  }
}

TEST(ModelIo, LowRankRoundTrip) {
  ModelSpec spec = linear_normal_spec(0.0, 1.0);
  FittedModel m;
  m.spec = spec;
  m.lowrank = initial_lowrank(spec, 2, ALSConfig::Init::RandomNonneg, 3, 0.75);
  m.params = to_param_matrix(spec, *m.lowrank);
  m.standardizer = Standardizer::identity(test::linear_normal_data(2, 0, 1, 1, 0, 1, 1));
  const FittedModel back = model_from_json(model_to_json(m));
  ASSERT_TRUE(back.lowrank.has_value());
  EXPECT_EQ(back.lowrank->rank, 2);
  EXPECT_EQ(back.lowrank->shift, 0.75);
  for (std::size_t k = 0; k < m.lowrank->factors.size(); ++k) EXPECT_EQ(back.lowrank->factors[k], m.lowrank->factors[k]);
}

TEST(ModelIo, DeterministicApartFromTimestamp) {
  std::mt19937_64 r1(5), r2(5);
  FittedModel a = make_model(linear_normal_spec(0.0, 1.0), r1);
  FittedModel b = make_model(linear_normal_spec(0.0, 1.0), r2);
  a.created_at = "2026-01-01T00:00:00Z";
  b.created_at = "2027-06-30T12:00:00Z";
  std::string ja = model_to_json(a);
  std::string jb = model_to_json(b);
  EXPECT_NE(ja, jb);
  const std::regex stamp("\"created_at\": \"[^\"]*\"");
  EXPECT_EQ(std::regex_replace(ja, stamp, ""), std::regex_replace(jb, stamp, ""));
}

TEST(ModelIo, Errors) {
  std::mt19937_64 rng(1);
  const FittedModel m = make_model(linear_normal_spec(0.0, 1.0), rng);
  const std::string good = model_to_json(m);
  EXPECT_THROW(model_from_json("{not json"), InputError);
  EXPECT_THROW(model_from_json("{}"), ConfigError);
  EXPECT_THROW(model_from_json(std::regex_replace(good, std::regex("\"schema_version\": 1"), "\"schema_version\": 99")),
               ConfigError);
  // Drop a parameter row: dimensions no longer match the ModelSpec.
  nlohmann::json j = nlohmann::json::parse(good);
  j["params"].erase(j["params"].begin());
  EXPECT_THROW(model_from_json(j.dump()), ConfigError);
  j = nlohmann::json::parse(good);
  j.erase("spec");
  EXPECT_THROW(model_from_json(j.dump()), ConfigError);
  j = nlohmann::json::parse(good);
  j["standardizer"]["factors"].push_back(j["standardizer"]["factors"][0]);
  EXPECT_THROW(model_from_json(j.dump()), ConfigError);
  EXPECT_THROW(load_model("/nonexistent/model.json"), IoError);
}

TEST(ModelIo, SaveAndLoadFile) {
  test::TempDir dir;
  std::mt19937_64 rng(8);
  const FittedModel m = make_model(linear_normal_spec(0.0, 1.0), rng);
  save_model(dir / "sub" / "model.json", m);
  const FittedModel back = load_model(dir / "sub" / "model.json");
  EXPECT_EQ(model_to_json(back), model_to_json(m));
}

TEST(UtcTimestamp, Format) {
  EXPECT_TRUE(std::regex_match(utc_timestamp(), std::regex(R"(\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z)")));
}
