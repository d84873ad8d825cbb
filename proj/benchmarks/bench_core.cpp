#include "fmmq/calibrate.hpp"
#include "fmmq/model.hpp"
#include "fmmq/scoring.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace fmmq;

namespace {

Dataset linear_normal(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  Dataset d;
  d.response = "y";
  d.factor_names = {"x"};
  d.y.resize(n);
  d.X.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    d.X(i, 0) = ux(rng);
    d.y[i] = 1.0 + 2.0 * d.X(i, 0) + (0.5 + d.X(i, 0)) * z(rng);
  }
  return d;
}

ModelSpec spline_spec(Mode mode) {
  ModelSpec s;
  s.mode = mode;
  if (mode == Mode::Quantile) {
    s.bases = {QuantileBasis::constant(), QuantileBasis::normal(), QuantileBasis::logistic()};
  } else {
    s.bases = {CVaRBasis::constant(), CVaRBasis::normal(), CVaRBasis::exponential()};
  }
  s.factors = {FactorSplineSpec{equidistant_knots(0.0, 1.0, 4, 3), Extrapolation::Clamp}};
  return s;
}

}  // namespace

static void BM_EvalModel(benchmark::State& state) {
  const ModelSpec spec = spline_spec(Mode::Quantile);
  ParamMatrix a = ParamMatrix::zeros(spec);
  a.matrix().setConstant(0.5);
  double p = 0.1;
  for (auto _ : state) {
    const std::vector<double> x{p};
    benchmark::DoNotOptimize(eval_model(spec, a, p, x));
    p = p < 0.9 ? p + 1e-3 : 0.1;
  }
}
BENCHMARK(BM_EvalModel);

static void BM_CalibratePinball(benchmark::State& state) {
  const ModelSpec spec = spline_spec(Mode::Quantile);
  const Dataset d = linear_normal(static_cast<int>(state.range(0)), 1);
  const auto config = CalibrationConfig::default_grid();
  for (auto _ : state) benchmark::DoNotOptimize(calibrate(d, spec, config).report.objective);
}
BENCHMARK(BM_CalibratePinball)->Arg(250)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

static void BM_CalibrateSuperquantile(benchmark::State& state) {
  const ModelSpec spec = spline_spec(Mode::CVaR);
  const Dataset d = linear_normal(static_cast<int>(state.range(0)), 2);
  auto config = CalibrationConfig::uniform({0.1, 0.5, 0.9});
  config.error = CalibrationError::Superquantile;
  for (auto _ : state) benchmark::DoNotOptimize(calibrate(d, spec, config).report.objective);
}
BENCHMARK(BM_CalibrateSuperquantile)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_MeanCrps(benchmark::State& state) {
  const ModelSpec spec = spline_spec(Mode::Quantile);
  ParamMatrix a = ParamMatrix::zeros(spec);
  a.matrix().setConstant(0.5);
  const Dataset d = linear_normal(1000, 3);
  for (auto _ : state) benchmark::DoNotOptimize(mean_crps(spec, a, d));
}
BENCHMARK(BM_MeanCrps)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
