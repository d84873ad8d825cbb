#pragma once

#include "fmmq/calibrate.hpp"
#include "fmmq/dataset.hpp"
#include "fmmq/lowrank.hpp"
#include "fmmq/model.hpp"
#include "fmmq/scoring.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fmmq {

inline constexpr int kRunConfigSchemaVersion = 1;

/// Spline basis of one factor. Boundaries default to the range of the fitting data.
struct FactorConfig {
  enum class Placement { Equidistant, Quantile, Explicit };

  Placement placement = Placement::Equidistant;
  int n_interior = 6;
  int degree = 3;
  std::optional<double> lower;
  std::optional<double> upper;
  std::vector<double> interior;  ///< used with Explicit
  Extrapolation extrapolation = Extrapolation::Clamp;
};

/// Declarative model: response bases are fixed, factor knots are resolved against data.
struct ModelConfig {
  Mode mode = Mode::Quantile;
  std::vector<ResponseBasis> bases;
  std::vector<FactorConfig> factors;  ///< one per data factor column

  /// Constant, normal, right and left exponential tails; cubic splines with 6 interior knots.
  static ModelConfig mixture_default(int num_factors);
  /// Resolve knots against `data` (in the units the model is fit in).
  ModelSpec build(const Dataset& data) const;
};

struct DataConfig {
  std::filesystem::path path;
  std::string response;
  std::vector<std::string> factors;
  bool standardize = true;
};

struct ScoringConfig {
  CRPSConfig crps;
  std::vector<CoverageInterval> intervals = default_intervals();
  std::vector<double> predict_levels{0.05, 0.5, 0.95};
  std::vector<double> surface_levels{0.05, 0.5, 0.95};
  int surface_points = 41;  ///< grid points per factor, spanning the data range
};

struct CVConfig {
  int k = 10;
  std::uint64_t seed = 2023;
  StandardizeMode standardize = StandardizeMode::PerFold;
};

struct ALSRunConfig {
  std::vector<int> ranks{1};
  int steps = 0;  ///< exact number of block updates per rank; 0 means run to epsilon
  double epsilon = 1e-6;
  int max_sweeps = 50;
  ALSConfig::Init init = ALSConfig::Init::RandomNonneg;
  std::uint64_t seed = 1;
};

struct FetchSeries {
  std::string id;
  std::string column;  ///< column name in the joined table; defaults to the id
  bool pc1 = true;     ///< percent change from a year ago
};

struct FetchConfig {
  std::vector<FetchSeries> series;
  std::filesystem::path cache_dir = "fred_cache";
  std::filesystem::path output = "data.csv";
  bool offline = false;
  /// Inclusive YYYY-MM-DD bounds on the joined dates; empty means unbounded.
  std::string start;
  std::string end;
};

struct RunConfig {
  int schema_version = kRunConfigSchemaVersion;
  DataConfig data;
  ModelConfig model;
  CalibrationConfig calibration = CalibrationConfig::default_grid();
  ScoringConfig scoring;
  CVConfig cv;
  ALSRunConfig als;
  FetchConfig fetch;
  std::filesystem::path output_dir = ".";
  /// The calibration section as written, echoed into model files.
  std::string calibration_json() const;

  void validate() const;
};

/// Parse a config document. Relative paths are resolved against `base_dir`.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Command-line overrides; each one replaces the config value when present.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> rank;
  std::optional<std::vector<double>> levels;
};

/// --seed sets the cv, als and solver seeds; --rank replaces the ALS rank list;
/// --levels replaces the calibration levels (equal weights) and the predict/surface levels.
void apply_overrides(RunConfig& config, const RunOverrides& overrides);

/// Parse "0.1,0.5,0.9".
std::vector<double> parse_level_list(const std::string& text);

/// Load the configured dataset, checking that every referenced column exists.
Dataset load_data(const RunConfig& config);

}  // namespace fmmq
