#pragma once

#include "fmmq/calibrate.hpp"
#include "fmmq/dataset.hpp"
#include "fmmq/model.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace fmmq {

struct CRPSConfig {
  enum class Quadrature { UniformGrid, GaussLegendre };
  Quadrature quadrature = Quadrature::UniformGrid;
  int nodes = 999;

  void validate() const;
};

/// Nodes in (0,1) and weights summing to 1. The uniform grid uses midpoints (m - 1/2)/M.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

QuadratureRule make_rule(const CRPSConfig& config);

/// 2 * integral over (0,1) of rho_p(y - Q(p)). Throws InputError when Q decreases on the nodes.
double crps(const std::function<double(double)>& quantile_fn, double y, const CRPSConfig& config = {});
double crps(const ConditionalQuantileFn& quantile_fn, double y, const CRPSConfig& config = {});

double mean_crps(const ModelSpec& spec, const ParamMatrix& params, const Dataset& data, const CRPSConfig& config = {});

/// Fraction of rows with G(p_lo, x) <= y <= G(p_hi, x).
double coverage(const ModelSpec& spec, const ParamMatrix& params, const Dataset& data, double p_lo, double p_hi);

/// N x L matrix of G(p_l, x_n).
Eigen::MatrixXd predict_quantiles(const ModelSpec& spec, const ParamMatrix& params, const Dataset& data,
                                  std::span<const double> levels);

struct FoldPlan {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<int> fold_of;  ///< fold index per observation

  std::vector<Eigen::Index> test_rows(int fold) const;
  std::vector<Eigen::Index> train_rows(int fold) const;
};

/// Shuffle with a seeded Fisher-Yates pass, then cut into k contiguous folds
/// whose sizes differ by at most one.
FoldPlan kfold(Eigen::Index n, int k, std::uint64_t seed);
FoldPlan kfold(const Dataset& data, int k, std::uint64_t seed);

struct CoverageInterval {
  double lo = 0.0;
  double hi = 1.0;
  double target = 1.0;
};

/// (0.01, 0.99), (0.05, 0.95), ..., (0.45, 0.55) with targets hi - lo.
std::vector<CoverageInterval> default_intervals();

enum class StandardizeMode { None, PerFold, Global };

struct CVOptions {
  CRPSConfig crps;
  std::vector<CoverageInterval> intervals = default_intervals();
  /// PerFold fits median/IQR on each training split; Global standardizes the full data first.
  StandardizeMode standardize = StandardizeMode::PerFold;
};

struct FoldMetrics {
  int fold = 0;
  Eigen::Index n_train = 0;
  Eigen::Index n_test = 0;
  double crps = 0.0;  ///< mean CRPS on the test split, in the units the model was fit in
  std::vector<double> coverage;
  SolveReport report;
};

struct CVResult {
  std::vector<CoverageInterval> intervals;
  std::vector<FoldMetrics> folds;
  double crps_mean = 0.0;
  double crps_std = 0.0;  ///< sample standard deviation over folds
  std::vector<double> coverage_mean;
  double coverage_abs_deviation = 0.0;  ///< mean |coverage - target| over intervals
};

/// Builds the model for a (possibly standardized) training split, e.g. to place knots.
using SpecBuilder = std::function<ModelSpec(const Dataset& train)>;

CVResult run_cv(const Dataset& data, const SpecBuilder& build, const CalibrationConfig& config, const FoldPlan& plan,
                const CVOptions& options = {});
CVResult run_cv(const Dataset& data, const ModelSpec& spec, const CalibrationConfig& config, const FoldPlan& plan,
                const CVOptions& options = {});

/// interval_lo, interval_hi, target, fold_1..fold_k, mean
CsvTable coverage_table(const CVResult& cv);
/// fold, crps rows followed by mean and std rows
CsvTable crps_table(const CVResult& cv);

double sample_std(std::span<const double> v);

}  // namespace fmmq
