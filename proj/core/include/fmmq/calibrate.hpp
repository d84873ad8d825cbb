#pragma once

#include "fmmq/dataset.hpp"
#include "fmmq/ipm.hpp"
#include "fmmq/model.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fmmq {

struct Penalty {
  enum class Type { None, SquaredDiff, AbsDiff };
  Type type = Type::None;
  int order = 1;
  double lambda = 0.0;

  static Penalty none() { return {}; }
  static Penalty squared(double lambda, int order = 1) { return {Type::SquaredDiff, order, lambda}; }
  static Penalty absolute(double lambda, int order = 1) { return {Type::AbsDiff, order, lambda}; }
};

struct SolverOptions {
  double tolerance_gap = 1e-9;
  int max_iterations = 200;
  std::uint64_t seed = 0;
};

enum class CalibrationError { Pinball, Superquantile };

struct CalibrationConfig {
  std::vector<double> levels;
  std::vector<double> weights;  ///< sum to 1
  Penalty penalty;
  SolverOptions solver;
  CalibrationError error = CalibrationError::Pinball;
  int beta_grid_size = 200;
  double beta_max = 0.999;
  /// Nonnegativity of rows i >= 1. Switching it off drops the noncrossing guarantee.
  bool enforce_nonnegativity = true;

  void validate() const;

  /// Equal weights on the given levels.
  static CalibrationConfig uniform(std::vector<double> levels);
  /// 12 levels 0.01, 0.05, 0.15, ..., 0.85, 0.95, 0.99 with weights proportional to
  /// 20, 10, 1 (x8), 10, 20 and a first-order squared-difference penalty of 0.01.
  static CalibrationConfig default_grid();
};

/// Scale nonnegative raw weights to sum 1.
std::vector<double> normalize_weights(std::span<const double> raw);

/// Precomputed basis values: B is N x (J+1) spline rows, Q is M x (I+1).
struct DesignCache {
  Eigen::MatrixXd B;
  Eigen::MatrixXd Q;
  std::vector<double> levels;

  Eigen::Index num_obs() const { return B.rows(); }
  Eigen::Index num_levels() const { return Q.rows(); }
  Eigen::Index num_params() const { return Q.cols() * B.cols(); }

  /// N x P design of level m; row n is kron(Q(p_m), B(x_n)).
  Eigen::MatrixXd level_design(Eigen::Index m) const;
  /// Stacked (M N) x P design, level-major.
  Eigen::MatrixXd stacked() const;
  /// Fitted values G(p_m, x_n) as an N x M matrix.
  Eigen::MatrixXd fitted(const ParamMatrix& params) const;
};

DesignCache assemble_design(const Dataset& data, const ModelSpec& spec, std::span<const double> levels);

/// Difference operator on the flattened parameter vector: order-d differences
/// along every factor axis of the tensor-product columns, for every basis row.
Eigen::MatrixXd difference_matrix(const ModelSpec& spec, int order);

double penalty_value(const ModelSpec& spec, const Penalty& penalty, const ParamMatrix& params);

/// sum_m w_m * E_m(y - G(p_m, x)) + penalty, computed directly from residuals.
double calibration_objective(const DesignCache& design, const Eigen::VectorXd& y, const ModelSpec& spec,
                             const CalibrationConfig& config, const ParamMatrix& params);

struct SolveReport {
  double objective = 0.0;         ///< independent evaluation at the returned parameters
  double solver_objective = 0.0;  ///< primal objective reported by the solver
  double gap = 0.0;
  double primal_infeasibility = 0.0;
  double dual_infeasibility = 0.0;
  int iterations = 0;
  std::string status;
  std::vector<std::string> warnings;
};

struct CalibrationResult {
  ParamMatrix params;
  SolveReport report;
};

/// Joint calibration over all levels. Dispatches to calibrate_cvar for CVaR models.
CalibrationResult calibrate(const Dataset& data, const ModelSpec& spec, const CalibrationConfig& config);

/// Superquantile-error calibration of a CVaR-mode model.
CalibrationResult calibrate_cvar(const Dataset& data, const ModelSpec& spec, const CalibrationConfig& config);

struct SeparateFit {
  Eigen::VectorXd coefficients;  ///< length J + 1
  double objective = 0.0;        ///< mean pinball loss at level p
  SolveReport report;
};

/// Single-level spline quantile regression on the spline part of the ModelSpec.
SeparateFit separate_qr(const Dataset& data, const ModelSpec& spec, double p, const SolverOptions& options = {});

struct ConstrainedSolution {
  ParamMatrix params;
  bool exact = false;
  /// min ||QA - Lambda||_1 over the admissible set; zero (to tolerance) when exact.
  double l1_residual = 0.0;
};

/// Find A with QA = Lambda and rows i >= 1 nonnegative (when requested), or the
/// l1-closest admissible A. Throws ConfigError naming dependent columns of Q.
ConstrainedSolution solve_constrained_system(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& Lambda,
                                             bool nonneg_rows, const SolverOptions& options = {});

/// Move min_{j>=1} a_ij into a_i0 for every row. Leaves G unchanged when the
/// spline columns sum to one everywhere (clamped extrapolation).
void canonicalize(const ModelSpec& spec, ParamMatrix& params);

}  // namespace fmmq
