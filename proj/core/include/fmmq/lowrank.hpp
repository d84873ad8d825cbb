#pragma once

#include "fmmq/calibrate.hpp"
#include "fmmq/dataset.hpp"
#include "fmmq/model.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace fmmq {

struct ALSConfig {
  enum class Init { RandomNonneg, Ones };

  int rank = 1;
  double epsilon = 1e-6;  ///< Frobenius change of the materialized tensor between sweeps
  int max_sweeps = 50;
  /// When positive, stop after exactly this many block updates (ignoring epsilon).
  int max_steps = 0;
  Init init = Init::RandomNonneg;
  std::uint64_t seed = 1;
  CalibrationConfig inner;

  void validate() const;
};

struct ALSStep {
  int step = 0;    ///< 1-based block-update counter
  int sweep = 0;   ///< 0-based sweep index
  int block = 0;   ///< factor matrix updated: 0 for U^(0), k for U^(k)
  double objective = 0.0;
  bool accepted = true;  ///< false when the solve did not improve and the old block was kept
};

struct ALSTrace {
  double initial_objective = 0.0;
  std::vector<ALSStep> steps;
  std::vector<double> sweep_change;  ///< ||A^(s+1) - A^(s)||_F per completed sweep
  bool converged = false;
};

struct ALSResult {
  LowRankParams params;
  ALSTrace trace;
};

/// Shift added to responses before low-rank fitting: max(0, -min y) + IQR(y).
double lowrank_shift(const Eigen::VectorXd& y);

/// Initial nonnegative factors for the given rank.
LowRankParams initial_lowrank(const ModelSpec& spec, int rank, ALSConfig::Init init, std::uint64_t seed, double shift);

/// Block-coordinate descent over the CP factors, each block solved as a convex
/// calibration problem with the other factors fixed.
ALSResult als_calibrate(const Dataset& data, const ModelSpec& spec, const ALSConfig& config);

/// Same, starting from the given factors (shift is taken from `start`).
ALSResult als_calibrate_from(const Dataset& data, const ModelSpec& spec, const ALSConfig& config,
                             LowRankParams start);

/// Objective of a low-rank model under the inner calibration config.
double lowrank_objective(const Dataset& data, const ModelSpec& spec, const CalibrationConfig& config,
                         const LowRankParams& lr);

struct RankSweepEntry {
  int rank = 0;
  ALSResult result;
};

/// Fit increasing ranks, each for exactly `steps` block updates (0: until the
/// sweep change falls below epsilon). Each higher rank
/// starts from the previous solution padded with zero columns in U^(0) and
/// columns of ones elsewhere, so its starting objective equals the previous final one.
std::vector<RankSweepEntry> rank_sweep(const Dataset& data, const ModelSpec& spec, std::vector<int> ranks,
                                       int steps, const ALSConfig& base);

CsvTable trace_table(const std::vector<RankSweepEntry>& sweep);

}  // namespace fmmq
