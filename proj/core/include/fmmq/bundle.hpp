#pragma once

#include <Eigen/Core>

#include <functional>
#include <vector>

namespace fmmq::bundle {

/// min_a  sum_m f_m(a) + 1/2 a'Ha  subject to a_j >= 0 for j in nonneg,
/// where each f_m is convex and piecewise linear and known through an oracle.
struct Problem {
  Eigen::Index dim = 0;
  int pieces = 1;
  /// Returns f_m(a) and writes a subgradient to g.
  std::function<double(int m, const Eigen::VectorXd& a, Eigen::VectorXd& g)> oracle;
  Eigen::MatrixXd H;  ///< empty for none
  std::vector<int> nonneg;
};

struct Options {
  /// Stop when best value minus the cutting-plane lower bound is below
  /// tolerance * max(1, |best value|).
  double tolerance = 1e-9;
  int max_iterations = 1000;
  /// Cuts kept per piece.
  int max_cuts = 0;  ///< 0 picks from the dimension
};

struct Result {
  Eigen::VectorXd a;
  double value = 0.0;
  double lower_bound = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Proximal bundle method. The lower bound minimizes the cutting-plane model over a
/// box around the start; the box grows when the best point reaches its boundary.
Result minimize(const Problem& problem, const Eigen::VectorXd& start, const Options& options = {});

}  // namespace fmmq::bundle
