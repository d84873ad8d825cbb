#include "fmmq/bundle.hpp"
#include "fmmq/error_measures.hpp"
#include "fmmq/exceptions.hpp"
#include "fmmq/programs.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fmmq {

namespace {

Eigen::VectorXd pinball_start(const SuperquantileData& d, int max_iterations) {
  const Eigen::Index N = d.y.size();
  const Eigen::Index P = d.X.front().cols();
  const auto L = static_cast<Eigen::Index>(d.X.size());
  Eigen::MatrixXd X(N * L, P);
  Eigen::VectorXd y(N * L), tau(N * L), weight(N * L);
  for (Eigen::Index m = 0; m < L; ++m) {
    const auto k = static_cast<std::size_t>(m);
    X.middleRows(m * N, N) = d.X[k];
    y.segment(m * N, N) = d.y;
    tau.segment(m * N, N).setConstant(d.levels[k]);
    weight.segment(m * N, N).setConstant(d.weights[k] / static_cast<double>(N));
  }
  PinballProgram pin(std::move(X), std::move(y), std::move(tau), std::move(weight), d.nonneg, d.H);
  ipm::Options opt;
  opt.tolerance = 1e-6;
  opt.max_iterations = max_iterations;
  const ipm::Result r = ipm::solve(pin, opt);
  if (r.v.size() == 0 || !r.v.allFinite()) return Eigen::VectorXd::Zero(P);
  return pin.coefficients(r.v);
}

}  // namespace

SuperquantileFit fit_superquantile(const SuperquantileData& d, double tolerance, int max_iterations,
                                   const Eigen::VectorXd& start, const Eigen::MatrixXd& abs_D, double abs_lambda) {
  if (d.X.empty()) throw ConfigError("superquantile fit needs at least one level");
  if (d.betas.empty() || !(d.beta_cell > 0.0)) throw ConfigError("superquantile fit needs a beta grid");
  const Eigen::Index N = d.y.size();
  const Eigen::Index P = d.X.front().cols();
  const int K = static_cast<int>(d.betas.size());
  const double beta_max = d.beta_cell * K;
  const bool abs_pen = abs_lambda > 0.0 && abs_D.size() > 0;

  std::vector<ErrorKind> kinds;
  for (double p : d.levels) kinds.push_back(ErrorKind::superquantile(p, K, beta_max));

  bundle::Problem problem;
  problem.dim = P;
  problem.pieces = static_cast<int>(d.X.size()) + (abs_pen ? 1 : 0);
  problem.nonneg = d.nonneg;
  problem.H = d.H;
  problem.oracle = [&](int m, const Eigen::VectorXd& a, Eigen::VectorXd& g) {
    const auto k = static_cast<std::size_t>(m);
    if (k == d.X.size()) {
      const Eigen::VectorXd da = abs_D * a;
      g = abs_lambda * (abs_D.transpose() * da.unaryExpr([](double v) { return double((v > 0) - (v < 0)); }));
      return abs_lambda * da.lpNorm<1>();
    }
    const Eigen::VectorXd z = d.y - d.X[k] * a;
    Eigen::VectorXd gz(N);
    const double e = superquantile_error_subgradient(kinds[k], std::span<const double>(z.data(), static_cast<std::size_t>(N)),
                                                     std::span<double>(gz.data(), static_cast<std::size_t>(N)));
    g = -d.weights[k] * (d.X[k].transpose() * gz);
    return d.weights[k] * e;
  };

  const Eigen::VectorXd a0 = start.size() == P ? start : pinball_start(d, max_iterations);
  bundle::Options opt;
  opt.tolerance = tolerance;
  opt.max_iterations = 10 * max_iterations;
  const bundle::Result r = bundle::minimize(problem, a0, opt);

  SuperquantileFit out;
  out.a = r.a;
  out.value = r.value;
  out.gap = r.value - r.lower_bound;
  out.iterations = r.iterations;
  out.converged = r.converged;
  if (!r.converged && !(out.gap <= 1e3 * tolerance * std::max(1.0, std::abs(r.value)))) {
    std::ostringstream os;
    os << "bundle method stopped after " << r.iterations << " iterations (gap " << out.gap << ")";
    throw SolverError(os.str());
  }
  return out;
}

}  // namespace fmmq
