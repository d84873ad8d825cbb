#include "fmmq/calibrate.hpp"

#include "fmmq/error_measures.hpp"
#include "fmmq/exceptions.hpp"
#include "fmmq/programs.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace fmmq {

// Config ----------------------------------------------------------------------

std::vector<double> normalize_weights(std::span<const double> raw) {
  double total = 0.0;
  for (double w : raw) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("level weights must be finite and nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw ConfigError("level weights sum to zero");
  std::vector<double> out(raw.begin(), raw.end());
  for (double& w : out) w /= total;
  return out;
}

void CalibrationConfig::validate() const {
  if (levels.empty()) throw ConfigError("calibration needs at least one level");
  if (weights.size() != levels.size()) throw ConfigError("one weight per level is required");
  for (std::size_t m = 0; m < levels.size(); ++m) {
    if (!(levels[m] > 0.0 && levels[m] < 1.0)) throw DomainError("levels must lie in (0,1)");
    if (m > 0 && !(levels[m] > levels[m - 1])) throw ConfigError("levels must be strictly increasing");
    if (!(weights[m] >= 0.0)) throw ConfigError("level weights must be nonnegative");
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("level weights must sum to 1");
  if (penalty.type != Penalty::Type::None) {
    if (penalty.order != 1 && penalty.order != 2) throw ConfigError("penalty order must be 1 or 2");
    if (!(penalty.lambda >= 0.0) || !std::isfinite(penalty.lambda)) {
      throw ConfigError("penalty weight must be finite and nonnegative");
    }
  }
  if (!(solver.tolerance_gap > 0.0)) throw ConfigError("solver tolerance must be positive");
  if (solver.max_iterations < 1) throw ConfigError("solver iteration cap must be positive");
  if (error == CalibrationError::Superquantile) {
    for (double p : levels) ErrorKind::superquantile(p, beta_grid_size, beta_max).validate();
  }
}

CalibrationConfig CalibrationConfig::uniform(std::vector<double> levels) {
  CalibrationConfig c;
  c.weights.assign(levels.size(), 1.0 / static_cast<double>(levels.size()));
  c.levels = std::move(levels);
  return c;
}

CalibrationConfig CalibrationConfig::default_grid() {
  CalibrationConfig c;
  c.levels = {0.01, 0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95, 0.99};
  const std::vector<double> raw = {20, 10, 1, 1, 1, 1, 1, 1, 1, 1, 10, 20};
  c.weights = normalize_weights(raw);
  c.penalty = Penalty::squared(0.01, 1);
  return c;
}

// Design ------------------------------------------------------------------------

Eigen::MatrixXd DesignCache::level_design(Eigen::Index m) const {
  const Eigen::Index N = B.rows();
  const Eigen::Index J1 = B.cols();
  Eigen::MatrixXd X(N, Q.cols() * J1);
  for (Eigen::Index i = 0; i < Q.cols(); ++i) X.middleCols(i * J1, J1) = Q(m, i) * B;
  return X;
}

Eigen::MatrixXd DesignCache::stacked() const {
  const Eigen::Index N = B.rows();
  Eigen::MatrixXd X(N * Q.rows(), num_params());
  for (Eigen::Index m = 0; m < Q.rows(); ++m) X.middleRows(m * N, N) = level_design(m);
  return X;
}

Eigen::MatrixXd DesignCache::fitted(const ParamMatrix& params) const {
  if (params.rows() != Q.cols() || params.cols() != B.cols()) throw ConfigError("parameter matrix does not match design");
  // G(p_m, x_n) = Q_m A B_n
  return B * (Q * params.matrix()).transpose();
}

DesignCache assemble_design(const Dataset& data, const ModelSpec& spec, std::span<const double> levels) {
  spec.validate();
  if (data.size() == 0) throw InputError("dataset is empty");
  if (spec.num_factors() > 0 && data.num_factors() != spec.num_factors()) {
    throw ConfigError("dataset has " + std::to_string(data.num_factors()) + " factors, model expects " +
                      std::to_string(spec.num_factors()));
  }
  DesignCache d;
  d.levels.assign(levels.begin(), levels.end());
  d.B.resize(data.size(), spec.num_spline_columns());
  Eigen::VectorXd row(spec.num_spline_columns());
  for (Eigen::Index n = 0; n < data.size(); ++n) {
    const auto x = spec.num_factors() > 0 ? data.row(n) : std::span<const double>();
    spec.spline_row(x, std::span<double>(row.data(), static_cast<std::size_t>(row.size())));
    d.B.row(n) = row.transpose();
  }
  d.Q.resize(static_cast<Eigen::Index>(levels.size()), spec.num_bases());
  for (std::size_t m = 0; m < levels.size(); ++m) d.Q.row(static_cast<Eigen::Index>(m)) = spec.basis_values(levels[m]);
  return d;
}

// Penalty -----------------------------------------------------------------------

Eigen::MatrixXd difference_matrix(const ModelSpec& spec, int order) {
  if (order != 1 && order != 2) throw ConfigError("difference order must be 1 or 2");
  const int K = spec.num_factors();
  const int J1 = spec.num_spline_columns();
  const int rows = spec.num_bases();
  std::vector<int> shape(static_cast<std::size_t>(K));
  std::vector<int> stride(static_cast<std::size_t>(K));
  for (int k = K - 1, s = 1; k >= 0; --k) {
    shape[static_cast<std::size_t>(k)] = spec.factors[static_cast<std::size_t>(k)].basis_count();
    stride[static_cast<std::size_t>(k)] = s;
    s *= shape[static_cast<std::size_t>(k)];
  }
  const std::vector<double> coef = order == 1 ? std::vector<double>{1.0, -1.0} : std::vector<double>{1.0, -2.0, 1.0};
  std::vector<Eigen::VectorXd> ds;
  const int J = spec.tensor_size();
  for (int i = 0; i < rows; ++i) {
    for (int k = 0; k < K; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      for (int flat = 0; flat < J; ++flat) {
        const int idx_k = (flat / stride[uk]) % shape[uk];
        if (idx_k < order) continue;
        Eigen::VectorXd d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows) * J1);
        for (int t = 0; t <= order; ++t) {
          d[static_cast<Eigen::Index>(i) * J1 + 1 + flat - t * stride[uk]] = coef[static_cast<std::size_t>(t)];
        }
        ds.push_back(std::move(d));
      }
    }
  }
  Eigen::MatrixXd D(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(rows) * J1);
  for (std::size_t r = 0; r < ds.size(); ++r) D.row(static_cast<Eigen::Index>(r)) = ds[r].transpose();
  return D;
}

double penalty_value(const ModelSpec& spec, const Penalty& penalty, const ParamMatrix& params) {
  if (penalty.type == Penalty::Type::None || penalty.lambda == 0.0) return 0.0;
  const Eigen::VectorXd d = difference_matrix(spec, penalty.order) * params.flatten();
  if (penalty.type == Penalty::Type::SquaredDiff) return penalty.lambda * d.squaredNorm();
  return penalty.lambda * d.lpNorm<1>();
}

namespace {

ErrorKind level_error(const CalibrationConfig& config, double p) {
  if (config.error == CalibrationError::Superquantile) {
    return ErrorKind::superquantile(p, config.beta_grid_size, config.beta_max);
  }
  return ErrorKind::pinball(p);
}

}  // namespace

double calibration_objective(const DesignCache& design, const Eigen::VectorXd& y, const ModelSpec& spec,
                             const CalibrationConfig& config, const ParamMatrix& params) {
  const Eigen::MatrixXd G = design.fitted(params);
  if (G.rows() != y.size()) throw ConfigError("responses do not match the design");
  double obj = 0.0;
  Eigen::VectorXd r(y.size());
  for (Eigen::Index m = 0; m < G.cols(); ++m) {
    const double w = config.weights[static_cast<std::size_t>(m)];
    if (w == 0.0) continue;
    r = y - G.col(m);
    obj += w * error_value(level_error(config, design.levels[static_cast<std::size_t>(m)]),
                           {r.data(), static_cast<std::size_t>(r.size())});
  }
  return obj + penalty_value(spec, config.penalty, params);
}

// Calibration -----------------------------------------------------------------

void canonicalize(const ModelSpec& spec, ParamMatrix& params) {
  check_dimensions(spec, params);
  if (spec.num_factors() == 0) return;
  for (const auto& f : spec.factors) {
    if (f.extrapolation != Extrapolation::Clamp) return;
  }
  for (int i = 0; i < params.rows(); ++i) {
    const double lo = params.matrix().row(i).tail(params.cols() - 1).minCoeff();
    params.matrix().row(i).tail(params.cols() - 1).array() -= lo;
    params(i, 0) += lo;
  }
}

namespace {

std::vector<int> constrained_indices(const ModelSpec& spec, bool enforce) {
  std::vector<int> idx;
  if (!enforce) return idx;
  const int J1 = spec.num_spline_columns();
  for (int i = 1; i < spec.num_bases(); ++i) {
    for (int j = 0; j < J1; ++j) idx.push_back(i * J1 + j);
  }
  return idx;
}

std::vector<std::string> data_warnings(const Dataset& data, const ModelSpec& spec) {
  std::vector<std::string> w;
  if (spec.num_factors() == 0) return w;
  for (int k = 0; k < data.num_factors(); ++k) {
    const auto col = data.X.col(k);
    if (col.maxCoeff() == col.minCoeff()) {
      w.push_back("factor '" + data.factor_names[static_cast<std::size_t>(k)] +
                  "' is constant: spline columns are collinear and only the penalty separates them");
    }
  }
  return w;
}

void check_result(const ipm::Result& r, const char* what) {
  if (r.usable()) return;
  std::ostringstream os;
  os << what << ": solver stopped with status " << ipm::to_string(r.status) << " after " << r.iterations
     << " iterations (gap " << r.gap << ", primal infeasibility " << r.primal_infeasibility
     << ", dual infeasibility " << r.dual_infeasibility << ")";
  throw SolverError(os.str());
}

void fill_report(SolveReport& rep, const ipm::Result& r, double offset) {
  rep.solver_objective = r.primal_objective + offset;
  rep.gap = r.gap;
  rep.primal_infeasibility = r.primal_infeasibility;
  rep.dual_infeasibility = r.dual_infeasibility;
  rep.iterations = r.iterations;
  rep.status = ipm::to_string(r.status);
  if (r.status == ipm::Status::Acceptable) rep.warnings.push_back("solver reached a relaxed tolerance only");
}

ParamMatrix finish_params(const ModelSpec& spec, const Eigen::VectorXd& a, const std::vector<int>& nonneg) {
  Eigen::VectorXd v = a;
  for (int j : nonneg) v[j] = std::max(0.0, v[j]);
  ParamMatrix params = ParamMatrix::unflatten(v, spec.num_bases(), spec.num_spline_columns());
  canonicalize(spec, params);
  return params;
}

void check_inputs(const Dataset& data, const ModelSpec& spec, const CalibrationConfig& config) {
  config.validate();
  spec.validate();
  if (data.size() == 0) throw InputError("calibration needs at least one observation");
  data.validate();
}

}  // namespace

CalibrationResult calibrate(const Dataset& data, const ModelSpec& spec, const CalibrationConfig& config) {
  if (spec.mode == Mode::CVaR || config.error == CalibrationError::Superquantile) {
    return calibrate_cvar(data, spec, config);
  }
  check_inputs(data, spec, config);
  const DesignCache design = assemble_design(data, spec, config.levels);
  const Eigen::Index N = data.size();
  const Eigen::Index P = design.num_params();

  std::vector<Eigen::Index> active;
  for (std::size_t m = 0; m < config.levels.size(); ++m) {
    if (config.weights[m] > 0.0) active.push_back(static_cast<Eigen::Index>(m));
  }
  const bool abs_pen = config.penalty.type == Penalty::Type::AbsDiff && config.penalty.lambda > 0.0;
  const bool sq_pen = config.penalty.type == Penalty::Type::SquaredDiff && config.penalty.lambda > 0.0;
  Eigen::MatrixXd D;
  if (abs_pen || sq_pen) D = difference_matrix(spec, config.penalty.order);
  const Eigen::Index extra = abs_pen ? D.rows() : 0;

  const Eigen::Index rows = N * static_cast<Eigen::Index>(active.size()) + extra;
  Eigen::MatrixXd X(rows, P);
  Eigen::VectorXd y(rows), tau(rows), weight(rows);
  for (std::size_t a = 0; a < active.size(); ++a) {
    const Eigen::Index m = active[a];
    const auto off = static_cast<Eigen::Index>(a) * N;
    X.middleRows(off, N) = design.level_design(m);
    y.segment(off, N) = data.y;
    tau.segment(off, N).setConstant(config.levels[static_cast<std::size_t>(m)]);
    weight.segment(off, N).setConstant(config.weights[static_cast<std::size_t>(m)] / static_cast<double>(N));
  }
  if (abs_pen) {
    // lambda |d'a| = 2 lambda * rho_{1/2}(0 - d'a)
    X.bottomRows(extra) = -D;
    y.tail(extra).setZero();
    tau.tail(extra).setConstant(0.5);
    weight.tail(extra).setConstant(2.0 * config.penalty.lambda);
  }
  Eigen::MatrixXd H;
  if (sq_pen) H = 2.0 * config.penalty.lambda * D.transpose() * D;

  const auto nonneg = constrained_indices(spec, config.enforce_nonnegativity);
  PinballProgram program(std::move(X), std::move(y), std::move(tau), std::move(weight), nonneg, std::move(H));
  ipm::Options opt;
  opt.tolerance = config.solver.tolerance_gap;
  opt.max_iterations = config.solver.max_iterations;
  const ipm::Result r = ipm::solve(program, opt);
  check_result(r, "calibration");

  CalibrationResult out;
  out.params = finish_params(spec, program.coefficients(r.v), nonneg);
  out.report.warnings = data_warnings(data, spec);
  fill_report(out.report, r, 0.0);
  out.report.objective = calibration_objective(design, data.y, spec, config, out.params);
  return out;
}

CalibrationResult calibrate_cvar(const Dataset& data, const ModelSpec& spec, const CalibrationConfig& config) {
  if (spec.mode != Mode::CVaR) throw ConfigError("superquantile calibration needs a CVaR-mode model");
  if (config.error != CalibrationError::Superquantile) {
    throw ConfigError("CVaR-mode models are calibrated with the superquantile error");
  }
  check_inputs(data, spec, config);
  const DesignCache design = assemble_design(data, spec, config.levels);

  SuperquantileData sd;
  sd.y = data.y;
  for (std::size_t m = 0; m < config.levels.size(); ++m) {
    if (config.weights[m] == 0.0) continue;
    sd.X.push_back(design.level_design(static_cast<Eigen::Index>(m)));
    sd.levels.push_back(config.levels[m]);
    sd.weights.push_back(config.weights[m]);
  }
  const ErrorKind grid = ErrorKind::superquantile(0.5, config.beta_grid_size, config.beta_max);
  for (int k = 0; k < config.beta_grid_size; ++k) sd.betas.push_back(beta_grid_point(grid, k));
  sd.beta_cell = config.beta_max / config.beta_grid_size;
  sd.nonneg = constrained_indices(spec, config.enforce_nonnegativity);
  const bool abs_pen = config.penalty.type == Penalty::Type::AbsDiff && config.penalty.lambda > 0.0;
  Eigen::MatrixXd D;
  if (config.penalty.lambda > 0.0 && config.penalty.type != Penalty::Type::None) {
    D = difference_matrix(spec, config.penalty.order);
  }
  if (config.penalty.type == Penalty::Type::SquaredDiff && config.penalty.lambda > 0.0) {
    sd.H = 2.0 * config.penalty.lambda * D.transpose() * D;
  }
  SuperquantileFit fit;
  try {
    fit = fit_superquantile(sd, config.solver.tolerance_gap, config.solver.max_iterations, {}, abs_pen ? D : Eigen::MatrixXd(),
                            abs_pen ? config.penalty.lambda : 0.0);
  } catch (const SolverError& e) {
    throw SolverError(std::string("superquantile calibration: ") + e.what());
  }

  CalibrationResult out;
  out.params = finish_params(spec, fit.a, sd.nonneg);
  out.report.warnings = data_warnings(data, spec);
  out.report.solver_objective = fit.value;
  out.report.gap = fit.gap;
  out.report.iterations = fit.iterations;
  out.report.status = fit.converged ? "optimal" : "acceptable";
  if (!fit.converged) out.report.warnings.push_back("solver reached a relaxed tolerance only");
  out.report.objective = calibration_objective(design, data.y, spec, config, out.params);
  return out;
}

SeparateFit separate_qr(const Dataset& data, const ModelSpec& spec, double p, const SolverOptions& options) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile level must lie in (0,1)");
  ModelSpec spline_only;
  spline_only.bases = {QuantileBasis::constant()};
  spline_only.factors = spec.factors;
  const std::vector<double> level{p};
  const DesignCache design = assemble_design(data, spline_only, level);
  const Eigen::Index N = data.size();
  PinballProgram program(design.B, data.y, Eigen::VectorXd::Constant(N, p),
                         Eigen::VectorXd::Constant(N, 1.0 / static_cast<double>(N)), {});
  ipm::Options opt;
  opt.tolerance = options.tolerance_gap;
  opt.max_iterations = options.max_iterations;
  const ipm::Result r = ipm::solve(program, opt);
  check_result(r, "separate quantile regression");
  SeparateFit out;
  out.coefficients = program.coefficients(r.v);
  out.objective = program.objective(out.coefficients);
  fill_report(out.report, r, 0.0);
  out.report.objective = out.objective;
  return out;
}

ConstrainedSolution solve_constrained_system(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& Lambda,
                                             bool nonneg_rows, const SolverOptions& options) {
  const Eigen::Index M = Q.rows();
  const Eigen::Index I1 = Q.cols();
  if (Lambda.rows() != M) throw ConfigError("Q and Lambda must have the same number of rows");
  if (M < I1) throw ConfigError("Q needs at least as many levels as basis functions");

  // Name every column that lies in the span of the columns before it.
  std::vector<Eigen::Index> dependent;
  Eigen::Index rank = 0;
  for (Eigen::Index c = 0; c < I1; ++c) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Q.leftCols(c + 1));
    svd.setThreshold(1e-10);
    const Eigen::Index r = svd.rank();
    if (r == rank) dependent.push_back(c);
    rank = r;
  }
  if (!dependent.empty()) {
    std::string names;
    for (auto c : dependent) names += (names.empty() ? "" : ", ") + std::to_string(c);
    throw ConfigError("Q is rank deficient; dependent columns: " + names);
  }

  const double tol = 1e-8 * (1.0 + Lambda.cwiseAbs().sum());
  ConstrainedSolution out;
  const Eigen::MatrixXd A_ls = Q.colPivHouseholderQr().solve(Lambda);
  const double ls_resid = (Q * A_ls - Lambda).cwiseAbs().sum();
  const bool ls_admissible = !nonneg_rows || I1 < 2 || A_ls.bottomRows(I1 - 1).minCoeff() >= -1e-12;
  if (ls_resid <= tol && ls_admissible) {
    Eigen::MatrixXd A = A_ls;
    if (nonneg_rows && I1 > 1) A.bottomRows(I1 - 1) = A.bottomRows(I1 - 1).cwiseMax(0.0);
    out.params = ParamMatrix(A);
    out.exact = true;
    out.l1_residual = (Q * A - Lambda).cwiseAbs().sum();
    return out;
  }

  // Column-wise l1 fit: |r| = 2 rho_{1/2}(r).
  std::vector<int> nonneg;
  if (nonneg_rows) {
    for (Eigen::Index i = 1; i < I1; ++i) nonneg.push_back(static_cast<int>(i));
  }
  Eigen::MatrixXd A(I1, Lambda.cols());
  ipm::Options opt;
  opt.tolerance = options.tolerance_gap;
  opt.max_iterations = options.max_iterations;
  for (Eigen::Index j = 0; j < Lambda.cols(); ++j) {
    PinballProgram program(Q, Lambda.col(j), Eigen::VectorXd::Constant(M, 0.5), Eigen::VectorXd::Constant(M, 2.0),
                           nonneg);
    const ipm::Result r = ipm::solve(program, opt);
    check_result(r, "constrained system");
    Eigen::VectorXd a = program.coefficients(r.v);
    for (int i : nonneg) a[i] = std::max(0.0, a[i]);
    A.col(j) = a;
  }
  out.params = ParamMatrix(A);
  out.l1_residual = (Q * A - Lambda).cwiseAbs().sum();
  out.exact = out.l1_residual <= tol;
  return out;
}

}  // namespace fmmq
