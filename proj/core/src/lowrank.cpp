#include "fmmq/lowrank.hpp"

#include "fmmq/error_measures.hpp"
#include "fmmq/exceptions.hpp"
#include "fmmq/programs.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace fmmq {

void ALSConfig::validate() const {
  if (rank < 1) throw ConfigError("rank must be at least 1");
  if (!(epsilon > 0.0)) throw ConfigError("ALS epsilon must be positive");
  if (max_sweeps < 1) throw ConfigError("ALS needs at least one sweep");
  if (max_steps < 0) throw ConfigError("ALS step cap must be nonnegative");
  inner.validate();
}

double lowrank_shift(const Eigen::VectorXd& y) {
  if (y.size() == 0) throw InputError("cannot shift an empty response vector");
  const std::span<const double> v(y.data(), static_cast<std::size_t>(y.size()));
  const double iqr = empirical_quantile(v, 0.75) - empirical_quantile(v, 0.25);
  return std::max(0.0, -y.minCoeff()) + iqr;
}

LowRankParams initial_lowrank(const ModelSpec& spec, int rank, ALSConfig::Init init, std::uint64_t seed,
                              double shift) {
  if (rank < 1) throw ConfigError("rank must be at least 1");
  LowRankParams lr;
  lr.rank = rank;
  lr.shift = shift;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.1, 1.0);
  std::vector<int> rows{spec.num_bases()};
  for (const auto& f : spec.factors) rows.push_back(f.basis_count());
  for (int r : rows) {
    Eigen::MatrixXd U(r, rank);
    if (init == ALSConfig::Init::Ones) {
      U.setOnes();
    } else {
      for (Eigen::Index i = 0; i < U.rows(); ++i) {
        for (Eigen::Index j = 0; j < U.cols(); ++j) U(i, j) = unif(rng);
      }
    }
    lr.factors.push_back(std::move(U));
  }
  return lr;
}

namespace {

// Linear map from vec(U^(k)) (index l * R + r) to the flattened parameter vector,
// with the other factors fixed. Column 0 of every parameter row stays zero.
Eigen::MatrixXd block_map(const ModelSpec& spec, const LowRankParams& lr, int k) {
  const int J1 = spec.num_spline_columns();
  const int J = spec.tensor_size();
  const int rows_k = static_cast<int>(lr.factors[static_cast<std::size_t>(k)].rows());
  const int R = lr.rank;
  Eigen::MatrixXd Mk = Eigen::MatrixXd::Zero(spec.num_params(), static_cast<Eigen::Index>(rows_k) * R);
  std::vector<Eigen::VectorXd> vecs(lr.factors.size());
  for (int r = 0; r < R; ++r) {
    for (std::size_t j = 0; j < lr.factors.size(); ++j) vecs[j] = lr.factors[j].col(r);
    for (int l = 0; l < rows_k; ++l) {
      vecs[static_cast<std::size_t>(k)] = Eigen::VectorXd::Unit(rows_k, l);
      const DenseTensor T = outer_product(vecs);
      const Eigen::Index col = static_cast<Eigen::Index>(l) * R + r;
      for (int i = 0; i < spec.num_bases(); ++i) {
        for (int t = 0; t < J; ++t) Mk(static_cast<Eigen::Index>(i) * J1 + 1 + t, col) = T.data[static_cast<std::size_t>(i) * J + t];
      }
    }
  }
  return Mk;
}

struct AlsContext {
  const Dataset& data;
  const ModelSpec& spec;
  const CalibrationConfig& inner;
  DesignCache design;
  std::vector<Eigen::MatrixXd> level_designs;
  Eigen::MatrixXd D;  // difference operator when a penalty is active
  std::vector<std::size_t> active;
};

double objective_of(const AlsContext& ctx, const LowRankParams& lr) {
  return calibration_objective(ctx.design, ctx.data.y, ctx.spec, ctx.inner, to_param_matrix(ctx.spec, lr));
}

Eigen::MatrixXd solve_block(const AlsContext& ctx, const LowRankParams& lr, int k) {
  const Eigen::MatrixXd Mk = block_map(ctx.spec, lr, k);
  const Eigen::Index Pk = Mk.cols();
  const Eigen::Index N = ctx.data.size();
  const Eigen::VectorXd ys = ctx.data.y.array() + lr.shift;
  const Penalty& pen = ctx.inner.penalty;
  const bool sq_pen = pen.type == Penalty::Type::SquaredDiff && pen.lambda > 0.0;
  const bool abs_pen = pen.type == Penalty::Type::AbsDiff && pen.lambda > 0.0;
  Eigen::MatrixXd DM;
  if (sq_pen || abs_pen) DM = ctx.D * Mk;
  Eigen::MatrixXd H;
  if (sq_pen) H = 2.0 * pen.lambda * DM.transpose() * DM;
  std::vector<int> nonneg(static_cast<std::size_t>(Pk));
  for (Eigen::Index j = 0; j < Pk; ++j) nonneg[static_cast<std::size_t>(j)] = static_cast<int>(j);

  ipm::Options opt;
  opt.tolerance = ctx.inner.solver.tolerance_gap;
  opt.max_iterations = ctx.inner.solver.max_iterations;
  Eigen::VectorXd u;
  if (ctx.inner.error == CalibrationError::Superquantile) {
    SuperquantileData sd;
    sd.y = ys;
    for (std::size_t m : ctx.active) {
      sd.X.push_back(ctx.level_designs[m] * Mk);
      sd.levels.push_back(ctx.inner.levels[m]);
      sd.weights.push_back(ctx.inner.weights[m]);
    }
    const ErrorKind grid = ErrorKind::superquantile(0.5, ctx.inner.beta_grid_size, ctx.inner.beta_max);
    for (int b = 0; b < ctx.inner.beta_grid_size; ++b) sd.betas.push_back(beta_grid_point(grid, b));
    sd.beta_cell = ctx.inner.beta_max / ctx.inner.beta_grid_size;
    sd.nonneg = nonneg;
    sd.H = H;
    // Warm start at the current block, so the step can only improve on it.
    const Eigen::MatrixXd& cur = lr.factors[static_cast<std::size_t>(k)];
    Eigen::VectorXd start(Pk);
    for (Eigen::Index l = 0; l < cur.rows(); ++l) {
      for (int r = 0; r < lr.rank; ++r) start[l * lr.rank + r] = cur(l, r);
    }
    u = fit_superquantile(sd, opt.tolerance, opt.max_iterations, start, abs_pen ? DM : Eigen::MatrixXd(),
                          abs_pen ? pen.lambda : 0.0)
            .a;
  } else {
    const Eigen::Index extra = abs_pen ? DM.rows() : 0;
    const Eigen::Index rows = N * static_cast<Eigen::Index>(ctx.active.size()) + extra;
    Eigen::MatrixXd X(rows, Pk);
    Eigen::VectorXd y(rows), tau(rows), weight(rows);
    for (std::size_t a = 0; a < ctx.active.size(); ++a) {
      const std::size_t m = ctx.active[a];
      const Eigen::Index off = static_cast<Eigen::Index>(a) * N;
      X.middleRows(off, N).noalias() = ctx.level_designs[m] * Mk;
      y.segment(off, N) = ys;
      tau.segment(off, N).setConstant(ctx.inner.levels[m]);
      weight.segment(off, N).setConstant(ctx.inner.weights[m] / static_cast<double>(N));
    }
    if (abs_pen) {
      X.bottomRows(extra) = -DM;
      y.tail(extra).setZero();
      tau.tail(extra).setConstant(0.5);
      weight.tail(extra).setConstant(2.0 * pen.lambda);
    }
    PinballProgram program(std::move(X), std::move(y), std::move(tau), std::move(weight), nonneg, std::move(H));
    const ipm::Result r = ipm::solve(program, opt);
    if (!r.usable()) throw SolverError("block solve stopped with status " + ipm::to_string(r.status));
    u = program.coefficients(r.v);
  }
  const auto rows_k = lr.factors[static_cast<std::size_t>(k)].rows();
  Eigen::MatrixXd U(rows_k, lr.rank);
  for (Eigen::Index l = 0; l < rows_k; ++l) {
    for (int r = 0; r < lr.rank; ++r) U(l, r) = std::max(0.0, u[l * lr.rank + r]);
  }
  return U;
}

// Unit max entry for every column of U^(k), k >= 1; the scale moves into U^(0).
void normalize_columns(LowRankParams& lr) {
  for (std::size_t k = 1; k < lr.factors.size(); ++k) {
    for (int r = 0; r < lr.rank; ++r) {
      const double s = lr.factors[k].col(r).maxCoeff();
      if (s > 0.0) {
        lr.factors[k].col(r) /= s;
        lr.factors[0].col(r) *= s;
      }
    }
  }
}

double tensor_distance(const LowRankParams& a, const LowRankParams& b) {
  const DenseTensor ta = materialize_tensor(a);
  const DenseTensor tb = materialize_tensor(b);
  double s = 0.0;
  for (std::size_t i = 0; i < ta.data.size(); ++i) s += (ta.data[i] - tb.data[i]) * (ta.data[i] - tb.data[i]);
  return std::sqrt(s);
}

}  // namespace

double lowrank_objective(const Dataset& data, const ModelSpec& spec, const CalibrationConfig& config,
                         const LowRankParams& lr) {
  const DesignCache design = assemble_design(data, spec, config.levels);
  return calibration_objective(design, data.y, spec, config, to_param_matrix(spec, lr));
}

ALSResult als_calibrate_from(const Dataset& data, const ModelSpec& spec, const ALSConfig& config,
                             LowRankParams start) {
  config.validate();
  spec.validate();
  data.validate();
  if (data.size() == 0) throw InputError("ALS needs at least one observation");
  if (spec.num_factors() == 0) throw ConfigError("low-rank models need at least one factor");
  if (config.rank > spec.num_params()) throw ConfigError("rank exceeds the number of parameters");
  if ((spec.mode == Mode::CVaR) != (config.inner.error == CalibrationError::Superquantile)) {
    throw ConfigError("model mode and error kind do not match");
  }
  start.validate(spec);

  AlsContext ctx{data, spec, config.inner, assemble_design(data, spec, config.inner.levels), {}, {}, {}};
  for (std::size_t m = 0; m < config.inner.levels.size(); ++m) {
    ctx.level_designs.push_back(ctx.design.level_design(static_cast<Eigen::Index>(m)));
    if (config.inner.weights[m] > 0.0) ctx.active.push_back(m);
  }
  if (config.inner.penalty.type != Penalty::Type::None && config.inner.penalty.lambda > 0.0) {
    ctx.D = difference_matrix(spec, config.inner.penalty.order);
  }

  ALSResult out;
  LowRankParams lr = std::move(start);
  double obj = objective_of(ctx, lr);
  out.trace.initial_objective = obj;
  int step = 0;
  const int blocks = static_cast<int>(lr.factors.size());
  for (int sweep = 0; sweep < config.max_sweeps || config.max_steps > 0; ++sweep) {
    const LowRankParams before = lr;
    for (int k = 0; k < blocks; ++k) {
      if (config.max_steps > 0 && step >= config.max_steps) break;
      ++step;
      Eigen::MatrixXd U;
      try {
        U = solve_block(ctx, lr, k);
      } catch (const SolverError& e) {
        throw SolverError("ALS sweep " + std::to_string(sweep) + ", block " + std::to_string(k) + ": " + e.what());
      }
      if (!U.allFinite()) {
        throw NumericalError("ALS sweep " + std::to_string(sweep) + ", block " + std::to_string(k) +
                             ": factor became non-finite");
      }
      LowRankParams candidate = lr;
      candidate.factors[static_cast<std::size_t>(k)] = std::move(U);
      const double cand_obj = objective_of(ctx, candidate);
      ALSStep rec{step, sweep, k, obj, false};
      if (cand_obj <= obj) {
        lr = std::move(candidate);
        obj = cand_obj;
        rec.objective = obj;
        rec.accepted = true;
      }
      out.trace.steps.push_back(rec);
    }
    normalize_columns(lr);
    const double change = tensor_distance(before, lr);
    out.trace.sweep_change.push_back(change);
    if (config.max_steps > 0) {
      if (step >= config.max_steps) break;
      continue;
    }
    if (change <= config.epsilon) {
      out.trace.converged = true;
      break;
    }
  }
  out.params = std::move(lr);
  return out;
}

ALSResult als_calibrate(const Dataset& data, const ModelSpec& spec, const ALSConfig& config) {
  config.validate();
  const double shift = lowrank_shift(data.y);
  return als_calibrate_from(data, spec, config, initial_lowrank(spec, config.rank, config.init, config.seed, shift));
}

std::vector<RankSweepEntry> rank_sweep(const Dataset& data, const ModelSpec& spec, std::vector<int> ranks, int steps,
                                       const ALSConfig& base) {
  if (ranks.empty()) throw ConfigError("rank sweep needs at least one rank");
  if (steps < 0) throw ConfigError("rank sweep step count must be nonnegative");
  std::sort(ranks.begin(), ranks.end());
  if (std::adjacent_find(ranks.begin(), ranks.end()) != ranks.end()) throw ConfigError("ranks must be distinct");
  std::vector<RankSweepEntry> out;
  const double shift = lowrank_shift(data.y);
  LowRankParams prev;
  for (int rank : ranks) {
    ALSConfig cfg = base;
    cfg.rank = rank;
    cfg.max_steps = steps;
    LowRankParams start;
    if (out.empty()) {
      start = initial_lowrank(spec, rank, cfg.init, cfg.seed, shift);
    } else {
      start = prev;
      start.rank = rank;
      for (std::size_t k = 0; k < start.factors.size(); ++k) {
        Eigen::MatrixXd U(start.factors[k].rows(), rank);
        U.leftCols(prev.rank) = prev.factors[k];
        U.rightCols(rank - prev.rank).setConstant(k == 0 ? 0.0 : 1.0);
        start.factors[k] = std::move(U);
      }
    }
    RankSweepEntry e{rank, als_calibrate_from(data, spec, cfg, start)};
    prev = e.result.params;
    out.push_back(std::move(e));
  }
  return out;
}

CsvTable trace_table(const std::vector<RankSweepEntry>& sweep) {
  CsvTable t;
  t.header = {"rank", "step", "sweep", "block", "objective"};
  for (const auto& e : sweep) {
    for (const auto& s : e.result.trace.steps) {
      t.rows.push_back({std::to_string(e.rank), std::to_string(s.step), std::to_string(s.sweep),
                        std::to_string(s.block), format_double(s.objective)});
    }
  }
  return t;
}

}  // namespace fmmq
