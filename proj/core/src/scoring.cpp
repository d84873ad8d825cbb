#include "fmmq/scoring.hpp"

#include "fmmq/error_measures.hpp"
#include "fmmq/exceptions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace fmmq {

void CRPSConfig::validate() const {
  if (nodes < 3) throw ConfigError("CRPS quadrature needs at least 3 nodes");
}

namespace {

// Gauss-Legendre nodes on (-1, 1) by Newton iteration on P_n.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(static_cast<std::size_t>(n), 0.0);
  w.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    const auto a = static_cast<std::size_t>(i);
    const auto b = static_cast<std::size_t>(n - 1 - i);
    x[a] = -z;
    x[b] = z;
    w[a] = w[b] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

double crps_on_values(const QuadratureRule& rule, std::span<const double> q, double y) {
  for (std::size_t m = 1; m < q.size(); ++m) {
    if (q[m] < q[m - 1] - 1e-12 * (1.0 + std::abs(q[m - 1]))) {
      throw InputError("quantile function decreases between p = " + std::to_string(rule.nodes[m - 1]) +
                       " and p = " + std::to_string(rule.nodes[m]));
    }
  }
  double s = 0.0;
  for (std::size_t m = 0; m < q.size(); ++m) s += rule.weights[m] * pinball(rule.nodes[m], y - q[m]);
  return 2.0 * s;
}

// Basis values at the quadrature nodes, one row per node.
Eigen::MatrixXd node_basis(const ModelSpec& spec, const QuadratureRule& rule) {
  Eigen::MatrixXd Qn(static_cast<Eigen::Index>(rule.nodes.size()), spec.num_bases());
  for (std::size_t m = 0; m < rule.nodes.size(); ++m) Qn.row(static_cast<Eigen::Index>(m)) = spec.basis_values(rule.nodes[m]);
  return Qn;
}

}  // namespace

QuadratureRule make_rule(const CRPSConfig& config) {
  config.validate();
  QuadratureRule r;
  const int M = config.nodes;
  if (config.quadrature == CRPSConfig::Quadrature::UniformGrid) {
    for (int m = 0; m < M; ++m) {
      r.nodes.push_back((m + 0.5) / M);
      r.weights.push_back(1.0 / M);
    }
  } else {
    gauss_legendre(M, r.nodes, r.weights);
    for (std::size_t m = 0; m < r.nodes.size(); ++m) {
      r.nodes[m] = 0.5 * (r.nodes[m] + 1.0);
      r.weights[m] *= 0.5;
    }
  }
  return r;
}

double crps(const std::function<double(double)>& quantile_fn, double y, const CRPSConfig& config) {
  const QuadratureRule rule = make_rule(config);
  std::vector<double> q(rule.nodes.size());
  for (std::size_t m = 0; m < q.size(); ++m) q[m] = quantile_fn(rule.nodes[m]);
  return crps_on_values(rule, q, y);
}

double crps(const ConditionalQuantileFn& quantile_fn, double y, const CRPSConfig& config) {
  return crps([&](double p) { return quantile_fn(p); }, y, config);
}

Eigen::MatrixXd predict_quantiles(const ModelSpec& spec, const ParamMatrix& params, const Dataset& data,
                                  std::span<const double> levels) {
  check_dimensions(spec, params);
  Eigen::MatrixXd Ql(static_cast<Eigen::Index>(levels.size()), spec.num_bases());
  for (std::size_t l = 0; l < levels.size(); ++l) Ql.row(static_cast<Eigen::Index>(l)) = spec.basis_values(levels[l]);
  const DesignCache design = assemble_design(data, spec, {});
  return design.B * (Ql * params.matrix()).transpose();
}

double mean_crps(const ModelSpec& spec, const ParamMatrix& params, const Dataset& data, const CRPSConfig& config) {
  if (data.size() == 0) throw InputError("CRPS of an empty dataset");
  const QuadratureRule rule = make_rule(config);
  const Eigen::MatrixXd Qn = node_basis(spec, rule);
  check_dimensions(spec, params);
  const DesignCache design = assemble_design(data, spec, {});
  // Row n holds G(node_m, x_n).
  const Eigen::MatrixXd G = design.B * (Qn * params.matrix()).transpose();
  double total = 0.0;
  std::vector<double> q(rule.nodes.size());
  for (Eigen::Index n = 0; n < data.size(); ++n) {
    for (std::size_t m = 0; m < q.size(); ++m) q[m] = G(n, static_cast<Eigen::Index>(m));
    total += crps_on_values(rule, q, data.y[n]);
  }
  return total / static_cast<double>(data.size());
}

double coverage(const ModelSpec& spec, const ParamMatrix& params, const Dataset& data, double p_lo, double p_hi) {
  if (data.size() == 0) throw InputError("coverage of an empty dataset");
  if (!(p_lo > 0.0 && p_hi < 1.0 && p_lo <= p_hi)) throw DomainError("coverage needs 0 < p_lo <= p_hi < 1");
  const std::vector<double> levels{p_lo, p_hi};
  const Eigen::MatrixXd G = predict_quantiles(spec, params, data, levels);
  Eigen::Index hits = 0;
  for (Eigen::Index n = 0; n < data.size(); ++n) {
    if (G(n, 0) <= data.y[n] && data.y[n] <= G(n, 1)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

// Folds -------------------------------------------------------------------------

std::vector<Eigen::Index> FoldPlan::test_rows(int fold) const {
  std::vector<Eigen::Index> rows;
  for (std::size_t n = 0; n < fold_of.size(); ++n) {
    if (fold_of[n] == fold) rows.push_back(static_cast<Eigen::Index>(n));
  }
  return rows;
}

std::vector<Eigen::Index> FoldPlan::train_rows(int fold) const {
  std::vector<Eigen::Index> rows;
  for (std::size_t n = 0; n < fold_of.size(); ++n) {
    if (fold_of[n] != fold) rows.push_back(static_cast<Eigen::Index>(n));
  }
  return rows;
}

FoldPlan kfold(Eigen::Index n, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold needs k >= 2");
  if (k > n) throw ConfigError("k-fold needs k <= number of observations");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  // Fisher-Yates with rejection sampling: the standard distributions are not
  // portable across library implementations.
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw = rng();
    while (draw >= limit) draw = rng();
    std::swap(order[i - 1], order[static_cast<std::size_t>(draw % bound)]);
  }
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.fold_of.assign(static_cast<std::size_t>(n), 0);
  const Eigen::Index base = n / k;
  const Eigen::Index extra = n % k;
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const Eigen::Index size = base + (f < extra ? 1 : 0);
    for (Eigen::Index i = 0; i < size; ++i) plan.fold_of[static_cast<std::size_t>(order[pos++])] = f;
  }
  return plan;
}

FoldPlan kfold(const Dataset& data, int k, std::uint64_t seed) { return kfold(data.size(), k, seed); }

std::vector<CoverageInterval> default_intervals() {
  std::vector<CoverageInterval> out;
  for (double lo : {0.01, 0.05, 0.15, 0.25, 0.35, 0.45}) {
    const double hi = std::round((1.0 - lo) * 100.0) / 100.0;
    out.push_back({lo, hi, std::round((hi - lo) * 100.0) / 100.0});
  }
  return out;
}

double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

CVResult run_cv(const Dataset& data, const SpecBuilder& build, const CalibrationConfig& config, const FoldPlan& plan,
                const CVOptions& options) {
  if (static_cast<Eigen::Index>(plan.fold_of.size()) != data.size()) throw ConfigError("fold plan does not match data");
  options.crps.validate();
  const Dataset base = options.standardize == StandardizeMode::Global ? standardize(data).data : data;

  CVResult out;
  out.intervals = options.intervals;
  for (int f = 0; f < plan.k; ++f) {
    const auto train_idx = plan.train_rows(f);
    const auto test_idx = plan.test_rows(f);
    Dataset train = base.subset(train_idx);
    Dataset test = base.subset(test_idx);
    if (options.standardize == StandardizeMode::PerFold) {
      const Standardizer s = Standardizer::fit(train);
      train = s.apply(train);
      test = s.apply(test);
    }
    const ModelSpec spec = build(train);
    const CalibrationResult fit = calibrate(train, spec, config);
    FoldMetrics fm;
    fm.fold = f;
    fm.n_train = train.size();
    fm.n_test = test.size();
    fm.report = fit.report;
    fm.crps = mean_crps(spec, fit.params, test, options.crps);
    for (const auto& iv : options.intervals) fm.coverage.push_back(coverage(spec, fit.params, test, iv.lo, iv.hi));
    out.folds.push_back(std::move(fm));
  }
  std::vector<double> c;
  for (const auto& fm : out.folds) c.push_back(fm.crps);
  out.crps_mean = std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
  out.crps_std = sample_std(c);
  double dev = 0.0;
  for (std::size_t i = 0; i < options.intervals.size(); ++i) {
    double s = 0.0;
    for (const auto& fm : out.folds) s += fm.coverage[i];
    out.coverage_mean.push_back(s / static_cast<double>(out.folds.size()));
    dev += std::abs(out.coverage_mean.back() - options.intervals[i].target);
  }
  out.coverage_abs_deviation = options.intervals.empty() ? 0.0 : dev / static_cast<double>(options.intervals.size());
  return out;
}

CVResult run_cv(const Dataset& data, const ModelSpec& spec, const CalibrationConfig& config, const FoldPlan& plan,
                const CVOptions& options) {
  return run_cv(data, [&spec](const Dataset&) { return spec; }, config, plan, options);
}

CsvTable coverage_table(const CVResult& cv) {
  CsvTable t;
  t.header = {"interval_lo", "interval_hi", "target"};
  for (const auto& f : cv.folds) t.header.push_back("fold_" + std::to_string(f.fold + 1));
  t.header.push_back("mean");
  for (std::size_t i = 0; i < cv.intervals.size(); ++i) {
    std::vector<std::string> row{format_double(cv.intervals[i].lo), format_double(cv.intervals[i].hi),
                                 format_double(cv.intervals[i].target)};
    for (const auto& f : cv.folds) row.push_back(format_double(f.coverage[i]));
    row.push_back(format_double(cv.coverage_mean[i]));
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable crps_table(const CVResult& cv) {
  CsvTable t;
  t.header = {"fold", "crps"};
  for (const auto& f : cv.folds) t.rows.push_back({std::to_string(f.fold + 1), format_double(f.crps)});
  t.rows.push_back({"mean", format_double(cv.crps_mean)});
  t.rows.push_back({"std", format_double(cv.crps_std)});
  return t;
}

}  // namespace fmmq
