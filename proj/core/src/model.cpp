#include "fmmq/model.hpp"

#include "fmmq/exceptions.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace fmmq {

double eval_response_basis(const ResponseBasis& basis, double p) {
  return std::visit([p](const auto& fn) { return fn(p); }, basis);
}

std::string basis_name(const ResponseBasis& basis) {
  return std::visit([](const auto& fn) { return fn.name(); }, basis);
}

namespace {

bool is_constant(const ResponseBasis& b) {
  if (const auto* q = std::get_if<QuantileBasis>(&b)) return q->kind() == QuantileBasis::Kind::Constant;
  return std::get<CVaRBasis>(b).kind() == CVaRBasis::Kind::Constant;
}

}  // namespace

void ModelSpec::validate() const {
  if (bases.empty()) throw ConfigError("model needs at least the constant basis");
  if (!is_constant(bases.front())) throw ConfigError("first basis must be Constant");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < bases.size(); ++i) {
    const bool cvar = std::holds_alternative<CVaRBasis>(bases[i]);
    if (cvar != (mode == Mode::CVaR)) {
      throw ConfigError("basis " + std::to_string(i) + " (" + basis_name(bases[i]) +
                        ") does not match the model mode");
    }
    if (i > 0 && is_constant(bases[i])) throw ConfigError("only basis 0 may be Constant");
    if (!seen.insert(basis_name(bases[i])).second) {
      throw ConfigError("duplicate basis " + basis_name(bases[i]));
    }
    if (const auto* q = std::get_if<QuantileBasis>(&bases[i]); q && q->kind() == QuantileBasis::Kind::ISpline) {
      q->knots().validate();
    }
    if (const auto* c = std::get_if<CVaRBasis>(&bases[i]); c && c->kind() == CVaRBasis::Kind::ISpline) {
      c->knots().validate();
    }
  }
  for (const auto& f : factors) f.knots.validate();
  double product = 1.0;
  for (const auto& f : factors) product *= f.basis_count();
  if (product * static_cast<double>(bases.size()) > 5e7) throw ConfigError("parameter tensor too large");
}

int ModelSpec::tensor_size() const {
  if (factors.empty()) return 0;
  int n = 1;
  for (const auto& f : factors) n *= f.basis_count();
  return n;
}

Eigen::VectorXd ModelSpec::basis_values(double p) const {
  Eigen::VectorXd q(num_bases());
  for (int i = 0; i < num_bases(); ++i) q[i] = eval_response_basis(bases[i], p);
  return q;
}

std::vector<Eigen::VectorXd> ModelSpec::factor_bases(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != num_factors()) {
    throw ConfigError("factor vector has " + std::to_string(x.size()) + " entries, model expects " +
                      std::to_string(num_factors()));
  }
  std::vector<Eigen::VectorXd> out;
  out.reserve(factors.size());
  for (std::size_t k = 0; k < factors.size(); ++k) out.push_back(eval_bspline_basis(factors[k], x[k]));
  return out;
}

void ModelSpec::spline_row(std::span<const double> x, std::span<double> out) const {
  if (static_cast<int>(out.size()) != num_spline_columns()) throw ConfigError("spline row buffer size mismatch");
  const auto fb = factor_bases(x);
  out[0] = 1.0;
  if (fb.empty()) return;
  // Build the Kronecker product in place, last factor fastest.
  std::span<double> tensor = out.subspan(1);
  tensor[0] = 1.0;
  std::size_t filled = 1;
  for (const auto& b : fb) {
    const auto L = static_cast<std::size_t>(b.size());
    for (std::size_t r = filled; r-- > 0;) {
      const double v = tensor[r];
      for (std::size_t l = 0; l < L; ++l) tensor[r * L + l] = v * b[static_cast<Eigen::Index>(l)];
    }
    filled *= L;
  }
}

Eigen::VectorXd ModelSpec::spline_row(std::span<const double> x) const {
  Eigen::VectorXd row(num_spline_columns());
  spline_row(x, std::span<double>(row.data(), static_cast<std::size_t>(row.size())));
  return row;
}

ModelSpec location_scale_normal_spec() {
  return ModelSpec{{QuantileBasis::constant(), QuantileBasis::normal()}, {}, Mode::Quantile};
}

ModelSpec logistic_normal_mixture_spec() {
  return ModelSpec{{QuantileBasis::constant(), QuantileBasis::logistic(), QuantileBasis::normal()}, {}, Mode::Quantile};
}

ModelSpec linear_normal_spec(double lower, double upper) {
  FactorSplineSpec f{KnotVector{lower, upper, {}, 1}, Extrapolation::Clamp};
  return ModelSpec{{QuantileBasis::constant(), QuantileBasis::normal()}, {f}, Mode::Quantile};
}

ModelSpec quantile_process_spec(const KnotVector& p_knots, std::span<const FactorSplineSpec> factors) {
  ModelSpec spec;
  spec.bases.push_back(QuantileBasis::constant());
  for (int i = 0; i < p_knots.basis_count(); ++i) spec.bases.push_back(QuantileBasis::ispline(p_knots, i));
  spec.factors.assign(factors.begin(), factors.end());
  return spec;
}

// ParamMatrix -----------------------------------------------------------------

Eigen::VectorXd ParamMatrix::flatten() const {
  Eigen::VectorXd v(a_.size());
  for (Eigen::Index i = 0; i < a_.rows(); ++i) {
    for (Eigen::Index j = 0; j < a_.cols(); ++j) v[i * a_.cols() + j] = a_(i, j);
  }
  return v;
}

ParamMatrix ParamMatrix::unflatten(const Eigen::VectorXd& v, int rows, int cols) {
  if (v.size() != static_cast<Eigen::Index>(rows) * cols) throw ConfigError("parameter vector size mismatch");
  ParamMatrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = v[static_cast<Eigen::Index>(i) * cols + j];
  }
  return m;
}

bool ParamMatrix::admissible(double tol) const {
  for (Eigen::Index i = 1; i < a_.rows(); ++i) {
    for (Eigen::Index j = 0; j < a_.cols(); ++j) {
      if (!(a_(i, j) >= -tol)) return false;
    }
  }
  return true;
}

void check_dimensions(const ModelSpec& spec, const ParamMatrix& params) {
  if (params.rows() != spec.num_bases() || params.cols() != spec.num_spline_columns()) {
    throw ConfigError("parameter matrix is " + std::to_string(params.rows()) + "x" +
                      std::to_string(params.cols()) + ", model expects " + std::to_string(spec.num_bases()) +
                      "x" + std::to_string(spec.num_spline_columns()));
  }
}

double eval_model(const ModelSpec& spec, const ParamMatrix& params, double p, std::span<const double> x) {
  check_dimensions(spec, params);
  const Eigen::VectorXd q = spec.basis_values(p);
  const Eigen::VectorXd b = spec.spline_row(x);
  return q.dot(params.matrix() * b);
}

// Low rank --------------------------------------------------------------------

void LowRankParams::validate(const ModelSpec& spec) const {
  if (rank < 1) throw ConfigError("low-rank model needs rank >= 1");
  if (static_cast<int>(factors.size()) != spec.num_factors() + 1) {
    throw ConfigError("low-rank model needs one factor matrix per mode");
  }
  for (std::size_t k = 0; k < factors.size(); ++k) {
    const int expected = k == 0 ? spec.num_bases() : spec.factors[k - 1].basis_count();
    if (factors[k].rows() != expected || factors[k].cols() != rank) {
      throw ConfigError("factor matrix " + std::to_string(k) + " has wrong shape");
    }
    if (!factors[k].allFinite()) throw NumericalError("factor matrix " + std::to_string(k) + " is not finite");
    if ((factors[k].array() < 0.0).any()) throw ConfigError("factor matrix " + std::to_string(k) + " has negative entries");
  }
}

double DenseTensor::at(std::span<const int> index) const {
  if (index.size() != shape.size()) throw ConfigError("tensor index rank mismatch");
  std::size_t flat = 0;
  for (std::size_t k = 0; k < shape.size(); ++k) {
    if (index[k] < 0 || index[k] >= shape[k]) throw ConfigError("tensor index out of range");
    flat = flat * static_cast<std::size_t>(shape[k]) + static_cast<std::size_t>(index[k]);
  }
  return data[flat];
}

DenseTensor outer_product(std::span<const Eigen::VectorXd> vectors) {
  DenseTensor t;
  t.data = {1.0};
  for (const auto& v : vectors) {
    t.shape.push_back(static_cast<int>(v.size()));
    std::vector<double> next(t.data.size() * static_cast<std::size_t>(v.size()));
    for (std::size_t r = 0; r < t.data.size(); ++r) {
      for (Eigen::Index l = 0; l < v.size(); ++l) next[r * static_cast<std::size_t>(v.size()) + l] = t.data[r] * v[l];
    }
    t.data = std::move(next);
  }
  return t;
}

double tensor_dot(const DenseTensor& a, const DenseTensor& b) {
  if (a.shape != b.shape) throw ConfigError("tensor shapes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

DenseTensor materialize_tensor(const LowRankParams& lr) {
  if (lr.rank < 1 || lr.factors.empty()) throw ConfigError("low-rank model needs rank >= 1");
  DenseTensor out;
  std::size_t total = 1;
  for (const auto& f : lr.factors) {
    if (f.cols() != lr.rank) throw ConfigError("factor matrix column count differs from rank");
    out.shape.push_back(static_cast<int>(f.rows()));
    total *= static_cast<std::size_t>(f.rows());
  }
  out.data.assign(total, 0.0);
  std::vector<Eigen::VectorXd> cols(lr.factors.size());
  for (int r = 0; r < lr.rank; ++r) {
    for (std::size_t k = 0; k < lr.factors.size(); ++k) cols[k] = lr.factors[k].col(r);
    const DenseTensor term = outer_product(cols);
    for (std::size_t i = 0; i < total; ++i) out.data[i] += term.data[i];
  }
  return out;
}

ParamMatrix to_param_matrix(const ModelSpec& spec, const LowRankParams& lr) {
  lr.validate(spec);
  if (spec.num_factors() == 0) throw ConfigError("low-rank model needs at least one factor");
  const DenseTensor t = materialize_tensor(lr);
  const int rows = spec.num_bases();
  const int J = spec.tensor_size();
  ParamMatrix a(rows, J + 1);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < J; ++j) a(i, j + 1) = t.data[static_cast<std::size_t>(i) * J + j];
  }
  a(0, 0) = -lr.shift;
  return a;
}

double eval_lowrank(const ModelSpec& spec, const LowRankParams& lr, double p, std::span<const double> x) {
  lr.validate(spec);
  const Eigen::VectorXd q = spec.basis_values(p);
  const auto fb = spec.factor_bases(x);
  Eigen::VectorXd prod = lr.factors[0].transpose() * q;
  for (std::size_t k = 0; k < fb.size(); ++k) prod.array() *= (lr.factors[k + 1].transpose() * fb[k]).array();
  return prod.sum() - lr.shift;
}

double sample_response(const ModelSpec& spec, const ParamMatrix& params, std::span<const double> x, double u) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("uniform draw must lie in (0,1)");
  return eval_model(spec, params, u, x);
}

ConditionalQuantileFn::ConditionalQuantileFn(const ModelSpec& spec, const ParamMatrix& params,
                                             std::span<const double> x)
    : spec_(&spec) {
  check_dimensions(spec, params);
  weights_ = params.matrix() * spec.spline_row(x);
}

double ConditionalQuantileFn::operator()(double p) const { return weights_.dot(spec_->basis_values(p)); }

std::vector<SurfacePoint> surface_grid(const ModelSpec& spec, const ParamMatrix& params, double p,
                                       const std::vector<std::vector<double>>& x_grid) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("surface level must lie in (0,1)");
  if (static_cast<int>(x_grid.size()) != spec.num_factors()) throw ConfigError("grid needs one axis per factor");
  check_dimensions(spec, params);
  std::size_t total = 1;
  for (const auto& axis : x_grid) {
    if (axis.empty()) throw ConfigError("surface grid axis is empty");
    total *= axis.size();
  }
  if (x_grid.empty()) throw ConfigError("surface grid is empty");
  const Eigen::RowVectorXd w = spec.basis_values(p).transpose() * params.matrix();
  std::vector<SurfacePoint> out;
  out.reserve(total);
  std::vector<std::size_t> idx(x_grid.size(), 0);
  Eigen::VectorXd row(spec.num_spline_columns());
  for (std::size_t n = 0; n < total; ++n) {
    SurfacePoint pt;
    pt.x.resize(x_grid.size());
    for (std::size_t k = 0; k < x_grid.size(); ++k) pt.x[k] = x_grid[k][idx[k]];
    spec.spline_row(pt.x, std::span<double>(row.data(), static_cast<std::size_t>(row.size())));
    pt.value = w.dot(row);
    out.push_back(std::move(pt));
    for (std::size_t k = x_grid.size(); k-- > 0;) {
      if (++idx[k] < x_grid[k].size()) break;
      idx[k] = 0;
    }
  }
  return out;
}

}  // namespace fmmq
