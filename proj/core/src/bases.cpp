#include "fmmq/bases.hpp"

#include "fmmq/exceptions.hpp"
#include "fmmq/special.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fmmq {

namespace {

// Index i of the knot span [t_i, t_{i+1}) containing x, restricted to the
// nondegenerate range [degree, n_basis - 1]; x at the upper end maps to the last span.
int find_span(const std::vector<double>& t, int degree, int n_basis, double x) {
  if (x >= t[n_basis]) return n_basis - 1;
  if (x <= t[degree]) return degree;
  auto it = std::upper_bound(t.begin() + degree, t.begin() + n_basis + 1, x);
  return static_cast<int>(it - t.begin()) - 1;
}

// Cox-de Boor triangle: the degree+1 nonzero basis values B_{span-degree..span}(x).
void nonzero_basis(const std::vector<double>& t, int span, double x, int degree, double* out) {
  double left[32];
  double right[32];
  out[0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[j] = x - t[span + 1 - j];
    right[j] = t[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom > 0.0 ? out[r] / denom : 0.0;
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

void full_basis(const std::vector<double>& t, int degree, int n_basis, double x, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  const int span = find_span(t, degree, n_basis, x);
  double local[32];
  nonzero_basis(t, span, x, degree, local);
  for (int r = 0; r <= degree; ++r) out[span - degree + r] = local[r];
}

// Derivatives of all basis functions at x.
void full_derivative(const std::vector<double>& t, int degree, int n_basis, double x, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  if (degree == 0) return;
  const int span = find_span(t, degree, n_basis, x);
  double lower[32];
  nonzero_basis(t, span, x, degree - 1, lower);
  // lower[r] = B_{span-degree+1+r, degree-1}
  auto lower_at = [&](int j) {
    const int r = j - (span - degree + 1);
    return (r >= 0 && r < degree) ? lower[r] : 0.0;
  };
  for (int j = span - degree; j <= span; ++j) {
    double d = 0.0;
    const double h1 = t[j + degree] - t[j];
    const double h2 = t[j + degree + 1] - t[j + 1];
    if (h1 > 0.0) d += lower_at(j) / h1;
    if (h2 > 0.0) d -= lower_at(j + 1) / h2;
    out[j] = degree * d;
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

void check_open_unit(double p, const char* what) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError(std::string(what) + ": confidence level must lie in (0,1), got " + format_double(p));
  }
}

void check_unit_knots(const KnotVector& knots) {
  knots.validate();
  if (knots.lower != 0.0 || knots.upper != 1.0) {
    throw ConfigError("I-spline knots must span [0, 1]");
  }
}

}  // namespace

// KnotVector ------------------------------------------------------------------

void KnotVector::validate() const {
  if (degree < 1 || degree > 20) {
    throw ConfigError("spline degree must be in [1, 20], got " + std::to_string(degree));
  }
  if (!std::isfinite(lower) || !std::isfinite(upper) || !(lower < upper)) {
    throw ConfigError("knot vector requires finite lower < upper");
  }
  int multiplicity = 0;
  for (std::size_t i = 0; i < interior.size(); ++i) {
    const double k = interior[i];
    if (!(k > lower && k < upper)) {
      throw ConfigError("interior knot " + format_double(k) + " is not strictly inside (" +
                        format_double(lower) + ", " + format_double(upper) + ")");
    }
    if (i > 0 && k < interior[i - 1]) throw ConfigError("interior knots must be nondecreasing");
    multiplicity = (i > 0 && k == interior[i - 1]) ? multiplicity + 1 : 1;
    if (multiplicity > degree) {
      throw ConfigError("interior knot multiplicity exceeds the spline degree");
    }
  }
}

std::vector<double> KnotVector::full_sequence(int extra) const {
  std::vector<double> t;
  const int reps = degree + 1 + extra;
  t.reserve(2 * reps + interior.size());
  t.insert(t.end(), reps, lower);
  t.insert(t.end(), interior.begin(), interior.end());
  t.insert(t.end(), reps, upper);
  return t;
}

KnotVector equidistant_knots(double lower, double upper, int n_interior, int degree) {
  if (n_interior < 0) throw ConfigError("number of interior knots must be nonnegative");
  KnotVector kv;
  kv.lower = lower;
  kv.upper = upper;
  kv.degree = degree;
  for (int i = 1; i <= n_interior; ++i) {
    kv.interior.push_back(lower + (upper - lower) * i / (n_interior + 1));
  }
  kv.validate();
  return kv;
}

KnotVector quantile_knots(std::span<const double> data, int n_interior, int degree) {
  if (data.size() < 2) throw InputError("quantile knot placement needs at least two values");
  if (n_interior < 0) throw ConfigError("number of interior knots must be nonnegative");
  std::vector<double> sorted(data.begin(), data.end());
  std::sort(sorted.begin(), sorted.end());
  KnotVector kv;
  kv.lower = sorted.front();
  kv.upper = sorted.back();
  kv.degree = degree;
  const double n = static_cast<double>(sorted.size());
  for (int i = 1; i <= n_interior; ++i) {
    const double h = (n - 1.0) * i / (n_interior + 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double q = sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    if (q > kv.lower && q < kv.upper && (kv.interior.empty() || q > kv.interior.back())) {
      kv.interior.push_back(q);
    }
  }
  kv.validate();
  return kv;
}

// QuantileBasis -------------------------------------------------------------

QuantileBasis::QuantileBasis(Kind kind, double threshold, KnotVector knots, int index)
    : kind_(kind), threshold_(threshold), knots_(std::move(knots)), index_(index) {}

QuantileBasis QuantileBasis::constant() { return {Kind::Constant, 0.0, {}, 0}; }
QuantileBasis QuantileBasis::normal() { return {Kind::Normal, 0.0, {}, 0}; }
QuantileBasis QuantileBasis::logistic() { return {Kind::Logistic, 0.0, {}, 0}; }

QuantileBasis QuantileBasis::exp_right(double p0) {
  if (!(p0 >= 0.0 && p0 < 1.0)) throw ConfigError("exp_right threshold must lie in [0,1)");
  return {Kind::ExpRight, p0, {}, 0};
}

QuantileBasis QuantileBasis::exp_left(double p0) {
  if (!(p0 > 0.0 && p0 <= 1.0)) throw ConfigError("exp_left threshold must lie in (0,1]");
  return {Kind::ExpLeft, p0, {}, 0};
}

QuantileBasis QuantileBasis::ispline(KnotVector knots, int index) {
  check_unit_knots(knots);
  if (index < 0 || index >= knots.basis_count()) {
    throw ConfigError("I-spline index " + std::to_string(index) + " out of range");
  }
  return {Kind::ISpline, 0.0, std::move(knots), index};
}

double QuantileBasis::operator()(double p) const {
  check_open_unit(p, "quantile basis");
  switch (kind_) {
    case Kind::Constant:
      return 1.0;
    case Kind::Normal:
      return special::normal_quantile(p);
    case Kind::Logistic:
      return std::log(p) - std::log1p(-p);
    case Kind::ExpRight:
      return p > threshold_ ? -(std::log1p(-p) - std::log1p(-threshold_)) : 0.0;
    case Kind::ExpLeft:
      return p < threshold_ ? std::log(p / threshold_) : 0.0;
    case Kind::ISpline: {
      std::vector<double> buf(static_cast<std::size_t>(knots_.basis_count()));
      eval_ispline_basis_unchecked(knots_, p, buf);
      return buf[static_cast<std::size_t>(index_)];
    }
  }
  return 0.0;
}

std::string QuantileBasis::name() const {
  switch (kind_) {
    case Kind::Constant: return "constant";
    case Kind::Normal: return "normal";
    case Kind::Logistic: return "logistic";
    case Kind::ExpRight: return "exp_right(" + format_double(threshold_) + ")";
    case Kind::ExpLeft: return "exp_left(" + format_double(threshold_) + ")";
    case Kind::ISpline: return "ispline[" + std::to_string(index_) + "]";
  }
  return "?";
}

// CVaRBasis -----------------------------------------------------------------

CVaRBasis::CVaRBasis(Kind kind, KnotVector knots, int index)
    : kind_(kind), knots_(std::move(knots)), index_(index) {}

CVaRBasis CVaRBasis::constant() { return {Kind::Constant, {}, 0}; }
CVaRBasis CVaRBasis::normal() { return {Kind::NormalCVaR, {}, 0}; }
CVaRBasis CVaRBasis::logistic() { return {Kind::LogisticCVaR, {}, 0}; }
CVaRBasis CVaRBasis::exponential() { return {Kind::ExponentialCVaR, {}, 0}; }

CVaRBasis CVaRBasis::ispline(KnotVector knots, int index) {
  check_unit_knots(knots);
  if (index < 0 || index >= knots.basis_count()) {
    throw ConfigError("I-spline index " + std::to_string(index) + " out of range");
  }
  return {Kind::ISpline, std::move(knots), index};
}

double CVaRBasis::operator()(double p) const {
  if (!(p >= 0.0 && p < 1.0)) {
    throw DomainError("CVaR basis: confidence level must lie in [0,1), got " + format_double(p));
  }
  switch (kind_) {
    case Kind::Constant:
      return 1.0;
    case Kind::NormalCVaR:
      if (p == 0.0) return 0.0;
      return special::normal_pdf(special::normal_quantile(p)) / (1.0 - p);
    case Kind::LogisticCVaR:
      return special::binary_entropy(p) / (1.0 - p);
    case Kind::ExponentialCVaR:
      return 1.0 - std::log1p(-p);
    case Kind::ISpline: {
      std::vector<double> buf(static_cast<std::size_t>(knots_.basis_count()));
      eval_ispline_basis_unchecked(knots_, p, buf);
      return buf[static_cast<std::size_t>(index_)];
    }
  }
  return 0.0;
}

std::string CVaRBasis::name() const {
  switch (kind_) {
    case Kind::Constant: return "constant";
    case Kind::NormalCVaR: return "normal_cvar";
    case Kind::LogisticCVaR: return "logistic_cvar";
    case Kind::ExponentialCVaR: return "exponential_cvar";
    case Kind::ISpline: return "ispline[" + std::to_string(index_) + "]";
  }
  return "?";
}

double eval_quantile_basis(const QuantileBasis& fn, double p) { return fn(p); }
double eval_cvar_basis(const CVaRBasis& fn, double p) { return fn(p); }

// Spline bases --------------------------------------------------------------

void eval_bspline_basis(const FactorSplineSpec& spec, double x, std::span<double> out) {
  const KnotVector& kv = spec.knots;
  const int n = kv.basis_count();
  if (static_cast<int>(out.size()) != n) throw ConfigError("B-spline output buffer has wrong size");
  if (std::isnan(x)) throw InputError("B-spline evaluated at NaN");
  const std::vector<double> t = kv.full_sequence();

  if (x >= kv.lower && x <= kv.upper) {
    full_basis(t, kv.degree, n, x, out);
    return;
  }
  const double boundary = x < kv.lower ? kv.lower : kv.upper;
  full_basis(t, kv.degree, n, boundary, out);
  if (spec.extrapolation == Extrapolation::Clamp) return;

  std::vector<double> slope(static_cast<std::size_t>(n));
  full_derivative(t, kv.degree, n, boundary, slope);
  for (int j = 0; j < n; ++j) {
    out[j] = std::max(0.0, out[j] + slope[static_cast<std::size_t>(j)] * (x - boundary));
  }
}

Eigen::VectorXd eval_bspline_basis(const FactorSplineSpec& spec, double x) {
  spec.knots.validate();
  Eigen::VectorXd v(spec.basis_count());
  eval_bspline_basis(spec, x, std::span<double>(v.data(), static_cast<std::size_t>(v.size())));
  return v;
}

Eigen::VectorXd eval_mspline_basis(const KnotVector& knots, double x) {
  knots.validate();
  const int n = knots.basis_count();
  const int d = knots.degree;
  const std::vector<double> t = knots.full_sequence();
  Eigen::VectorXd v(n);
  if (x < knots.lower || x > knots.upper) {
    v.setZero();
    return v;
  }
  full_basis(t, d, n, x, std::span<double>(v.data(), static_cast<std::size_t>(n)));
  for (int j = 0; j < n; ++j) {
    const double width = t[j + d + 1] - t[j];
    v[j] *= width > 0.0 ? (d + 1) / width : 0.0;
  }
  return v;
}

void eval_ispline_basis_unchecked(const KnotVector& knots, double p, std::span<double> out) {
  const int n = knots.basis_count();
  const int d = knots.degree + 1;
  const std::vector<double> t = knots.full_sequence(1);
  std::vector<double> higher(static_cast<std::size_t>(n + 1));
  const double x = std::clamp(p, knots.lower, knots.upper);
  full_basis(t, d, n + 1, x, higher);
  // I_i = sum_{r > i} B_{r, degree+1} = 1 - sum_{r <= i} B_{r, degree+1}. Take
  // whichever partial sum is smaller so the flat parts come out exactly 0 or 1.
  double right = 0.0;
  for (int i = n - 1; i >= 0; --i) {
    right += higher[static_cast<std::size_t>(i + 1)];
    out[i] = right;
  }
  double left = 0.0;
  for (int i = 0; i < n; ++i) {
    left += higher[static_cast<std::size_t>(i)];
    out[i] = out[i] <= 0.5 ? out[i] : 1.0 - left;
    out[i] = std::clamp(out[i], 0.0, 1.0);
  }
}

Eigen::VectorXd eval_ispline_basis(const KnotVector& knots, double p) {
  check_unit_knots(knots);
  check_open_unit(p, "I-spline basis");
  Eigen::VectorXd v(knots.basis_count());
  eval_ispline_basis_unchecked(knots, p, std::span<double>(v.data(), static_cast<std::size_t>(v.size())));
  return v;
}

}  // namespace fmmq
