#pragma once

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

namespace fmmq {

/// Clamped knot vector on [lower, upper] with the given polynomial degree.
///
/// The number of basis functions is degree + interior.size() + 1. For
/// I-splines `degree` is the degree of the underlying M-spline, so the
/// integrated element has polynomial degree `degree + 1`.
struct KnotVector {
  double lower = 0.0;
  double upper = 1.0;
  std::vector<double> interior;
  int degree = 3;

  /// Throws ConfigError when the invariants do not hold.
  void validate() const;
  int basis_count() const { return degree + static_cast<int>(interior.size()) + 1; }

  /// Full knot sequence with the boundary knots repeated `degree + 1 + extra` times.
  std::vector<double> full_sequence(int extra = 0) const;

  bool operator==(const KnotVector&) const = default;
};

KnotVector equidistant_knots(double lower, double upper, int n_interior, int degree);

/// Interior knots at the empirical quantiles i/(n+1) of `data` (type-7 interpolation).
KnotVector quantile_knots(std::span<const double> data, int n_interior, int degree);

enum class Extrapolation {
  Clamp,              ///< evaluate as at the nearest boundary
  LinearNonnegative,  ///< linear continuation from the boundary, clipped at 0
};

struct FactorSplineSpec {
  KnotVector knots;
  Extrapolation extrapolation = Extrapolation::Clamp;

  int basis_count() const { return knots.basis_count(); }
  bool operator==(const FactorSplineSpec&) const = default;
};

// Basis quantile functions --------------------------------------------------

class QuantileBasis {
public:
  enum class Kind { Constant, Normal, Logistic, ExpRight, ExpLeft, ISpline };

  static QuantileBasis constant();
  static QuantileBasis normal();
  static QuantileBasis logistic();
  /// -ln((1-p)/(1-p0)) on (p0, 1), exactly 0 below p0.
  static QuantileBasis exp_right(double p0 = 0.75);
  /// ln(p/p0) on (0, p0), exactly 0 above p0.
  static QuantileBasis exp_left(double p0 = 0.25);
  /// Element `index` of the I-spline basis on [0, 1].
  static QuantileBasis ispline(KnotVector knots, int index);

  Kind kind() const { return kind_; }
  double threshold() const { return threshold_; }
  const KnotVector& knots() const { return knots_; }
  int index() const { return index_; }

  /// Throws DomainError unless 0 < p < 1.
  double operator()(double p) const;
  std::string name() const;

  bool operator==(const QuantileBasis&) const = default;

private:
  QuantileBasis(Kind kind, double threshold, KnotVector knots, int index);

  Kind kind_ = Kind::Constant;
  double threshold_ = 0.0;
  KnotVector knots_;
  int index_ = 0;
};

// Basis CVaR (superquantile) functions --------------------------------------

class CVaRBasis {
public:
  enum class Kind { Constant, NormalCVaR, LogisticCVaR, ExponentialCVaR, ISpline };

  static CVaRBasis constant();
  static CVaRBasis normal();
  static CVaRBasis logistic();
  static CVaRBasis exponential();
  /// Monotone I-spline element used directly as a CVaR-shaped basis.
  static CVaRBasis ispline(KnotVector knots, int index);

  Kind kind() const { return kind_; }
  const KnotVector& knots() const { return knots_; }
  int index() const { return index_; }

  /// Throws DomainError unless 0 <= p < 1. At p = 0 returns the distribution mean.
  double operator()(double p) const;
  std::string name() const;

  bool operator==(const CVaRBasis&) const = default;

private:
  CVaRBasis(Kind kind, KnotVector knots, int index);

  Kind kind_ = Kind::Constant;
  KnotVector knots_;
  int index_ = 0;
};

double eval_quantile_basis(const QuantileBasis& fn, double p);
double eval_cvar_basis(const CVaRBasis& fn, double p);

// Spline bases ---------------------------------------------------------------

/// B-spline basis values at x; writes basis_count() entries into `out`.
void eval_bspline_basis(const FactorSplineSpec& spec, double x, std::span<double> out);
Eigen::VectorXd eval_bspline_basis(const FactorSplineSpec& spec, double x);

/// Normalized M-spline basis (each element integrates to 1 over [lower, upper]).
Eigen::VectorXd eval_mspline_basis(const KnotVector& knots, double x);

/// I-spline basis on [0, 1]: element i is the integral of M-spline i from 0 to p.
/// Throws DomainError unless 0 < p < 1.
Eigen::VectorXd eval_ispline_basis(const KnotVector& knots, double p);

/// I-spline values without the open-interval check (p is clamped to [lower, upper]).
void eval_ispline_basis_unchecked(const KnotVector& knots, double p, std::span<double> out);

}  // namespace fmmq
