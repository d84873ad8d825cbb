#include "fmmq/bases.hpp"
#include "fmmq/exceptions.hpp"
#include "fmmq/special.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace fmmq;

namespace {

double logistic_cdf_bisect(double p) {
  double lo = -50.0;
  double hi = 50.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (1.0 / (1.0 + std::exp(-mid)) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<QuantileBasis> all_quantile_bases() {
  std::vector<QuantileBasis> out{QuantileBasis::constant(), QuantileBasis::normal(), QuantileBasis::logistic(),
                                 QuantileBasis::exp_right(), QuantileBasis::exp_left(), QuantileBasis::exp_right(0.9),
                                 QuantileBasis::exp_left(0.4)};
  const KnotVector kv{0.0, 1.0, {0.3, 0.5, 0.8}, 3};
  for (int i = 0; i < kv.basis_count(); ++i) out.push_back(QuantileBasis::ispline(kv, i));
  return out;
}

std::vector<CVaRBasis> all_cvar_bases() {
  std::vector<CVaRBasis> out{CVaRBasis::constant(), CVaRBasis::normal(), CVaRBasis::logistic(), CVaRBasis::exponential()};
  const KnotVector kv{0.0, 1.0, {0.25, 0.5, 0.75, 0.9}, 3};
  for (int i = 0; i < kv.basis_count(); ++i) out.push_back(CVaRBasis::ispline(kv, i));
  return out;
}

double integrate(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-14);
}

}  // namespace

// Quantile bases ------------------------------------------------------------------

TEST(QuantileBasis, PointValues) {
  EXPECT_EQ(QuantileBasis::normal()(0.5), 0.0);
  EXPECT_NEAR(QuantileBasis::normal()(0.975), 1.959964, 1e-5);
  EXPECT_NEAR(QuantileBasis::logistic()(0.75), std::log(3.0), 1e-15);
  EXPECT_NEAR(QuantileBasis::logistic()(0.75), logistic_cdf_bisect(0.75), 1e-12);
  EXPECT_EQ(QuantileBasis::exp_right()(0.75), 0.0);
  EXPECT_EQ(QuantileBasis::exp_right()(0.5), 0.0);
  EXPECT_NEAR(QuantileBasis::exp_right()(0.9), -std::log(4.0 - 4.0 * 0.9), 1e-15);
  EXPECT_EQ(QuantileBasis::exp_left()(0.25), 0.0);
  EXPECT_EQ(QuantileBasis::exp_left()(0.6), 0.0);
  EXPECT_NEAR(QuantileBasis::exp_left()(0.1), std::log(0.4), 1e-15);
  for (double p : {0.01, 0.5, 0.99}) EXPECT_EQ(QuantileBasis::constant()(p), 1.0);
}

TEST(QuantileBasis, DomainErrors) {
  for (const auto& b : all_quantile_bases()) {
    EXPECT_THROW(b(0.0), DomainError) << b.name();
    EXPECT_THROW(b(1.0), DomainError) << b.name();
    EXPECT_THROW(b(-0.5), DomainError) << b.name();
    EXPECT_THROW(b(std::nan("")), DomainError) << b.name();
  }
}

TEST(QuantileBasis, MonotoneOnDenseGrid) {
  constexpr int n = 10000;
  for (const auto& b : all_quantile_bases()) {
    double prev = b(0.5 / n);
    for (int k = 1; k < n; ++k) {
      const double v = b((k + 0.5) / n);
      ASSERT_LE(prev, v) << b.name() << " at k = " << k;
      prev = v;
    }
  }
}

TEST(QuantileBasis, ThresholdValidation) {
  EXPECT_THROW(QuantileBasis::exp_right(1.0), ConfigError);
  EXPECT_THROW(QuantileBasis::exp_left(0.0), ConfigError);
  EXPECT_THROW(QuantileBasis::ispline(KnotVector{0.0, 1.0, {}, 2}, 3), ConfigError);
  EXPECT_THROW(QuantileBasis::ispline(KnotVector{0.0, 2.0, {}, 2}, 0), ConfigError);
}

// CVaR bases ----------------------------------------------------------------------

TEST(CVaRBasis, PointValues) {
  EXPECT_NEAR(CVaRBasis::normal()(0.0), 0.0, 1e-15);
  EXPECT_NEAR(CVaRBasis::normal()(0.5), 2.0 * special::normal_pdf(0.0), 1e-14);
  EXPECT_NEAR(CVaRBasis::normal()(0.5), 0.797885, 1e-6);
  EXPECT_NEAR(CVaRBasis::logistic()(0.5), 2.0 * std::log(2.0), 1e-14);
  EXPECT_NEAR(CVaRBasis::logistic()(0.0), 0.0, 1e-15);
  EXPECT_NEAR(CVaRBasis::exponential()(0.0), 1.0, 1e-15);
  EXPECT_NEAR(CVaRBasis::exponential()(0.75), 1.0 - std::log(0.25), 1e-14);
  EXPECT_THROW(CVaRBasis::normal()(1.0), DomainError);
  EXPECT_THROW(CVaRBasis::exponential()(-0.1), DomainError);
}

TEST(CVaRBasis, NormalTailAverageByQuadrature) {
  // (1/(1-p)) * integral_p^1 Q_N(b) db with the endpoint singularity handled by tanh-sinh.
  boost::math::quadrature::tanh_sinh<double> ts;
  const double tail = ts.integrate([](double b) { return special::normal_quantile(b); }, 0.5, 1.0) / 0.5;
  EXPECT_NEAR(CVaRBasis::normal()(0.5), tail, 1e-8);
}

TEST(CVaRBasis, ConsistentWithQuantileBases) {
  boost::math::quadrature::tanh_sinh<double> ts;
  const std::vector<std::pair<QuantileBasis, CVaRBasis>> pairs{
      {QuantileBasis::normal(), CVaRBasis::normal()},
      {QuantileBasis::logistic(), CVaRBasis::logistic()},
  };
  for (double p = 0.1; p < 0.95; p += 0.1) {
    for (const auto& [q, c] : pairs) {
      const double tail = ts.integrate([&](double b) { return q(b); }, p, 1.0) / (1.0 - p);
      EXPECT_NEAR(c(p), tail, 1e-5) << q.name() << " p = " << p;
    }
    // Standard exponential quantile -ln(1 - b).
    const double tail = ts.integrate([](double b) { return -std::log1p(-b); }, p, 1.0) / (1.0 - p);
    EXPECT_NEAR(CVaRBasis::exponential()(p), tail, 1e-5) << "exponential p = " << p;
  }
}

TEST(CVaRBasis, DominatesQuantileAndMonotone) {
  constexpr int n = 10000;
  for (int k = 0; k < n; ++k) {
    const double p = (k + 0.5) / n;
    EXPECT_GE(CVaRBasis::normal()(p) + 1e-12, QuantileBasis::normal()(p));
    EXPECT_GE(CVaRBasis::logistic()(p) + 1e-12, QuantileBasis::logistic()(p));
    EXPECT_GE(CVaRBasis::exponential()(p) + 1e-12, -std::log1p(-p));
  }
  for (const auto& b : all_cvar_bases()) {
    double prev = b(0.0);
    for (int k = 1; k < n; ++k) {
      const double v = b(static_cast<double>(k) / n);
      ASSERT_LE(prev, v) << b.name() << " at k = " << k;
      prev = v;
    }
  }
}

// Knots ----------------------------------------------------------------------------

TEST(KnotVector, Validation) {
  EXPECT_NO_THROW((KnotVector{0.0, 1.0, {0.2, 0.2, 0.7}, 2}.validate()));
  EXPECT_THROW((KnotVector{1.0, 1.0, {}, 2}.validate()), ConfigError);
  EXPECT_THROW((KnotVector{0.0, 1.0, {0.0}, 2}.validate()), ConfigError);
  EXPECT_THROW((KnotVector{0.0, 1.0, {0.6, 0.4}, 2}.validate()), ConfigError);
  EXPECT_THROW((KnotVector{0.0, 1.0, {}, 0}.validate()), ConfigError);
  EXPECT_EQ((KnotVector{0.0, 1.0, {0.5}, 3}.basis_count()), 5);
}

TEST(KnotVector, Placement) {
  const auto kv = equidistant_knots(-1.0, 1.0, 3, 2);
  ASSERT_EQ(kv.interior.size(), 3u);
  EXPECT_DOUBLE_EQ(kv.interior[0], -0.5);
  EXPECT_DOUBLE_EQ(kv.interior[1], 0.0);
  EXPECT_DOUBLE_EQ(kv.interior[2], 0.5);
  const std::vector<double> data{5, 1, 3, 2, 4};
  const auto q = quantile_knots(data, 1, 3);
  EXPECT_EQ(q.lower, 1.0);
  EXPECT_EQ(q.upper, 5.0);
  EXPECT_DOUBLE_EQ(q.interior[0], 3.0);
}

// B-splines --------------------------------------------------------------------------

TEST(BSpline, BernsteinCases) {
  const FactorSplineSpec s{KnotVector{0.0, 1.0, {}, 3}, Extrapolation::Clamp};
  const Eigen::VectorXd at0 = eval_bspline_basis(s, 0.0);
  EXPECT_EQ(at0, (Eigen::Vector4d{1, 0, 0, 0}));
  const Eigen::VectorXd mid = eval_bspline_basis(s, 0.5);
  const Eigen::Vector4d want{0.125, 0.375, 0.375, 0.125};
  EXPECT_LT((mid - want).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(eval_bspline_basis(s, 1.0), (Eigen::Vector4d{0, 0, 0, 1}));
}

TEST(BSpline, ClampOutsideDomain) {
  const FactorSplineSpec s{KnotVector{-1.0, 2.0, {0.0, 0.5, 1.5}, 3}, Extrapolation::Clamp};
  EXPECT_EQ(eval_bspline_basis(s, 7.0), eval_bspline_basis(s, 2.0));
  EXPECT_EQ(eval_bspline_basis(s, -9.0), eval_bspline_basis(s, -1.0));
}

TEST(BSpline, PartitionOfUnityAndNonnegativity) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int degree = 1 + trial % 4;
    std::vector<double> interior;
    const int ni = trial % 6;
    for (int i = 0; i < ni; ++i) interior.push_back(-2.0 + 5.0 * (0.05 + 0.9 * u(rng)));
    std::sort(interior.begin(), interior.end());
    const FactorSplineSpec s{KnotVector{-2.0, 3.0, interior, degree}, Extrapolation::Clamp};
    for (int k = 0; k <= 1000; ++k) {
      const double x = -2.0 + 5.0 * k / 1000.0;
      const Eigen::VectorXd b = eval_bspline_basis(s, x);
      ASSERT_EQ(b.size(), s.basis_count());
      ASSERT_GE(b.minCoeff(), 0.0);
      ASSERT_NEAR(b.sum(), 1.0, 1e-10) << "degree " << degree << " x " << x;
    }
  }
}

TEST(BSpline, DeBoorOracle) {
  // Direct Cox-de Boor recursion on the full knot sequence, written without the
  // triangular scheme used by the library.
  const KnotVector kv{0.0, 1.0, {0.2, 0.45, 0.7}, 3};
  const std::vector<double> t = kv.full_sequence();
  std::function<double(int, int, double)> N = [&](int i, int d, double x) -> double {
    if (d == 0) return (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;
    double v = 0.0;
    if (t[i + d] > t[i]) v += (x - t[i]) / (t[i + d] - t[i]) * N(i, d - 1, x);
    if (t[i + d + 1] > t[i + 1]) v += (t[i + d + 1] - x) / (t[i + d + 1] - t[i + 1]) * N(i + 1, d - 1, x);
    return v;
  };
  const FactorSplineSpec s{kv, Extrapolation::Clamp};
  for (double x : {0.01, 0.2, 0.33, 0.5, 0.69, 0.9, 0.999}) {
    const Eigen::VectorXd b = eval_bspline_basis(s, x);
    for (int i = 0; i < kv.basis_count(); ++i) EXPECT_NEAR(b[i], N(i, 3, x), 1e-14) << i << " " << x;
  }
}

TEST(BSpline, LinearNonnegativeExtrapolation) {
  const FactorSplineSpec s{KnotVector{0.0, 1.0, {0.5}, 2}, Extrapolation::LinearNonnegative};
  const FactorSplineSpec c{KnotVector{0.0, 1.0, {0.5}, 2}, Extrapolation::Clamp};
  for (double x : {-3.0, -0.5, 1.5, 4.0}) EXPECT_GE(eval_bspline_basis(s, x).minCoeff(), 0.0);
  // Inside the domain both policies agree; just outside, the values follow the boundary slope.
  EXPECT_EQ(eval_bspline_basis(s, 0.3), eval_bspline_basis(c, 0.3));
  const double h = 1e-3;
  const Eigen::VectorXd inside = eval_bspline_basis(s, 1.0 - h);
  const Eigen::VectorXd edge = eval_bspline_basis(s, 1.0);
  const Eigen::VectorXd outside = eval_bspline_basis(s, 1.0 + h);
  for (int i = 0; i < 4; ++i) {
    const double expected = std::max(0.0, edge[i] + (edge[i] - inside[i]));
    EXPECT_NEAR(outside[i], expected, 1e-5) << i;
  }
}

// I-splines ----------------------------------------------------------------------------

TEST(ISpline, Limits) {
  const KnotVector kv{0.0, 1.0, {0.3, 0.6}, 2};
  const Eigen::VectorXd near0 = eval_ispline_basis(kv, 1e-12);
  EXPECT_LT(near0.maxCoeff(), 1e-9);
  const KnotVector plain{0.0, 1.0, {}, 2};
  const Eigen::VectorXd near1 = eval_ispline_basis(plain, 1.0 - 1e-12);
  for (int i = 0; i < near1.size(); ++i) EXPECT_NEAR(near1[i], 1.0, 1e-9);
  EXPECT_THROW(eval_ispline_basis(kv, 0.0), DomainError);
  EXPECT_THROW(eval_ispline_basis(kv, 1.0), DomainError);
}

TEST(ISpline, MatchesIntegratedMSpline) {
  const KnotVector kv{0.0, 1.0, {0.5}, 2};
  const Eigen::VectorXd at_half = eval_ispline_basis(kv, 0.5);
  for (int i = 0; i < kv.basis_count(); ++i) {
    const double want = integrate([&](double t) { return eval_mspline_basis(kv, t)[i]; }, 0.0, 0.5);
    EXPECT_NEAR(at_half[i], want, 1e-8) << i;
  }
  const KnotVector kv2{0.0, 1.0, {0.1, 0.35, 0.35, 0.8}, 3};
  for (double p : {0.05, 0.2, 0.35, 0.61, 0.97}) {
    const Eigen::VectorXd v = eval_ispline_basis(kv2, p);
    for (int i = 0; i < kv2.basis_count(); ++i) {
      double want = 0.0;
      // Split at the knots so the integrand is smooth on every piece.
      double a = 0.0;
      for (double b : {0.1, 0.35, 0.8, 1.0}) {
        const double hi = std::min(b, p);
        if (hi > a) want += integrate([&](double t) { return eval_mspline_basis(kv2, t)[i]; }, a, hi);
        a = b;
      }
      EXPECT_NEAR(v[i], want, 1e-8) << i << " at p " << p;
    }
  }
}

TEST(ISpline, MSplineIntegratesToOne) {
  const KnotVector kv{0.0, 1.0, {0.2, 0.5, 0.9}, 3};
  for (int i = 0; i < kv.basis_count(); ++i) {
    double total = 0.0;
    double a = 0.0;
    for (double b : {0.2, 0.5, 0.9, 1.0}) {
      total += integrate([&](double t) { return eval_mspline_basis(kv, t)[i]; }, a, b);
      a = b;
    }
    EXPECT_NEAR(total, 1.0, 1e-10) << i;
  }
}

TEST(ISpline, RangeAndMonotone) {
  const KnotVector kv{0.0, 1.0, {0.2, 0.4, 0.6, 0.8}, 3};
  Eigen::VectorXd prev = eval_ispline_basis(kv, 1e-4);
  for (int k = 1; k < 10000; ++k) {
    const Eigen::VectorXd v = eval_ispline_basis(kv, (k + 0.5) / 10001.0);
    ASSERT_GE(v.minCoeff(), 0.0);
    ASSERT_LE(v.maxCoeff(), 1.0 + 1e-12);
    ASSERT_TRUE(((v - prev).array() >= -1e-15).all()) << k;
    prev = v;
  }
}
