#include "fmmq/exceptions.hpp"
#include "fmmq/model.hpp"
#include "fmmq/special.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <random>

using namespace fmmq;

namespace {

ModelSpec two_factor_spec() {
  ModelSpec s;
  s.bases = {QuantileBasis::constant(), QuantileBasis::normal(), QuantileBasis::exp_right(), QuantileBasis::exp_left()};
  s.factors = {FactorSplineSpec{equidistant_knots(-2.0, 2.0, 3, 3), Extrapolation::Clamp},
               FactorSplineSpec{equidistant_knots(0.0, 1.0, 1, 2), Extrapolation::Clamp}};
  return s;
}

LowRankParams random_lowrank(const ModelSpec& spec, int rank, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LowRankParams lr;
  lr.rank = rank;
  lr.shift = 0.7;
  lr.factors.push_back(Eigen::MatrixXd::NullaryExpr(spec.num_bases(), rank, [&] { return u(rng); }));
  for (const auto& f : spec.factors) {
    lr.factors.push_back(Eigen::MatrixXd::NullaryExpr(f.basis_count(), rank, [&] { return u(rng); }));
  }
  return lr;
}

}  // namespace

TEST(ModelSpec, Validation) {
  ModelSpec s = two_factor_spec();
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(s.num_bases(), 4);
  EXPECT_EQ(s.tensor_size(), 7 * 4);
  EXPECT_EQ(s.num_spline_columns(), 29);
  EXPECT_EQ(s.num_params(), 4 * 29);

  ModelSpec bad = s;
  std::swap(bad.bases[0], bad.bases[1]);
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = s;
  bad.bases.push_back(QuantileBasis::normal());
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = s;
  bad.bases.push_back(CVaRBasis::exponential());
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(ModelSpec, SplineRowIsKroneckerLastFactorFastest) {
  const ModelSpec s = two_factor_spec();
  const std::vector<double> x{0.3, 0.8};
  const auto fb = s.factor_bases(x);
  const Eigen::VectorXd row = s.spline_row(x);
  ASSERT_EQ(row.size(), s.num_spline_columns());
  EXPECT_EQ(row[0], 1.0);
  for (int a = 0; a < fb[0].size(); ++a) {
    for (int b = 0; b < fb[1].size(); ++b) EXPECT_DOUBLE_EQ(row[1 + a * fb[1].size() + b], fb[0][a] * fb[1][b]);
  }
}

TEST(EvalModel, ConstantModel) {
  const ModelSpec s = two_factor_spec();
  ParamMatrix a = ParamMatrix::zeros(s);
  a(0, 0) = 3.25;
  for (double p : {0.01, 0.5, 0.99}) {
    EXPECT_EQ(eval_model(s, a, p, std::vector<double>{-1.0, 0.5}), 3.25);
    EXPECT_EQ(eval_model(s, a, p, std::vector<double>{9.0, -4.0}), 3.25);
  }
}

TEST(EvalModel, LocationScaleNormal) {
  const ModelSpec s = location_scale_normal_spec();
  ParamMatrix a = ParamMatrix::zeros(s);
  a(1, 0) = 1.0;
  EXPECT_EQ(eval_model(s, a, 0.5, {}), 0.0);
  a(0, 0) = 2.0;
  a(1, 0) = 3.0;
  EXPECT_NEAR(eval_model(s, a, 0.975, {}), 2.0 + 3.0 * 1.959963984540054, 1e-12);
}

TEST(EvalModel, DimensionMismatch) {
  const ModelSpec s = two_factor_spec();
  EXPECT_THROW(eval_model(s, ParamMatrix(3, 29), 0.5, std::vector<double>{0.0, 0.0}), ConfigError);
  EXPECT_THROW(eval_model(s, ParamMatrix(4, 28), 0.5, std::vector<double>{0.0, 0.0}), ConfigError);
  EXPECT_THROW(eval_model(s, ParamMatrix::zeros(s), 0.5, std::vector<double>{0.0}), ConfigError);
}

TEST(EvalModel, MatchesDefinition) {
  const ModelSpec s = two_factor_spec();
  std::mt19937_64 rng(3);
  const ParamMatrix a = test::random_admissible(s, rng);
  const std::vector<double> x{0.4, 0.1};
  const double p = 0.83;
  const Eigen::VectorXd q = s.basis_values(p);
  const Eigen::VectorXd b = s.spline_row(x);
  double want = 0.0;
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) want += a(i, j) * b[j] * q[i];
  }
  EXPECT_NEAR(eval_model(s, a, p, x), want, 1e-12);
}

TEST(EvalModel, NoncrossingProperty) {
  const ModelSpec s = two_factor_spec();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  for (int t = 0; t < 10000; ++t) {
    const ParamMatrix a = test::random_admissible(s, rng);
    const std::vector<double> x{-3.0 + 6.0 * u(rng), -0.5 + 2.0 * u(rng)};
    double p1 = u(rng);
    double p2 = u(rng);
    if (p1 > p2) std::swap(p1, p2);
    if (p1 == p2 || p1 == 0.0) continue;
    if (eval_model(s, a, p1, x) > eval_model(s, a, p2, x)) ++violations;
  }
  EXPECT_EQ(violations, 0);
}

TEST(EvalModel, LinearInParameters) {
  const ModelSpec s = two_factor_spec();
  std::mt19937_64 rng(5);
  const ParamMatrix a = test::random_admissible(s, rng);
  const ParamMatrix b = test::random_admissible(s, rng);
  const double alpha = 0.3;
  const double beta = 1.7;
  const ParamMatrix c(alpha * a.matrix() + beta * b.matrix());
  for (double p : {0.05, 0.4, 0.9}) {
    const std::vector<double> x{0.2, 0.6};
    const double lhs = eval_model(s, c, p, x);
    const double rhs = alpha * eval_model(s, a, p, x) + beta * eval_model(s, b, p, x);
    EXPECT_NEAR(lhs, rhs, 1e-12 * (1.0 + std::abs(lhs)));
  }
}

TEST(ParamMatrix, FlattenRowMajorRoundTrip) {
  Eigen::MatrixXd m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  const ParamMatrix a(m);
  const Eigen::VectorXd v = a.flatten();
  EXPECT_EQ(v, (Eigen::VectorXd(6) << 1, 2, 3, 4, 5, 6).finished());
  EXPECT_EQ(ParamMatrix::unflatten(v, 2, 3).matrix(), m);
  EXPECT_TRUE(a.admissible());
  ParamMatrix b(m);
  b(1, 2) = -1e-12;
  EXPECT_FALSE(b.admissible());
  EXPECT_TRUE(b.admissible(1e-10));
  b(0, 0) = -5.0;  // row 0 is unconstrained
  EXPECT_TRUE(b.admissible(1e-10));
}

TEST(ConditionalQuantile, MonotoneInP) {
  const ModelSpec s = two_factor_spec();
  std::mt19937_64 rng(8);
  const ParamMatrix a = test::random_admissible(s, rng);
  const ConditionalQuantileFn q(s, a, std::vector<double>{0.1, 0.2});
  double prev = q(1e-4);
  for (int k = 1; k < 1000; ++k) {
    const double v = q(k / 1000.0);
    EXPECT_LE(prev, v);
    prev = v;
  }
  EXPECT_DOUBLE_EQ(q(0.3), eval_model(s, a, 0.3, std::vector<double>{0.1, 0.2}));
}

// Low rank ------------------------------------------------------------------------

TEST(LowRank, DenseEquivalence) {
  const ModelSpec s = two_factor_spec();
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rank : {1, 2, 5}) {
    const LowRankParams lr = random_lowrank(s, rank, rng);
    const ParamMatrix dense = to_param_matrix(s, lr);
    EXPECT_DOUBLE_EQ(dense(0, 0), -lr.shift);
    for (int t = 0; t < 100; ++t) {
      const double p = 0.001 + 0.998 * u(rng);
      const std::vector<double> x{-2.5 + 5.0 * u(rng), u(rng)};
      EXPECT_NEAR(eval_lowrank(s, lr, p, x), eval_model(s, dense, p, x), 1e-10);
    }
  }
}

TEST(LowRank, Validation) {
  const ModelSpec s = two_factor_spec();
  std::mt19937_64 rng(2);
  LowRankParams lr = random_lowrank(s, 2, rng);
  EXPECT_NO_THROW(lr.validate(s));
  LowRankParams zero = lr;
  zero.rank = 0;
  EXPECT_THROW(zero.validate(s), ConfigError);
  EXPECT_THROW(eval_lowrank(s, zero, 0.5, std::vector<double>{0.0, 0.0}), ConfigError);
  LowRankParams wrong = lr;
  wrong.factors[1].conservativeResize(3, 2);
  EXPECT_THROW(wrong.validate(s), ConfigError);
  LowRankParams neg = lr;
  neg.factors[2](0, 0) = -0.1;
  EXPECT_THROW(neg.validate(s), ConfigError);
}

TEST(LowRank, ConstantBasisOnlyGivesConstantModel) {
  const ModelSpec s = two_factor_spec();
  LowRankParams lr;
  lr.rank = 1;
  lr.shift = 0.0;
  Eigen::MatrixXd u0 = Eigen::MatrixXd::Zero(s.num_bases(), 1);
  u0(0, 0) = 2.5;
  lr.factors = {u0, Eigen::MatrixXd::Ones(7, 1), Eigen::MatrixXd::Ones(4, 1)};
  // Clamped B-splines sum to one, so the product of the factor sums is 1.
  for (double p : {0.1, 0.7}) {
    EXPECT_NEAR(eval_lowrank(s, lr, p, std::vector<double>{0.3, 0.9}), 2.5, 1e-14);
    EXPECT_NEAR(eval_lowrank(s, lr, p, std::vector<double>{-1.9, 0.1}), 2.5, 1e-14);
  }
}

TEST(LowRank, MaterializeOnesAndBruteForce) {
  LowRankParams ones;
  ones.rank = 1;
  ones.factors = {Eigen::MatrixXd::Ones(2, 1), Eigen::MatrixXd::Ones(3, 1), Eigen::MatrixXd::Ones(4, 1)};
  const DenseTensor t1 = materialize_tensor(ones);
  EXPECT_EQ(t1.shape, (std::vector<int>{2, 3, 4}));
  EXPECT_TRUE(std::all_of(t1.data.begin(), t1.data.end(), [](double v) { return v == 1.0; }));

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LowRankParams lr;
  lr.rank = 2;
  lr.factors = {Eigen::MatrixXd::NullaryExpr(2, 2, [&] { return u(rng); }),
                Eigen::MatrixXd::NullaryExpr(3, 2, [&] { return u(rng); }),
                Eigen::MatrixXd::NullaryExpr(4, 2, [&] { return u(rng); })};
  const DenseTensor t = materialize_tensor(lr);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 4; ++k) {
        double want = 0.0;
        for (int r = 0; r < 2; ++r) want += lr.factors[0](i, r) * lr.factors[1](j, r) * lr.factors[2](k, r);
        const std::vector<int> idx{i, j, k};
        EXPECT_NEAR(t.at(idx), want, 1e-15);
        EXPECT_GE(t.at(idx), 0.0);
      }
    }
  }
}

TEST(LowRank, TensorDotProductIdentity) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<Eigen::VectorXd> a{Eigen::VectorXd::NullaryExpr(3, [&] { return u(rng); }),
                                   Eigen::VectorXd::NullaryExpr(4, [&] { return u(rng); }),
                                   Eigen::VectorXd::NullaryExpr(5, [&] { return u(rng); })};
    std::vector<Eigen::VectorXd> b{Eigen::VectorXd::NullaryExpr(3, [&] { return u(rng); }),
                                   Eigen::VectorXd::NullaryExpr(4, [&] { return u(rng); }),
                                   Eigen::VectorXd::NullaryExpr(5, [&] { return u(rng); })};
    const double lhs = tensor_dot(outer_product(a), outer_product(b));
    const double rhs = a[0].dot(b[0]) * a[1].dot(b[1]) * a[2].dot(b[2]);
    EXPECT_NEAR(lhs, rhs, 64 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(rhs)));
  }
}

// Sampling and surfaces -----------------------------------------------------------------

TEST(SampleResponse, ConstantAndMonteCarlo) {
  const ModelSpec s = location_scale_normal_spec();
  ParamMatrix a = ParamMatrix::zeros(s);
  a(0, 0) = 1.5;
  EXPECT_EQ(sample_response(s, a, {}, 0.123), 1.5);
  a(1, 0) = 1.0;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> draws;
  draws.reserve(100000);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    double v = 0.0;
    do v = u(rng); while (v == 0.0);
    draws.push_back(sample_response(s, a, {}, v));
    sum += draws.back();
  }
  EXPECT_NEAR(sum / draws.size(), 1.5, 3e-2);
  std::sort(draws.begin(), draws.end());
  // Standard error of the empirical 0.9-quantile: sqrt(0.09 / n) / phi(z_0.9) ~ 0.0055.
  EXPECT_NEAR(draws[89999], eval_model(s, a, 0.9, {}), 0.03);
  EXPECT_THROW(sample_response(s, a, {}, 0.0), DomainError);
}

TEST(SurfaceGrid, OrderingAndNoncrossing) {
  const ModelSpec s = two_factor_spec();
  std::mt19937_64 rng(6);
  const ParamMatrix a = test::random_admissible(s, rng);
  const std::vector<std::vector<double>> grid{{-1.0, 0.0, 1.0}, {0.2, 0.8}};
  const auto lo = surface_grid(s, a, 0.05, grid);
  const auto hi = surface_grid(s, a, 0.95, grid);
  ASSERT_EQ(lo.size(), 6u);
  EXPECT_EQ(lo[1].x, (std::vector<double>{-1.0, 0.8}));
  EXPECT_EQ(lo[2].x, (std::vector<double>{0.0, 0.2}));
  for (std::size_t i = 0; i < lo.size(); ++i) {
    EXPECT_LE(lo[i].value, hi[i].value);
    EXPECT_NEAR(lo[i].value, eval_model(s, a, 0.05, lo[i].x), 1e-13);
  }
  EXPECT_THROW(surface_grid(s, a, 0.5, {{}, {0.1}}), ConfigError);
  EXPECT_THROW(surface_grid(s, a, 0.5, {}), ConfigError);
  EXPECT_THROW(surface_grid(s, a, 1.0, grid), DomainError);
}

TEST(SurfaceGrid, LinearNormalPlane) {
  const ModelSpec s = linear_normal_spec(0.0, 2.0);
  ParamMatrix a = ParamMatrix::zeros(s);
  // Degree-1 splines on [0, 2]: B1 = (2 - x)/2, B2 = x/2.
  a(0, 0) = 1.0;
  a(0, 1) = 0.0;
  a(0, 2) = 4.0;  // median 1 + 2x
  a(1, 1) = 1.0;
  a(1, 2) = 1.0;  // unit scale
  const auto pts = surface_grid(s, a, 0.5, {{0.0, 0.5, 1.0, 1.5, 2.0}});
  for (const auto& pt : pts) EXPECT_NEAR(pt.value, 1.0 + 2.0 * pt.x[0], 1e-14);
  const auto upper = surface_grid(s, a, 0.9, {{0.0, 2.0}});
  EXPECT_NEAR(upper[1].value - upper[0].value, 4.0, 1e-12);
}
