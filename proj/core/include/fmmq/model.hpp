#pragma once

#include "fmmq/bases.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <span>
#include <variant>
#include <vector>

namespace fmmq {

enum class Mode { Quantile, CVaR };

using ResponseBasis = std::variant<QuantileBasis, CVaRBasis>;

double eval_response_basis(const ResponseBasis& basis, double p);
std::string basis_name(const ResponseBasis& basis);

/// Factor model of mixture quantiles (or CVaRs) with one tensor-product
/// B-spline basis shared by every basis function:
///
///   G(p, x) = sum_i sum_j a[i][j] * B_j(x) * Q_i(p),   B_0 = Q_0 = 1.
///
/// Column j >= 1 enumerates the tensor product of the factor bases in
/// declaration order with the last factor varying fastest.
struct ModelSpec {
  std::vector<ResponseBasis> bases;
  std::vector<FactorSplineSpec> factors;
  Mode mode = Mode::Quantile;

  void validate() const;

  int num_bases() const { return static_cast<int>(bases.size()); }         // I + 1
  int num_factors() const { return static_cast<int>(factors.size()); }     // K
  int tensor_size() const;                                                  // prod_k L_k
  int num_spline_columns() const { return 1 + tensor_size(); }             // J + 1
  int num_params() const { return num_bases() * num_spline_columns(); }

  /// (Q_0(p), ..., Q_I(p)).
  Eigen::VectorXd basis_values(double p) const;
  /// (1, tensor-product B-spline values) of length J + 1.
  Eigen::VectorXd spline_row(std::span<const double> x) const;
  void spline_row(std::span<const double> x, std::span<double> out) const;
  /// Per-factor B-spline vectors (B_1(x_1), ..., B_K(x_K)).
  std::vector<Eigen::VectorXd> factor_bases(std::span<const double> x) const;

  bool operator==(const ModelSpec&) const = default;
};

/// Example 1: a00 + Q_N(p) a10, no factors.
ModelSpec location_scale_normal_spec();
/// Example 2: a00 + logistic(p) a10 + Q_N(p) a20, no factors.
ModelSpec logistic_normal_mixture_spec();
/// Example 3: single factor with degree-1 B-splines on [lower, upper], bases {1, Q_N}.
ModelSpec linear_normal_spec(double lower, double upper);
/// Example 4: I-spline bases in p times linear splines of each factor.
ModelSpec quantile_process_spec(const KnotVector& p_knots, std::span<const FactorSplineSpec> factors);

/// Coefficient layout a[i][j], i = 0..I (quantile bases), j = 0..J (spline columns).
class ParamMatrix {
public:
  ParamMatrix() = default;
  ParamMatrix(int rows, int cols) : a_(Eigen::MatrixXd::Zero(rows, cols)) {}
  explicit ParamMatrix(Eigen::MatrixXd a) : a_(std::move(a)) {}
  static ParamMatrix zeros(const ModelSpec& spec) {
    return ParamMatrix(spec.num_bases(), spec.num_spline_columns());
  }

  int rows() const { return static_cast<int>(a_.rows()); }
  int cols() const { return static_cast<int>(a_.cols()); }
  double& operator()(int i, int j) { return a_(i, j); }
  double operator()(int i, int j) const { return a_(i, j); }
  const Eigen::MatrixXd& matrix() const { return a_; }
  Eigen::MatrixXd& matrix() { return a_; }

  /// Flattened row-major vector (index i * (J+1) + j), the layout used by the solvers.
  Eigen::VectorXd flatten() const;
  static ParamMatrix unflatten(const Eigen::VectorXd& v, int rows, int cols);

  /// Rows i >= 1 nonnegative within `tol`.
  bool admissible(double tol = 0.0) const;

private:
  Eigen::MatrixXd a_;
};

/// Throws ConfigError when params do not match the ModelSpec layout.
void check_dimensions(const ModelSpec& spec, const ParamMatrix& params);

double eval_model(const ModelSpec& spec, const ParamMatrix& params, double p, std::span<const double> x);

/// Rank-R nonnegative CP factors of the (I+1) x L_1 x ... x L_K parameter tensor.
struct LowRankParams {
  int rank = 0;
  /// factors[0] is (I+1) x R; factors[k] is L_k x R.
  std::vector<Eigen::MatrixXd> factors;
  double shift = 0.0;

  void validate(const ModelSpec& spec) const;
};

/// Dense tensor stored row-major (last index fastest).
struct DenseTensor {
  std::vector<int> shape;
  std::vector<double> data;

  std::size_t size() const { return data.size(); }
  double at(std::span<const int> index) const;
};

DenseTensor outer_product(std::span<const Eigen::VectorXd> vectors);
/// Sum of entrywise products of two tensors of the same shape.
double tensor_dot(const DenseTensor& a, const DenseTensor& b);
DenseTensor materialize_tensor(const LowRankParams& lr);
/// Dense parameter matrix of a low-rank model: tensor in columns 1..J, -shift in a[0][0].
ParamMatrix to_param_matrix(const ModelSpec& spec, const LowRankParams& lr);

double eval_lowrank(const ModelSpec& spec, const LowRankParams& lr, double p, std::span<const double> x);

/// Inverse transform sampling: G(u, x).
double sample_response(const ModelSpec& spec, const ParamMatrix& params, std::span<const double> x, double u);

/// G(., x) bound to a fixed factor vector; nondecreasing for admissible params.
class ConditionalQuantileFn {
public:
  ConditionalQuantileFn(const ModelSpec& spec, const ParamMatrix& params, std::span<const double> x);
  double operator()(double p) const;

private:
  const ModelSpec* spec_;
  Eigen::VectorXd weights_;  // A * B(x), one weight per basis function
};

struct SurfacePoint {
  std::vector<double> x;
  double value = 0.0;
};

/// G(p, x) on the Cartesian product of per-factor grids, row-major (last factor fastest).
std::vector<SurfacePoint> surface_grid(const ModelSpec& spec, const ParamMatrix& params, double p,
                                       const std::vector<std::vector<double>>& x_grid);

}  // namespace fmmq
