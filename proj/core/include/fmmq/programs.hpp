#pragma once

#include "fmmq/ipm.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <vector>

namespace fmmq {

/// Weighted pinball regression as an LP/QP over v = [a; e]:
///
///   min  sum_r weight_r * rho_{tau_r}(y_r - x_r'a) + g'a + 1/2 a'Ha   s.t.  a_j >= 0, j in nonneg.
///
/// Each row r gets one epigraph variable e_r with two inequalities. The e block
/// is eliminated analytically, so a Newton step costs one P x P factorization.
class PinballProgram final : public ipm::Program {
public:
  PinballProgram(Eigen::MatrixXd X, Eigen::VectorXd y, Eigen::VectorXd tau, Eigen::VectorXd weight,
                 std::vector<int> nonneg, Eigen::MatrixXd H = {}, Eigen::VectorXd g = {});

  Eigen::Index num_params() const { return X_.cols(); }
  Eigen::Index num_obs() const { return X_.rows(); }

  Eigen::Index num_vars() const override { return f_.size(); }
  Eigen::Index num_rows() const override { return h_.size(); }
  const Eigen::VectorXd& cost() const override { return f_; }
  const Eigen::VectorXd& rhs() const override { return h_; }
  void apply_G(const Eigen::VectorXd& v, Eigen::VectorXd& out) const override;
  void apply_Gt(const Eigen::VectorXd& lambda, Eigen::VectorXd& out) const override;
  bool has_quadratic() const override { return H_.size() > 0; }
  void apply_H(const Eigen::VectorXd& v, Eigen::VectorXd& out) const override;
  void factor(const Eigen::VectorXd& w) override;
  void solve(const Eigen::VectorXd& r, Eigen::VectorXd& dv) const override;
  Eigen::VectorXd initial_point() const override;

  Eigen::VectorXd coefficients(const Eigen::VectorXd& v) const { return v.head(num_params()); }
  /// Objective at coefficients a, evaluated directly.
  double objective(const Eigen::VectorXd& a) const;

private:
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_, tau_, weight_;
  std::vector<int> nonneg_;
  Eigen::MatrixXd H_;
  Eigen::VectorXd g_;
  Eigen::VectorXd f_, h_;

  // Factorization state.
  Eigen::VectorXd couple_, diag_e_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

/// Input of the superquantile (CVaR) regression problem.
struct SuperquantileData {
  std::vector<Eigen::MatrixXd> X;  ///< one N x P design per level
  Eigen::VectorXd y;               ///< N responses
  std::vector<double> levels;      ///< p_m
  std::vector<double> weights;     ///< w_m
  std::vector<double> betas;       ///< grid beta_k
  double beta_cell = 0.0;          ///< midpoint cell width
  std::vector<int> nonneg;
  Eigen::MatrixXd H;               ///< optional quadratic penalty on a
};

/// Sum over levels of w_m * SuperquantileError_{p_m}(y - X_m a) as an LP/QP.
///
/// Each beta-grid term max{0, qbar_beta(Z)} uses the Rockafellar-Uryasev
/// epigraph with a scalar c, a scalar t and N tail variables s. Variables are
/// v = [a | c (MK) | t (MK) | s (MKN)]; all blocks except a are eliminated per
/// (level, beta) pair when solving the Newton system.
class SuperquantileProgram final : public ipm::Program {
public:
  explicit SuperquantileProgram(SuperquantileData data);

  Eigen::Index num_params() const { return P_; }

  Eigen::Index num_vars() const override { return f_.size(); }
  Eigen::Index num_rows() const override { return h_.size(); }
  const Eigen::VectorXd& cost() const override { return f_; }
  const Eigen::VectorXd& rhs() const override { return h_; }
  void apply_G(const Eigen::VectorXd& v, Eigen::VectorXd& out) const override;
  void apply_Gt(const Eigen::VectorXd& lambda, Eigen::VectorXd& out) const override;
  bool has_quadratic() const override { return d_.H.size() > 0; }
  void apply_H(const Eigen::VectorXd& v, Eigen::VectorXd& out) const override;
  void factor(const Eigen::VectorXd& w) override;
  void solve(const Eigen::VectorXd& r, Eigen::VectorXd& dv) const override;
  double primal_shift() const override { return shift_; }
  Eigen::VectorXd initial_point() const override;
  Eigen::VectorXd initial_dual() const override;

  Eigen::VectorXd coefficients(const Eigen::VectorXd& v) const { return v.head(P_); }
  /// Constant dropped from the LP objective: -sum_m w_m mean(y).
  double objective_offset() const { return offset_; }

private:
  Eigen::Index block(Eigen::Index m, Eigen::Index k) const { return m * K_ + k; }

  SuperquantileData d_;
  Eigen::Index P_ = 0, M_ = 0, K_ = 0, N_ = 0;
  Eigen::VectorXd alpha_over_n_;  // per k
  Eigen::VectorXd f_, h_;
  double offset_ = 0.0;

  // Offsets of variable and row blocks.
  Eigen::Index vc_ = 0, vt_ = 0, vs_ = 0;
  Eigen::Index r1_ = 0, r2_ = 0, r3_ = 0, r4_ = 0, r5_ = 0;

  // Factorization state.
  Eigen::MatrixXd kappa_, tau_, inv_sum_;  // N x MK
  Eigen::VectorXd w3_, minv00_, minv01_, minv11_;
  double shift_ = 0.0;
  std::vector<Eigen::MatrixXd> U1_, U2_;  // P x K per level
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

struct SuperquantileFit {
  Eigen::VectorXd a;
  double value = 0.0;
  double gap = 0.0;  ///< value minus the certified lower bound
  int iterations = 0;
  bool converged = false;
};

/// Same objective as SuperquantileProgram plus abs_lambda * |abs_D a|_1, minimized by
/// the proximal bundle method. Starts at `start`, or at the pinball fit when empty.
/// Throws SolverError when the gap stays above 1e3 * tolerance (relative).
SuperquantileFit fit_superquantile(const SuperquantileData& d, double tolerance, int max_iterations,
                                   const Eigen::VectorXd& start = {}, const Eigen::MatrixXd& abs_D = {},
                                   double abs_lambda = 0.0);

}  // namespace fmmq
