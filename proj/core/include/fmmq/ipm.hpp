#pragma once

#include <Eigen/Core>
#include <Eigen/Cholesky>

#include <string>

namespace fmmq::ipm {

/// Convex program  min f'v + 1/2 v'Hv  subject to  Gv >= h.
///
/// Implementations expose G and H only through products and supply a solver
/// for the normal matrix H + G' diag(w) G, so that structure can be exploited.
class Program {
public:
  virtual ~Program() = default;

  virtual Eigen::Index num_vars() const = 0;
  virtual Eigen::Index num_rows() const = 0;
  virtual const Eigen::VectorXd& cost() const = 0;
  virtual const Eigen::VectorXd& rhs() const = 0;

  virtual void apply_G(const Eigen::VectorXd& v, Eigen::VectorXd& out) const = 0;
  virtual void apply_Gt(const Eigen::VectorXd& lambda, Eigen::VectorXd& out) const = 0;

  virtual bool has_quadratic() const { return false; }
  virtual void apply_H(const Eigen::VectorXd& v, Eigen::VectorXd& out) const { out.setZero(v.size()); }

  /// Prepare to solve with H + G' diag(w) G for the given positive row weights.
  virtual void factor(const Eigen::VectorXd& w) = 0;
  virtual void solve(const Eigen::VectorXd& r, Eigen::VectorXd& dv) const = 0;
  /// Multiple of the identity that factor() added to the whole normal matrix. It acts
  /// as a proximal term, so directions are refined against the shifted matrix.
  virtual double primal_shift() const { return 0.0; }

  virtual Eigen::VectorXd initial_point() const { return Eigen::VectorXd::Zero(num_vars()); }
  /// Starting multipliers, or empty for all ones. When given, the starting slacks are
  /// the row residuals at initial_point() instead of being raised to at least one.
  virtual Eigen::VectorXd initial_dual() const { return {}; }
};

struct Options {
  /// Relative primal/dual infeasibility and relative duality gap at termination.
  double tolerance = 1e-9;
  int max_iterations = 200;
  double step_fraction = 0.995;
  int centrality_correctors = 3;
};

enum class Status { Optimal, Acceptable, MaxIterations, Stalled };

std::string to_string(Status s);

struct Result {
  Status status = Status::MaxIterations;
  Eigen::VectorXd v;
  Eigen::VectorXd lambda;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double gap = 0.0;  ///< |primal - dual| objective
  double primal_infeasibility = 0.0;
  double dual_infeasibility = 0.0;
  int iterations = 0;

  bool usable() const { return status == Status::Optimal || status == Status::Acceptable; }
};

/// Mehrotra predictor-corrector primal-dual interior point method.
Result solve(Program& program, const Options& options = {});

/// Program with explicit dense G and H; useful for small problems and as a reference.
class DenseProgram final : public Program {
public:
  DenseProgram(Eigen::VectorXd f, Eigen::MatrixXd G, Eigen::VectorXd h, Eigen::MatrixXd H = {});

  Eigen::Index num_vars() const override { return f_.size(); }
  Eigen::Index num_rows() const override { return h_.size(); }
  const Eigen::VectorXd& cost() const override { return f_; }
  const Eigen::VectorXd& rhs() const override { return h_; }
  void apply_G(const Eigen::VectorXd& v, Eigen::VectorXd& out) const override { out.noalias() = G_ * v; }
  void apply_Gt(const Eigen::VectorXd& l, Eigen::VectorXd& out) const override {
    out.noalias() = G_.transpose() * l;
  }
  bool has_quadratic() const override { return H_.size() > 0; }
  void apply_H(const Eigen::VectorXd& v, Eigen::VectorXd& out) const override;
  void factor(const Eigen::VectorXd& w) override;
  void solve(const Eigen::VectorXd& r, Eigen::VectorXd& dv) const override { dv = ldlt_.solve(r); }

private:
  Eigen::VectorXd f_;
  Eigen::MatrixXd G_;
  Eigen::VectorXd h_;
  Eigen::MatrixXd H_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

/// Diagonal shift added to reduced normal matrices: the models carry an exact
/// null direction (constant column versus the spline partition of unity).
double regularization(const Eigen::MatrixXd& K);

}  // namespace fmmq::ipm
