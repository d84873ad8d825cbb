#include "fmmq/error_measures.hpp"
#include "fmmq/exceptions.hpp"
#include "fmmq/programs.hpp"

#include <cmath>

namespace fmmq {

PinballProgram::PinballProgram(Eigen::MatrixXd X, Eigen::VectorXd y, Eigen::VectorXd tau, Eigen::VectorXd weight,
                               std::vector<int> nonneg, Eigen::MatrixXd H, Eigen::VectorXd g)
    : X_(std::move(X)),
      y_(std::move(y)),
      tau_(std::move(tau)),
      weight_(std::move(weight)),
      nonneg_(std::move(nonneg)),
      H_(std::move(H)),
      g_(std::move(g)) {
  const Eigen::Index n = X_.rows();
  const Eigen::Index P = X_.cols();
  if (y_.size() != n || tau_.size() != n || weight_.size() != n) {
    throw ConfigError("pinball program: row data lengths differ");
  }
  if (H_.size() > 0 && (H_.rows() != P || H_.cols() != P)) throw ConfigError("pinball program: H has wrong shape");
  if (g_.size() == 0) g_ = Eigen::VectorXd::Zero(P);
  if (g_.size() != P) throw ConfigError("pinball program: linear term has wrong length");
  for (int j : nonneg_) {
    if (j < 0 || j >= P) throw ConfigError("pinball program: constrained index out of range");
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    if (!(tau_[r] > 0.0 && tau_[r] < 1.0)) throw DomainError("pinball program: level outside (0,1)");
    if (!(weight_[r] > 0.0)) throw ConfigError("pinball program: row weights must be positive");
  }
  if (!X_.allFinite() || !y_.allFinite()) throw InputError("pinball program: non-finite data");

  f_.resize(P + n);
  f_ << g_, weight_;
  h_.setZero(2 * n + static_cast<Eigen::Index>(nonneg_.size()));
  h_.segment(0, n) = tau_.cwiseProduct(y_);
  h_.segment(n, n) = -(1.0 - tau_.array()).matrix().cwiseProduct(y_);
}

void PinballProgram::apply_G(const Eigen::VectorXd& v, Eigen::VectorXd& out) const {
  const Eigen::Index n = X_.rows();
  const Eigen::Index P = X_.cols();
  const Eigen::VectorXd xa = X_ * v.head(P);
  const auto e = v.tail(n);
  out.resize(num_rows());
  out.segment(0, n) = e + tau_.cwiseProduct(xa);
  out.segment(n, n) = e - (1.0 - tau_.array()).matrix().cwiseProduct(xa);
  for (std::size_t s = 0; s < nonneg_.size(); ++s) out[2 * n + static_cast<Eigen::Index>(s)] = v[nonneg_[s]];
}

void PinballProgram::apply_Gt(const Eigen::VectorXd& lambda, Eigen::VectorXd& out) const {
  const Eigen::Index n = X_.rows();
  const Eigen::Index P = X_.cols();
  const auto la = lambda.segment(0, n);
  const auto lb = lambda.segment(n, n);
  out.resize(P + n);
  const Eigen::VectorXd mix = tau_.cwiseProduct(la) - (1.0 - tau_.array()).matrix().cwiseProduct(lb);
  out.head(P).noalias() = X_.transpose() * mix;
  for (std::size_t s = 0; s < nonneg_.size(); ++s) out[nonneg_[s]] += lambda[2 * n + static_cast<Eigen::Index>(s)];
  out.tail(n) = la + lb;
}

void PinballProgram::apply_H(const Eigen::VectorXd& v, Eigen::VectorXd& out) const {
  out.setZero(v.size());
  if (H_.size() > 0) out.head(X_.cols()).noalias() = H_ * v.head(X_.cols());
}

void PinballProgram::factor(const Eigen::VectorXd& w) {
  const Eigen::Index n = X_.rows();
  const Eigen::Index P = X_.cols();
  const auto wa = w.segment(0, n).array();
  const auto wb = w.segment(n, n).array();
  diag_e_ = (wa + wb).matrix();
  couple_ = (wa * tau_.array() - wb * (1.0 - tau_.array())).matrix();
  // Schur complement of the e block: tau and 1 - tau combine to wa*wb/(wa+wb).
  const Eigen::VectorXd d = (wa * wb / (wa + wb)).sqrt().matrix();

  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(P, P);
  const Eigen::MatrixXd Xs = d.asDiagonal() * X_;
  K.selfadjointView<Eigen::Lower>().rankUpdate(Xs.transpose());
  K.triangularView<Eigen::StrictlyUpper>() = K.transpose();
  if (H_.size() > 0) K += H_;
  for (std::size_t s = 0; s < nonneg_.size(); ++s) K(nonneg_[s], nonneg_[s]) += w[2 * n + static_cast<Eigen::Index>(s)];
  K.diagonal().array() += ipm::regularization(K);
  ldlt_.compute(K);
  if (ldlt_.info() != Eigen::Success) throw SolverError("pinball program: normal matrix factorization failed");
}

void PinballProgram::solve(const Eigen::VectorXd& r, Eigen::VectorXd& dv) const {
  const Eigen::Index n = X_.rows();
  const Eigen::Index P = X_.cols();
  const auto ra = r.head(P);
  const auto re = r.tail(n);
  const Eigen::VectorXd scaled = couple_.cwiseProduct(re).cwiseQuotient(diag_e_);
  const Eigen::VectorXd rhs = ra - X_.transpose() * scaled;
  dv.resize(P + n);
  dv.head(P) = ldlt_.solve(rhs);
  const Eigen::VectorXd xda = X_ * dv.head(P);
  dv.tail(n) = (re - couple_.cwiseProduct(xda)).cwiseQuotient(diag_e_);
}

Eigen::VectorXd PinballProgram::initial_point() const {
  const Eigen::Index n = X_.rows();
  const Eigen::Index P = X_.cols();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(P + n);
  for (Eigen::Index r = 0; r < n; ++r) v[P + r] = pinball(tau_[r], y_[r]) + 1.0;
  return v;
}

double PinballProgram::objective(const Eigen::VectorXd& a) const {
  const Eigen::VectorXd res = y_ - X_ * a;
  double obj = g_.dot(a);
  for (Eigen::Index r = 0; r < res.size(); ++r) obj += weight_[r] * pinball(tau_[r], res[r]);
  if (H_.size() > 0) obj += 0.5 * a.dot(H_ * a);
  return obj;
}

}  // namespace fmmq
