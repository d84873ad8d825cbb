#include "fmmq/exceptions.hpp"
#include "fmmq/programs.hpp"

#include <algorithm>
#include <cmath>

namespace fmmq {

// Row blocks, in order:
//   R1  s >= 0                                  (MKN)
//   R2  s + c + x_mn'a >= y_n                   (MKN)
//   R3  t >= 0                                  (MK)
//   R4  t - c - (alpha_k/N) sum_n s >= 0        (MK)
//   R5  a_j >= 0, j in nonneg
// with alpha_k = 1/(1 - beta_k). The s index of (m, k, n) is (m*K + k)*N + n.

SuperquantileProgram::SuperquantileProgram(SuperquantileData data) : d_(std::move(data)) {
  M_ = static_cast<Eigen::Index>(d_.X.size());
  K_ = static_cast<Eigen::Index>(d_.betas.size());
  N_ = d_.y.size();
  if (M_ == 0 || K_ == 0 || N_ == 0) throw ConfigError("superquantile program: empty levels, grid or data");
  P_ = d_.X.front().cols();
  if (static_cast<Eigen::Index>(d_.levels.size()) != M_ || static_cast<Eigen::Index>(d_.weights.size()) != M_) {
    throw ConfigError("superquantile program: levels and weights must match the designs");
  }
  for (const auto& X : d_.X) {
    if (X.rows() != N_ || X.cols() != P_) throw ConfigError("superquantile program: design shapes differ");
    if (!X.allFinite()) throw InputError("superquantile program: non-finite design");
  }
  if (!d_.y.allFinite()) throw InputError("superquantile program: non-finite responses");
  if (d_.H.size() > 0 && (d_.H.rows() != P_ || d_.H.cols() != P_)) {
    throw ConfigError("superquantile program: H has wrong shape");
  }
  for (int j : d_.nonneg) {
    if (j < 0 || j >= P_) throw ConfigError("superquantile program: constrained index out of range");
  }
  alpha_over_n_.resize(K_);
  for (Eigen::Index k = 0; k < K_; ++k) {
    const double b = d_.betas[static_cast<std::size_t>(k)];
    if (!(b >= 0.0 && b < 1.0)) throw DomainError("superquantile program: beta outside [0,1)");
    alpha_over_n_[k] = 1.0 / ((1.0 - b) * static_cast<double>(N_));
  }

  const Eigen::Index MK = M_ * K_;
  const Eigen::Index MKN = MK * N_;
  vc_ = P_;
  vt_ = vc_ + MK;
  vs_ = vt_ + MK;
  r1_ = 0;
  r2_ = MKN;
  r3_ = 2 * MKN;
  r4_ = r3_ + MK;
  r5_ = r4_ + MK;

  f_.setZero(vs_ + MKN);
  h_.setZero(r5_ + static_cast<Eigen::Index>(d_.nonneg.size()));
  const double ybar = d_.y.mean();
  offset_ = 0.0;
  for (Eigen::Index m = 0; m < M_; ++m) {
    const double wm = d_.weights[static_cast<std::size_t>(m)];
    const double pm = d_.levels[static_cast<std::size_t>(m)];
    if (!(pm > 0.0 && pm < 1.0)) throw DomainError("superquantile program: level outside (0,1)");
    // -E[Z] = -mean(y) + mean_n(x_mn)'a
    f_.head(P_) += wm * d_.X[static_cast<std::size_t>(m)].colwise().mean().transpose();
    offset_ -= wm * ybar;
    for (Eigen::Index k = 0; k < K_; ++k) f_[vt_ + block(m, k)] = wm * d_.beta_cell / (1.0 - pm);
    for (Eigen::Index k = 0; k < K_; ++k) h_.segment(r2_ + block(m, k) * N_, N_) = d_.y;
  }
}

void SuperquantileProgram::apply_G(const Eigen::VectorXd& v, Eigen::VectorXd& out) const {
  out.resize(num_rows());
  const auto a = v.head(P_);
  for (Eigen::Index m = 0; m < M_; ++m) {
    const Eigen::VectorXd xa = d_.X[static_cast<std::size_t>(m)] * a;
    for (Eigen::Index k = 0; k < K_; ++k) {
      const Eigen::Index b = block(m, k);
      const auto s = v.segment(vs_ + b * N_, N_);
      const double c = v[vc_ + b];
      const double t = v[vt_ + b];
      out.segment(r1_ + b * N_, N_) = s;
      out.segment(r2_ + b * N_, N_) = (s + xa).array() + c;
      out[r3_ + b] = t;
      out[r4_ + b] = t - c - alpha_over_n_[k] * s.sum();
    }
  }
  for (std::size_t j = 0; j < d_.nonneg.size(); ++j) out[r5_ + static_cast<Eigen::Index>(j)] = a[d_.nonneg[j]];
}

void SuperquantileProgram::apply_Gt(const Eigen::VectorXd& lambda, Eigen::VectorXd& out) const {
  out.setZero(num_vars());
  Eigen::VectorXd acc(N_);
  for (Eigen::Index m = 0; m < M_; ++m) {
    acc.setZero();
    for (Eigen::Index k = 0; k < K_; ++k) {
      const Eigen::Index b = block(m, k);
      const auto l1 = lambda.segment(r1_ + b * N_, N_);
      const auto l2 = lambda.segment(r2_ + b * N_, N_);
      const double l3 = lambda[r3_ + b];
      const double l4 = lambda[r4_ + b];
      acc += l2;
      out[vc_ + b] = l2.sum() - l4;
      out[vt_ + b] = l3 + l4;
      out.segment(vs_ + b * N_, N_) = (l1 + l2).array() - alpha_over_n_[k] * l4;
    }
    out.head(P_).noalias() += d_.X[static_cast<std::size_t>(m)].transpose() * acc;
  }
  for (std::size_t j = 0; j < d_.nonneg.size(); ++j) out[d_.nonneg[j]] += lambda[r5_ + static_cast<Eigen::Index>(j)];
}

void SuperquantileProgram::apply_H(const Eigen::VectorXd& v, Eigen::VectorXd& out) const {
  out.setZero(v.size());
  if (d_.H.size() > 0) out.head(P_).noalias() = d_.H * v.head(P_);
}

void SuperquantileProgram::factor(const Eigen::VectorXd& w) {
  const Eigen::Index MK = M_ * K_;
  kappa_.resize(N_, MK);
  tau_.resize(N_, MK);
  inv_sum_.resize(N_, MK);
  w3_.resize(MK);
  minv00_.resize(MK);
  minv01_.resize(MK);
  minv11_.resize(MK);
  U1_.assign(static_cast<std::size_t>(M_), Eigen::MatrixXd());
  U2_.assign(static_cast<std::size_t>(M_), Eigen::MatrixXd());

  // Primal shift delta on every variable, scaled like ipm::regularization on the full
  // normal matrix. Cells with t = 0 leave c and s nearly free, and without the shift
  // the direction grows without bound along them.
  double diag_max = 0.0;
  Eigen::VectorXd w2_total = Eigen::VectorXd::Zero(N_);
  for (Eigen::Index b = 0; b < MK; ++b) {
    const double an = alpha_over_n_[b % K_];
    const auto w1 = w.segment(r1_ + b * N_, N_).array();
    const auto w2 = w.segment(r2_ + b * N_, N_).array();
    const double w4 = w[r4_ + b];
    diag_max = std::max({diag_max, (w1 + w2).maxCoeff() + an * an * w4, w2.sum() + w4, w[r3_ + b] + w4});
  }
  for (Eigen::Index m = 0; m < M_; ++m) {
    w2_total.setZero();
    for (Eigen::Index k = 0; k < K_; ++k) w2_total += w.segment(r2_ + block(m, k) * N_, N_);
    const Eigen::VectorXd col = (d_.X[static_cast<std::size_t>(m)].array().square().colwise() * w2_total.array())
                                    .colwise()
                                    .sum()
                                    .transpose();
    diag_max = std::max(diag_max, col.maxCoeff());
  }
  const double delta = 1e-11 * std::max(diag_max, 1e-300);

  Eigen::MatrixXd Kmat = Eigen::MatrixXd::Zero(P_, P_);
  Eigen::MatrixXd V(P_, K_);
  if (d_.H.size() > 0) Kmat += d_.H;
  for (std::size_t j = 0; j < d_.nonneg.size(); ++j) {
    Kmat(d_.nonneg[j], d_.nonneg[j]) += w[r5_ + static_cast<Eigen::Index>(j)];
  }
  Eigen::VectorXd gamma0(K_), gamma(K_), beta1(K_), D(K_);

  for (Eigen::Index m = 0; m < M_; ++m) {
    const Eigen::MatrixXd& X = d_.X[static_cast<std::size_t>(m)];
    Eigen::VectorXd kappa_total = Eigen::VectorXd::Zero(N_);
    for (Eigen::Index k = 0; k < K_; ++k) {
      const Eigen::Index b = block(m, k);
      const auto w1 = w.segment(r1_ + b * N_, N_).array() + delta;
      const auto w2 = w.segment(r2_ + b * N_, N_).array();
      const double w3 = w[r3_ + b] + delta;
      const double w4 = w[r4_ + b];
      const double an = alpha_over_n_[k];
      inv_sum_.col(b) = (1.0 / (w1 + w2)).matrix();
      kappa_.col(b) = (w1 * w2 * inv_sum_.col(b).array()).matrix();
      tau_.col(b) = (w2 * inv_sum_.col(b).array()).matrix();
      kappa_total += kappa_.col(b);

      gamma0[k] = kappa_.col(b).sum();
      gamma[k] = gamma0[k] + delta;
      beta1[k] = 1.0 - an * tau_.col(b).sum();
      D[k] = 1.0 / w4 + 1.0 / w3 + an * an * inv_sum_.col(b).sum();
      // Inverse of [[gamma, -beta1], [-beta1, -D]].
      const double det = -gamma[k] * D[k] - beta1[k] * beta1[k];
      minv00_[b] = -D[k] / det;
      minv01_[b] = beta1[k] / det;
      minv11_[b] = gamma[k] / det;
      w3_[b] = w3;
    }
    // u1 = X'kappa, u2 = (alpha/N) X'tau, one column per beta.
    const Eigen::Index c0 = block(m, 0);
    Eigen::MatrixXd& U1 = U1_[static_cast<std::size_t>(m)];
    Eigen::MatrixXd& U2 = U2_[static_cast<std::size_t>(m)];
    U1.noalias() = X.transpose() * kappa_.middleCols(c0, K_);
    U2.noalias() = X.transpose() * tau_.middleCols(c0, K_);
    U2 = U2 * alpha_over_n_.asDiagonal();

    // Subtracting [u1 u2] Minv [u1 u2]' directly cancels catastrophically along
    // directions with X d = const, which c absorbs. Eliminate c, then rho:
    //   X'diag(kappa)X - u1 u1'/gamma0 = Xc'diag(kappa)Xc - (Xc'kappa)(Xc'kappa)'/gamma0
    // for X centered by any row vector; the delta in gamma adds a positive term.
    const Eigen::MatrixXd Xc = X.rowwise() - X.colwise().mean();
    const Eigen::MatrixXd Xs = kappa_total.cwiseSqrt().asDiagonal() * Xc;
    Kmat.selfadjointView<Eigen::Lower>().rankUpdate(Xs.transpose());
    const Eigen::MatrixXd U1c = Xc.transpose() * kappa_.middleCols(c0, K_);
    Eigen::VectorXd c_weight(K_), shift_weight(K_), rho_weight(K_);
    for (Eigen::Index k = 0; k < K_; ++k) {
      c_weight[k] = 1.0 / gamma0[k];
      shift_weight[k] = delta / (gamma0[k] * gamma[k]);
      rho_weight[k] = 1.0 / (D[k] + beta1[k] * beta1[k] / gamma[k]);
      V.col(k) = U2.col(k) + U1.col(k) * (beta1[k] / gamma[k]);
    }
    Eigen::MatrixXd corr = U1c * c_weight.asDiagonal() * U1c.transpose();
    corr.noalias() -= U1 * shift_weight.asDiagonal() * U1.transpose();
    corr.noalias() -= V * rho_weight.asDiagonal() * V.transpose();
    Kmat.triangularView<Eigen::Lower>() -= corr;
  }
  Kmat.triangularView<Eigen::StrictlyUpper>() = Kmat.transpose();
  Kmat.diagonal().array() += delta;
  shift_ = delta;
  ldlt_.compute(Kmat);
  if (ldlt_.info() != Eigen::Success) throw SolverError("superquantile program: normal matrix factorization failed");
}

void SuperquantileProgram::solve(const Eigen::VectorXd& r, Eigen::VectorXd& dv) const {
  dv.resize(num_vars());
  const Eigen::Index MK = M_ * K_;
  Eigen::VectorXd b1(MK), b2(MK);
  Eigen::VectorXd rhs = r.head(P_);
  Eigen::VectorXd acc(N_);
  for (Eigen::Index m = 0; m < M_; ++m) {
    acc.setZero();
    for (Eigen::Index k = 0; k < K_; ++k) {
      const Eigen::Index b = block(m, k);
      const auto rs = r.segment(vs_ + b * N_, N_);
      const Eigen::VectorXd trs = tau_.col(b).cwiseProduct(rs);
      acc += trs;
      b1[b] = r[vc_ + b] - trs.sum();
      b2[b] = -r[vt_ + b] / w3_[b] + alpha_over_n_[k] * inv_sum_.col(b).dot(rs);
    }
    rhs.noalias() -= d_.X[static_cast<std::size_t>(m)].transpose() * acc;
    const Eigen::Index c0 = block(m, 0);
    const Eigen::VectorXd z1 = minv00_.segment(c0, K_).cwiseProduct(b1.segment(c0, K_)) +
                               minv01_.segment(c0, K_).cwiseProduct(b2.segment(c0, K_));
    const Eigen::VectorXd z2 = minv01_.segment(c0, K_).cwiseProduct(b1.segment(c0, K_)) +
                               minv11_.segment(c0, K_).cwiseProduct(b2.segment(c0, K_));
    rhs.noalias() -= U1_[static_cast<std::size_t>(m)] * z1;
    rhs.noalias() -= U2_[static_cast<std::size_t>(m)] * z2;
  }
  const Eigen::VectorXd da = ldlt_.solve(rhs);
  dv.head(P_) = da;

  for (Eigen::Index m = 0; m < M_; ++m) {
    const Eigen::VectorXd xda = d_.X[static_cast<std::size_t>(m)] * da;
    const Eigen::VectorXd q1 = U1_[static_cast<std::size_t>(m)].transpose() * da;
    const Eigen::VectorXd q2 = U2_[static_cast<std::size_t>(m)].transpose() * da;
    for (Eigen::Index k = 0; k < K_; ++k) {
      const Eigen::Index b = block(m, k);
      const double e1 = b1[b] - q1[k];
      const double e2 = b2[b] - q2[k];
      const double dc = minv00_[b] * e1 + minv01_[b] * e2;
      const double rho = minv01_[b] * e1 + minv11_[b] * e2;
      dv[vc_ + b] = dc;
      dv[vt_ + b] = (r[vt_ + b] - rho) / w3_[b];
      const auto rs = r.segment(vs_ + b * N_, N_).array();
      const auto w2 = (tau_.col(b).array() / inv_sum_.col(b).array());
      dv.segment(vs_ + b * N_, N_) =
          ((rs + alpha_over_n_[k] * rho - w2 * (xda.array() + dc)) * inv_sum_.col(b).array()).matrix();
    }
  }
}

// Start from a = 0 with each c at the beta-quantile of y, so every cell is near its
// own optimum, and with multipliers that satisfy the dual equations.
Eigen::VectorXd SuperquantileProgram::initial_point() const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(num_vars());
  std::vector<double> sorted(d_.y.data(), d_.y.data() + N_);
  std::sort(sorted.begin(), sorted.end());
  const double mean = d_.y.mean();
  const double sd = std::sqrt((d_.y.array() - mean).square().mean());
  const double eta = 0.1 * sd + 1e-3 * (1.0 + d_.y.cwiseAbs().maxCoeff());
  for (Eigen::Index k = 0; k < K_; ++k) {
    const double beta = d_.betas[static_cast<std::size_t>(k)];
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(beta * static_cast<double>(N_)), sorted.size() - 1);
    const double c = sorted[idx];
    const Eigen::VectorXd s = (d_.y.array() - c).max(0.0).matrix() + Eigen::VectorXd::Constant(N_, eta);
    const double q = c + alpha_over_n_[k] * s.sum();
    for (Eigen::Index m = 0; m < M_; ++m) {
      const Eigen::Index b = block(m, k);
      v[vc_ + b] = c;
      v[vt_ + b] = std::max(q, 0.0) + eta;
      v.segment(vs_ + b * N_, N_) = s;
    }
  }
  return v;
}

Eigen::VectorXd SuperquantileProgram::initial_dual() const {
  Eigen::VectorXd lam(num_rows());
  for (Eigen::Index m = 0; m < M_; ++m) {
    double cost_sum = 0.0;
    for (Eigen::Index k = 0; k < K_; ++k) cost_sum += f_[vt_ + block(m, k)];
    // Share of the t cost carried by row R4; it makes the a equations balance.
    const double theta = std::min(0.9, d_.weights[static_cast<std::size_t>(m)] / std::max(cost_sum, 1e-300));
    for (Eigen::Index k = 0; k < K_; ++k) {
      const Eigen::Index b = block(m, k);
      const double ft = f_[vt_ + b];
      const double l4 = theta * ft;
      const double l2 = l4 / static_cast<double>(N_);
      lam[r4_ + b] = l4;
      lam[r3_ + b] = ft - l4;
      lam.segment(r2_ + b * N_, N_).setConstant(l2);
      lam.segment(r1_ + b * N_, N_).setConstant(alpha_over_n_[k] * l4 - l2);
    }
  }
  const double floor = 1e-6 * (1.0 + f_.head(P_).cwiseAbs().maxCoeff());
  for (std::size_t j = 0; j < d_.nonneg.size(); ++j) lam[r5_ + static_cast<Eigen::Index>(j)] = floor;
  return lam;
}

}  // namespace fmmq
