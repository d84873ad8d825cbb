#include "fmmq/ipm.hpp"

#include "fmmq/exceptions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fmmq::ipm {

std::string to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Acceptable: return "acceptable";
    case Status::MaxIterations: return "max_iterations";
    case Status::Stalled: return "stalled";
  }
  return "?";
}

double regularization(const Eigen::MatrixXd& K) {
  const double scale = K.size() > 0 ? K.diagonal().cwiseAbs().maxCoeff() : 0.0;
  return 1e-11 * std::max(scale, 1e-300);
}

namespace {

// Largest alpha in (0, 1] with x + alpha dx >= 0.
double max_step(const Eigen::VectorXd& x, const Eigen::VectorXd& dx) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (dx[i] < 0.0) alpha = std::min(alpha, -x[i] / dx[i]);
  }
  return alpha;
}

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

Result solve(Program& prog, const Options& opt) {
  const Eigen::Index n = prog.num_vars();
  const Eigen::Index m = prog.num_rows();
  const Eigen::VectorXd& f = prog.cost();
  const Eigen::VectorXd& h = prog.rhs();
  if (f.size() != n || h.size() != m) throw SolverError("program dimensions are inconsistent");
  if (m == 0) throw SolverError("program has no constraints");

  const double f_scale = 1.0 + inf_norm(f);
  const double h_scale = 1.0 + inf_norm(h);
  const bool quadratic = prog.has_quadratic();

  Eigen::VectorXd v = prog.initial_point();
  Eigen::VectorXd Gv(m), Gtl(n), Hv(n);
  prog.apply_G(v, Gv);
  Eigen::VectorXd lam = prog.initial_dual();
  Eigen::VectorXd xi;
  if (lam.size() == 0) {
    xi = (Gv - h).cwiseMax(1.0);
    lam = Eigen::VectorXd::Ones(m);
  } else {
    if (lam.size() != m) throw SolverError("initial multipliers have the wrong size");
    xi = (Gv - h).cwiseMax(1e-8 * h_scale);
    lam = lam.cwiseMax(1e-8 * f_scale);
  }

  Eigen::VectorXd rp(m), rd(n), w(m), rc(m), rhs(n), tmp_n(n), tmp_m(m);
  Eigen::VectorXd dv(n), dxi(m), dlam(m), dv_aff(n), dxi_aff(m), dlam_aff(m), ref_n(n);
  Eigen::VectorXd cg_x(n), cg_r(n), cg_z(n), cg_p(n), cg_q(n);
  Eigen::VectorXd rc_corr(m), dv_c(n), dxi_c(m), dlam_c(m);
  double shift = 0.0;

  // Newton direction for complementarity residual rc.
  auto direction = [&](const Eigen::VectorXd& rc_in, Eigen::VectorXd& dv_out, Eigen::VectorXd& dxi_out,
                       Eigen::VectorXd& dlam_out) {
    tmp_m = rc_in.cwiseQuotient(xi) + w.cwiseProduct(rp);
    prog.apply_Gt(tmp_m, tmp_n);
    rhs = -rd - tmp_n;
    prog.solve(rhs, dv_out);
    // The eliminations lose digits when the weights spread widely and the factored
    // matrix may carry a shift, so finish with conjugate gradients on the exact
    // operator, preconditioned by the factorization. Keep the best iterate.
    auto apply_K = [&](const Eigen::VectorXd& d, Eigen::VectorXd& out) {
      prog.apply_G(d, tmp_m);
      tmp_m.array() *= w.array();
      prog.apply_Gt(tmp_m, out);
      prog.apply_H(d, ref_n);
      out += ref_n + shift * d;
    };
    apply_K(dv_out, cg_q);
    cg_r = rhs - cg_q;
    double res_norm = cg_r.norm();
    const double target = 1e-15 * (1.0 + rhs.norm());
    if (res_norm > target) {
      cg_x = dv_out;
      prog.solve(cg_r, cg_z);
      cg_p = cg_z;
      double rz = cg_r.dot(cg_z);
      for (int it = 0; it < 50 && rz > 0.0; ++it) {
        apply_K(cg_p, cg_q);
        const double pq = cg_p.dot(cg_q);
        if (!(pq > 0.0)) break;
        const double alpha = rz / pq;
        cg_x += alpha * cg_p;
        cg_r -= alpha * cg_q;
        // Recompute the true residual of the candidate before accepting it.
        apply_K(cg_x, cg_q);
        const double true_res = (rhs - cg_q).norm();
        if (true_res < res_norm) {
          res_norm = true_res;
          dv_out = cg_x;
        }
        if (res_norm <= target) break;
        prog.solve(cg_r, cg_z);
        const double rz_next = cg_r.dot(cg_z);
        cg_p = cg_z + (rz_next / rz) * cg_p;
        rz = rz_next;
      }
    }
    prog.apply_G(dv_out, dxi_out);
    dxi_out += rp;
    dlam_out = -rc_in.cwiseQuotient(xi) - w.cwiseProduct(dxi_out);
  };

  Result res;
  Result best;
  double best_merit = std::numeric_limits<double>::infinity();
  int since_best = 0;
  int stalled = 0;
  for (int iter = 0;; ++iter) {
    prog.apply_G(v, Gv);
    prog.apply_Gt(lam, Gtl);
    prog.apply_H(v, Hv);
    rp = Gv - h - xi;
    rd = Hv + f - Gtl;
    const double quad = 0.5 * v.dot(Hv);
    const double pobj = f.dot(v) + quad;
    const double dobj = h.dot(lam) - quad;
    const double comp = xi.dot(lam);
    const double pinf = inf_norm(rp) / h_scale;
    const double dinf = inf_norm(rd) / f_scale;
    const double gap = std::max(std::abs(pobj - dobj), comp);
    const double rel_gap = gap / (1.0 + std::abs(pobj));

    res.v = v;
    res.lambda = lam;
    res.primal_objective = pobj;
    res.dual_objective = dobj;
    res.gap = std::abs(pobj - dobj);
    res.primal_infeasibility = pinf;
    res.dual_infeasibility = dinf;
    res.iterations = iter;

    if (!std::isfinite(pobj) || !std::isfinite(dobj) || !v.allFinite()) {
      throw SolverError("interior point iterates became non-finite at iteration " + std::to_string(iter));
    }
    if (pinf <= opt.tolerance && dinf <= opt.tolerance && rel_gap <= opt.tolerance) {
      res.status = Status::Optimal;
      return res;
    }
    // Near the end rounding can make the residuals grow again, so keep the best iterate.
    const double merit = std::max({pinf, dinf, rel_gap});
    if (merit < 0.5 * best_merit) {
      best = res;
      best_merit = merit;
      since_best = 0;
    } else if (++since_best >= 30) {
      stalled = 5;
    }
    if (iter >= opt.max_iterations || stalled >= 5) {
      res = best;
      res.iterations = iter;
      const bool acceptable = best_merit <= 1e3 * opt.tolerance;
      res.status = acceptable ? Status::Acceptable : (stalled >= 5 ? Status::Stalled : Status::MaxIterations);
      return res;
    }

    const double mu = comp / static_cast<double>(m);
    w = lam.cwiseQuotient(xi);
    prog.factor(w);
    shift = prog.primal_shift();

    // Predictor.
    rc = xi.cwiseProduct(lam);
    direction(rc, dv_aff, dxi_aff, dlam_aff);
    double ap = max_step(xi, dxi_aff);
    double ad = max_step(lam, dlam_aff);
    if (quadratic) ap = ad = std::min(ap, ad);
    const double mu_aff = (xi + ap * dxi_aff).dot(lam + ad * dlam_aff) / static_cast<double>(m);
    const double sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0);

    // Corrector.
    rc = xi.cwiseProduct(lam) + dxi_aff.cwiseProduct(dlam_aff) - Eigen::VectorXd::Constant(m, sigma * mu);
    direction(rc, dv, dxi, dlam);
    ap = std::min(1.0, opt.step_fraction * max_step(xi, dxi));
    ad = std::min(1.0, opt.step_fraction * max_step(lam, dlam));
    if (quadratic) ap = ad = std::min(ap, ad);

    // Centrality correctors: push the complementarity products at a slightly longer
    // trial step back into [0.1, 10] times the target and keep the result while the
    // step grows.
    for (int corr = 0; corr < opt.centrality_correctors && std::min(ap, ad) < 0.9; ++corr) {
      const double ap_t = std::min(1.0, 1.5 * ap + 0.1);
      const double ad_t = std::min(1.0, 1.5 * ad + 0.1);
      const double target = sigma * mu;
      tmp_m = (xi + ap_t * dxi).cwiseProduct(lam + ad_t * dlam);
      for (Eigen::Index i = 0; i < m; ++i) {
        const double p = tmp_m[i];
        if (p < 0.1 * target) {
          tmp_m[i] = 0.1 * target - p;
        } else if (p > 10.0 * target) {
          tmp_m[i] = std::max(10.0 * target - p, -10.0 * target);
        } else {
          tmp_m[i] = 0.0;
        }
      }
      rc_corr = rc - tmp_m;
      direction(rc_corr, dv_c, dxi_c, dlam_c);
      double ap_c = std::min(1.0, opt.step_fraction * max_step(xi, dxi_c));
      double ad_c = std::min(1.0, opt.step_fraction * max_step(lam, dlam_c));
      if (quadratic) ap_c = ad_c = std::min(ap_c, ad_c);
      if (ap_c + ad_c < 1.01 * (ap + ad)) break;
      dv.swap(dv_c);
      dxi.swap(dxi_c);
      dlam.swap(dlam_c);
      rc.swap(rc_corr);
      ap = ap_c;
      ad = ad_c;
    }

    stalled = (ap < 1e-10 && ad < 1e-10) ? stalled + 1 : 0;
    v += ap * dv;
    xi += ap * dxi;
    lam += ad * dlam;
    // Keep strictly interior despite rounding.
    xi = xi.cwiseMax(std::numeric_limits<double>::min());
    lam = lam.cwiseMax(std::numeric_limits<double>::min());
  }
}

DenseProgram::DenseProgram(Eigen::VectorXd f, Eigen::MatrixXd G, Eigen::VectorXd h, Eigen::MatrixXd H)
    : f_(std::move(f)), G_(std::move(G)), h_(std::move(h)), H_(std::move(H)) {
  if (G_.rows() != h_.size() || G_.cols() != f_.size()) throw ConfigError("dense program dimensions mismatch");
  if (H_.size() > 0 && (H_.rows() != f_.size() || H_.cols() != f_.size())) {
    throw ConfigError("quadratic term has wrong shape");
  }
}

void DenseProgram::apply_H(const Eigen::VectorXd& v, Eigen::VectorXd& out) const {
  if (H_.size() == 0) {
    out.setZero(v.size());
  } else {
    out.noalias() = H_ * v;
  }
}

void DenseProgram::factor(const Eigen::VectorXd& w) {
  Eigen::MatrixXd K = G_.transpose() * w.asDiagonal() * G_;
  if (H_.size() > 0) K += H_;
  K.diagonal().array() += regularization(K);
  ldlt_.compute(K);
  if (ldlt_.info() != Eigen::Success) throw SolverError("normal matrix factorization failed");
}

}  // namespace fmmq::ipm
