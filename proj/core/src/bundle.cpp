#include "fmmq/bundle.hpp"

#include "fmmq/exceptions.hpp"
#include "fmmq/ipm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fmmq::bundle {

namespace {

struct Cut {
  Eigen::VectorXd g;
  double c = 0.0;  // r_m >= g'a + c
  double weight = 0.0;  // multiplier in the last proximal step
  int age = 0;
};

struct Master {
  Eigen::VectorXd a;
  double model = 0.0;  // sum of cut maxima plus the quadratic term at a
  double bound = 0.0;  // objective of the master, for the lower bound problem
};

class Solver {
public:
  Solver(const Problem& p, const Options& o) : p_(p), o_(o), P_(p.dim), M_(p.pieces), cuts_(static_cast<std::size_t>(p.pieces)) {
    max_cuts_ = o.max_cuts > 0 ? o.max_cuts : static_cast<int>(std::max<Eigen::Index>(40, 4 * P_ + 10));
    if (p.H.size() > 0) H_ = p.H;
    else H_ = Eigen::MatrixXd::Zero(P_, P_);
  }

  double quad(const Eigen::VectorXd& a) const { return 0.5 * a.dot(H_ * a); }

  // Evaluates every piece at a, adds the cuts and returns the total objective.
  double evaluate(const Eigen::VectorXd& a) {
    double total = quad(a);
    Eigen::VectorXd g(P_);
    for (int m = 0; m < M_; ++m) {
      g.setZero();
      const double f = p_.oracle(m, a, g);
      if (!std::isfinite(f) || !g.allFinite()) throw NumericalError("bundle oracle returned a non-finite value");
      total += f;
      cuts_[static_cast<std::size_t>(m)].push_back(Cut{g, f - g.dot(a), 1.0, 0});
    }
    return total;
  }

  // min sum r_m + 1/2 a'Ha + u/2 |a - center|^2 over the cuts, or with u = 0 over the box.
  Master solve_master(const Eigen::VectorXd& center, double u, const Eigen::VectorXd* lo, const Eigen::VectorXd* hi) {
    const Eigen::Index n = P_ + M_;
    Eigen::Index rows = static_cast<Eigen::Index>(p_.nonneg.size());
    for (const auto& cm : cuts_) rows += static_cast<Eigen::Index>(cm.size());
    if (lo) rows += 2 * P_;
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(rows, n);
    Eigen::VectorXd h(rows);
    Eigen::Index r = 0;
    for (int m = 0; m < M_; ++m) {
      for (const auto& c : cuts_[static_cast<std::size_t>(m)]) {
        G.row(r).head(P_) = -c.g.transpose();
        G(r, P_ + m) = 1.0;
        h[r] = c.c;
        ++r;
      }
    }
    for (int j : p_.nonneg) {
      G(r, j) = 1.0;
      h[r] = 0.0;
      ++r;
    }
    if (lo) {
      for (Eigen::Index j = 0; j < P_; ++j) {
        G(r, j) = 1.0;
        h[r++] = (*lo)[j];
        G(r, j) = -1.0;
        h[r++] = -(*hi)[j];
      }
    }
    Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
    f.tail(M_).setOnes();
    Eigen::MatrixXd Hf = Eigen::MatrixXd::Zero(n, n);
    Hf.topLeftCorner(P_, P_) = H_;
    if (u > 0.0) {
      Hf.topLeftCorner(P_, P_).diagonal().array() += u;
      f.head(P_) = -u * center;
    }
    const bool quadratic = u > 0.0 || p_.H.size() > 0;
    ipm::DenseProgram prog(f, G, h, quadratic ? Hf : Eigen::MatrixXd());
    ipm::Options opt;
    opt.tolerance = 1e-12;
    opt.max_iterations = 200;
    const ipm::Result res = ipm::solve(prog, opt);
    if (res.status == ipm::Status::MaxIterations && !res.v.allFinite()) {
      throw SolverError("bundle master problem failed");
    }
    Master out;
    out.a = res.v.head(P_);
    for (int j : p_.nonneg) out.a[j] = std::max(0.0, out.a[j]);
    if (lo) out.a = out.a.cwiseMax(*lo).cwiseMin(*hi);
    out.model = model(out.a);
    // For the box problem the dual objective is a valid bound once the duals are
    // feasible; take the smaller of the two to stay on the safe side.
    out.bound = std::min(res.primal_objective, res.dual_objective);
    if (u == 0.0) out.bound = std::min(out.bound, out.model);
    // Record cut multipliers for pruning.
    r = 0;
    for (auto& cm : cuts_) {
      for (auto& c : cm) {
        c.weight = res.lambda[r++];
        ++c.age;
      }
    }
    return out;
  }

  double model(const Eigen::VectorXd& a) const {
    double total = quad(a);
    for (const auto& cm : cuts_) {
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& c : cm) best = std::max(best, c.g.dot(a) + c.c);
      total += best;
    }
    return total;
  }

  void prune() {
    for (auto& cm : cuts_) {
      if (static_cast<int>(cm.size()) <= max_cuts_) continue;
      // Keep the cuts with the largest multipliers, newest first among ties.
      std::stable_sort(cm.begin(), cm.end(), [](const Cut& x, const Cut& y) {
        if (x.weight != y.weight) return x.weight > y.weight;
        return x.age < y.age;
      });
      cm.resize(static_cast<std::size_t>(max_cuts_));
    }
  }

  const Problem& p_;
  const Options& o_;
  Eigen::Index P_;
  int M_;
  int max_cuts_ = 0;
  Eigen::MatrixXd H_;
  std::vector<std::vector<Cut>> cuts_;
};

bool near_box(const Eigen::VectorXd& a, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
              const std::vector<int>& nonneg) {
  std::vector<bool> floor0(static_cast<std::size_t>(a.size()), false);
  for (int j : nonneg) floor0[static_cast<std::size_t>(j)] = true;
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    const double margin = 0.01 * (hi[j] - lo[j]);
    if (a[j] > hi[j] - margin) return true;
    if (a[j] < lo[j] + margin && !(floor0[static_cast<std::size_t>(j)] && lo[j] == 0.0)) return true;
  }
  return false;
}

}  // namespace

Result minimize(const Problem& problem, const Eigen::VectorXd& start, const Options& options) {
  if (problem.dim <= 0 || problem.pieces <= 0 || !problem.oracle) throw ConfigError("bundle problem is empty");
  if (start.size() != problem.dim) throw ConfigError("bundle start has the wrong dimension");
  if (problem.H.size() > 0 && (problem.H.rows() != problem.dim || problem.H.cols() != problem.dim)) {
    throw ConfigError("bundle quadratic term has the wrong shape");
  }
  Solver s(problem, options);
  Eigen::VectorXd center = start;
  for (int j : problem.nonneg) center[j] = std::max(0.0, center[j]);
  double f_center = s.evaluate(center);

  double radius = 1e3 * (1.0 + center.cwiseAbs().maxCoeff());
  auto make_box = [&](Eigen::VectorXd& lo, Eigen::VectorXd& hi) {
    lo = center.array() - radius;
    hi = center.array() + radius;
    for (int j : problem.nonneg) lo[j] = std::max(0.0, lo[j]);
  };
  Eigen::VectorXd lo, hi;
  make_box(lo, hi);

  // Proximal weight from the first subgradient: a unit model decrease per unit step.
  double u = 1.0;
  {
    const Master m0 = s.solve_master(center, 0.0, &lo, &hi);
    const double step = (m0.a - center).norm();
    if (step > 0.0) u = std::max(1e-8, (f_center - m0.model) / (step * step));
  }

  Result out;
  double lower = -std::numeric_limits<double>::infinity();
  for (int it = 1; it <= options.max_iterations; ++it) {
    out.iterations = it;
    const Master lb = s.solve_master(center, 0.0, &lo, &hi);
    lower = std::max(lower, lb.bound);
    const double scale = std::max(1.0, std::abs(f_center));
    if (f_center - lower <= options.tolerance * scale) {
      if (near_box(center, lo, hi, problem.nonneg)) {
        radius *= 10.0;
        make_box(lo, hi);
        lower = -std::numeric_limits<double>::infinity();
        continue;
      }
      out.converged = true;
      break;
    }
    // Cut at the lower-bound minimizer too; it closes the bound from below.
    const double f_lb = s.evaluate(lb.a);
    if (f_lb < f_center) {
      center = lb.a;
      f_center = f_lb;
    }

    const Master step = s.solve_master(center, u, nullptr, nullptr);
    const double predicted = f_center - step.model;
    const double f_step = s.evaluate(step.a);
    if (predicted > 0.0 && f_step <= f_center - 0.1 * predicted) {
      if (f_step <= f_center - 0.5 * predicted) u = std::max(1e-12, 0.5 * u);
      center = step.a;
      f_center = f_step;
    } else {
      u = std::min(1e12, 2.0 * u);
    }
    s.prune();
  }
  out.a = center;
  out.value = f_center;
  out.lower_bound = lower;
  return out;
}

}  // namespace fmmq::bundle
