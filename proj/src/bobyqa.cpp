#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fnav/optim.hpp"

namespace fnav {

namespace {

// Quadratic model Q(xb + y) = c + g.y + 0.5 y'Hy with the
// minimum-Frobenius-norm Hessian interpolating all stored points.
struct MfnModel {
  Eigen::VectorXd g;
  Eigen::MatrixXd h;
  double c = 0.0;

  double value(const Eigen::VectorXd& y) const {
    return c + g.dot(y) + 0.5 * y.dot(h * y);
  }
};

// Interpolates all stored points with the Hessian closest (Frobenius) to the
// prior h_prev; carrying curvature across stencils is what lets the model
// learn off-diagonal coupling the coordinate stencil cannot see.
bool build_model(const std::vector<Eigen::VectorXd>& pts, const std::vector<double>& fvals,
                 const Eigen::VectorXd& xb, const Eigen::MatrixXd& h_prev, MfnModel* model) {
  const int m = static_cast<int>(pts.size());
  const int n = static_cast<int>(xb.size());
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(m + n + 1, m + n + 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + n + 1);
  std::vector<Eigen::VectorXd> ys(m);
  double span = 0.0;
  for (int i = 0; i < m; ++i) {
    ys[i] = pts[i] - xb;
    span = std::max(span, ys[i].norm());
  }
  if (span <= 0.0) return false;
  // Work in units of the point-set span: the system entries are fourth powers
  // of distances, so unscaled coordinates destroy the solve's conditioning.
  for (auto& y : ys) y /= span;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const double d = ys[i].dot(ys[j]);
      kkt(i, j) = 0.5 * d * d;
    }
    kkt(i, m) = 1.0;
    kkt(m, i) = 1.0;
    kkt.block(i, m + 1, 1, n) = ys[i].transpose();
    kkt.block(m + 1, i, n, 1) = ys[i];
    rhs[i] = fvals[i] - 0.5 * span * span * ys[i].dot(h_prev * ys[i]);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  if (!lu.isInvertible()) return false;
  const Eigen::VectorXd sol = lu.solve(rhs);
  if (!sol.allFinite()) return false;

  model->c = sol[m];
  model->g = sol.segment(m + 1, n) / span;
  model->h = h_prev;
  for (int i = 0; i < m; ++i) {
    model->h += (sol[i] / (span * span)) * ys[i] * ys[i].transpose();
  }
  return true;
}

// Minimizes the model over the intersection of the bound box and the
// infinity-norm trust region, by cyclic exact coordinate descent from y = 0.
// Each coordinate update is an exact 1-D minimization, so the model value is
// non-increasing throughout.
Eigen::VectorXd solve_trust_region(const MfnModel& model, const Eigen::VectorXd& xb,
                                   const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                   double delta) {
  const int n = static_cast<int>(xb.size());
  // Unconstrained Newton step first: on an ill-conditioned coupled model,
  // coordinate descent undershoots badly, so when the Hessian is positive
  // definite and the exact minimizer lies inside the region, take it.
  {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(model.h);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
      const Eigen::VectorXd y = -ldlt.solve(model.g);
      bool inside = y.allFinite() && y.lpNorm<Eigen::Infinity>() <= delta;
      for (int i = 0; inside && i < n; ++i) {
        inside = xb[i] + y[i] >= lower[i] && xb[i] + y[i] <= upper[i];
      }
      if (inside) return y;
    }
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd grad = model.g;  // gradient of Q at xb + y
  for (int sweep = 0; sweep < 6 * n; ++sweep) {
    double moved = 0.0;
    for (int i = 0; i < n; ++i) {
      const double lo = std::max(lower[i] - xb[i], -delta);
      const double hi = std::min(upper[i] - xb[i], delta);
      if (hi <= lo) continue;
      const double gi = grad[i];
      const double hii = model.h(i, i);
      double target;
      if (hii > 1e-300) {
        target = std::clamp(y[i] - gi / hii, lo, hi);
      } else {
        target = gi > 0.0 ? lo : hi;  // move downhill to the box edge
        // Non-convex direction: take the better endpoint.
        const double d_lo = lo - y[i], d_hi = hi - y[i];
        const double q_lo = gi * d_lo + 0.5 * hii * d_lo * d_lo;
        const double q_hi = gi * d_hi + 0.5 * hii * d_hi * d_hi;
        target = q_lo < q_hi ? lo : hi;
      }
      const double step = target - y[i];
      if (step != 0.0) {
        y[i] = target;
        grad += step * model.h.col(i);
        moved += std::abs(step);
      }
    }
    if (moved < 1e-16 * delta) break;
  }
  return y;
}

}  // namespace

OptimizerTrace bobyqa_minimize(const Objective& f, const OptimizerConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(cfg.x0.size());
  if (n < 2) throw InvalidConfig("bobyqa requires n >= 2");
  const double mean_width = (cfg.upper - cfg.lower).mean();
  double rho = cfg.rho_begin > 0.0 ? cfg.rho_begin : 0.05 * mean_width;
  const double rho_end = std::min(cfg.rho_end, rho);
  const int m = 2 * n + 1;
  if (cfg.max_evals <= m) throw InvalidConfig("max_evals must exceed 2n+1");

  OptimizerTrace trace;
  trace.termination = Termination::MaxEvals;
  int evals = 0;
  bool improved_since_shrink = false;
  int failures = 0;
  bool refreshed_at_rho = false;

  auto eval = [&](const Eigen::VectorXd& x) {
    double v = f(x);
    if (!std::isfinite(v)) v = std::numeric_limits<double>::max();
    ++evals;
    if (trace.history.empty() || v < trace.best_f) {
      trace.best_f = v;
      trace.best_x = x;
      trace.history.emplace_back(evals, v);
      improved_since_shrink = true;
    }
    return v;
  };

  std::vector<Eigen::VectorXd> pts;
  std::vector<double> fvals;

  // Fresh 2n+1 stencil around `center` with radius r, clipped into bounds.
  auto rebuild = [&](const Eigen::VectorXd& center, double r) {
    Eigen::VectorXd base = center.cwiseMax(cfg.lower + Eigen::VectorXd::Constant(n, r))
                               .cwiseMin(cfg.upper - Eigen::VectorXd::Constant(n, r));
    for (int i = 0; i < n; ++i) {
      if (cfg.upper[i] - cfg.lower[i] < 2.0 * r) base[i] = 0.5 * (cfg.lower[i] + cfg.upper[i]);
    }
    pts.clear();
    fvals.clear();
    pts.push_back(base);
    fvals.push_back(eval(base));
    for (int i = 0; i < n && evals < cfg.max_evals; ++i) {
      for (double s : {r, -r}) {
        Eigen::VectorXd x = base;
        x[i] = std::clamp(base[i] + s, cfg.lower[i], cfg.upper[i]);
        pts.push_back(x);
        fvals.push_back(eval(x));
        if (evals >= cfg.max_evals) break;
      }
    }
  };

  // x0 is always evaluated first so the returned best never regresses from it.
  trace.best_x = cfg.x0;
  trace.best_f = eval(cfg.x0);
  rebuild(cfg.x0, rho);
  double delta = rho;

  MfnModel model;
  Eigen::MatrixXd h_prev = Eigen::MatrixXd::Zero(n, n);
  while (evals < cfg.max_evals) {
    int best_i = 0;
    for (int i = 1; i < static_cast<int>(pts.size()); ++i) {
      if (fvals[i] < fvals[best_i]) best_i = i;
    }
    const Eigen::VectorXd xb = pts[best_i];
    const double fb = fvals[best_i];

    if (!build_model(pts, fvals, xb, h_prev, &model)) {
      h_prev.setZero();
      rebuild(xb, std::max(rho, delta * 0.5));
      continue;
    }
    h_prev = model.h;

    const Eigen::VectorXd step = solve_trust_region(model, xb, cfg.lower, cfg.upper, delta);
    const double pred = -(model.g.dot(step) + 0.5 * step.dot(model.h * step));
    const double step_norm = step.lpNorm<Eigen::Infinity>();

    bool want_shrink = false;
    if (pred <= 1e-14 * std::max(1.0, std::abs(fb)) || step_norm < 0.1 * rho) {
      want_shrink = true;
    } else {
      const Eigen::VectorXd xnew = xb + step;
      const double fnew = eval(xnew);
      const double ratio = (fb - fnew) / pred;

      // Replace the stored point farthest from the incumbent best.
      const Eigen::VectorXd& anchor = fnew < fb ? xnew : xb;
      int far_i = -1;
      double far_d = -1.0;
      for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
        const double d = (pts[i] - anchor).norm();
        if (d > far_d) {
          far_d = d;
          far_i = i;
        }
      }
      pts[far_i] = xnew;
      fvals[far_i] = fnew;

      if (ratio >= 0.7) {
        delta = std::min(2.0 * delta, 0.5 * mean_width);
        failures = 0;
      } else if (ratio >= 0.1 && step_norm >= 0.9 * delta) {
        // The step helped and was cut off by the region boundary, so the
        // region, not the model, is the limiting factor.
        delta = std::min(1.5 * delta, 0.5 * mean_width);
        failures = 0;
      } else if (ratio < 0.1) {
        delta = std::max(0.5 * delta, rho);
        // A failure streak means the model is wrong. That is usually a
        // geometry problem (degenerate point set), so first rebuild a fresh
        // stencil at the current resolution; shrink rho only if a rebuild at
        // this resolution has already been tried and did not help.
        if (delta <= rho && ratio <= 0.0 && ++failures >= 3) {
          h_prev.setZero();
          failures = 0;
          if (refreshed_at_rho) {
            want_shrink = true;
          } else {
            refreshed_at_rho = true;
            rebuild(trace.best_x, rho);
            delta = rho;
            continue;
          }
        }
      } else {
        failures = 0;
      }
      if (fnew < fb) {
        failures = 0;
        refreshed_at_rho = false;
      }
    }

    if (want_shrink) {
      if (rho <= rho_end * (1.0 + 1e-12) && !improved_since_shrink) {
        trace.termination = Termination::FTol;
        break;
      }
      if (rho <= rho_end * (1.0 + 1e-12)) {
        // Already at the final radius: one more pass around the best point.
        improved_since_shrink = false;
        rebuild(trace.best_x, rho);
        delta = rho;
        continue;
      }
      rho = std::max(rho * 0.1, rho_end);
      delta = std::max(rho, 0.5 * delta);
      improved_since_shrink = false;
      failures = 0;
      refreshed_at_rho = false;
      rebuild(trace.best_x, rho);
    }
  }
  trace.evals_used = evals;
  return trace;
}

}  // namespace fnav
