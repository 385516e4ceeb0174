#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fnav/optim.hpp"

namespace fnav {

void OptimizerConfig::validate() const {
  const auto n = x0.size();
  if (n < 1) throw InvalidConfig("x0 must be non-empty");
  if (lower.size() != n || upper.size() != n) throw InvalidConfig("bounds must match x0 size");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(lower[i] < upper[i])) throw InvalidConfig("lower bound must be below upper bound");
    if (x0[i] < lower[i] || x0[i] > upper[i]) throw InvalidConfig("x0 must lie within bounds");
  }
  if (max_evals < 2) throw InvalidConfig("max_evals too small");
}

namespace {

struct BestTracker {
  OptimizerTrace trace;
  double f_tol;
  int stall_evals;
  int last_improvement = 0;
  bool stalled = false;

  void init(const Eigen::VectorXd& x, double f) {
    trace.best_x = x;
    trace.best_f = f;
    trace.evals_used = 1;
    trace.history.emplace_back(1, f);
    last_improvement = 1;
  }
  // Returns true when the candidate improved the incumbent.
  bool record(const Eigen::VectorXd& x, double f) {
    ++trace.evals_used;
    if (f < trace.best_f) {
      const double rel = (trace.best_f - f) / std::max(std::abs(trace.best_f), 1e-300);
      trace.best_f = f;
      trace.best_x = x;
      trace.history.emplace_back(trace.evals_used, f);
      if (rel > f_tol) last_improvement = trace.evals_used;
      return true;
    }
    if (trace.evals_used - last_improvement >= stall_evals) stalled = true;
    return false;
  }
};

}  // namespace

OptimizerTrace cmaes_minimize(const Objective& f, const OptimizerConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(cfg.x0.size());
  const int lambda0 = cfg.population > 0
                          ? cfg.population
                          : 4 + static_cast<int>(std::floor(3.0 * std::log(static_cast<double>(n))));
  if (cfg.max_evals <= lambda0) throw InvalidConfig("max_evals must exceed the population size");
  const double mean_width = (cfg.upper - cfg.lower).mean();

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  BestTracker best;
  best.f_tol = cfg.f_tol;
  best.init(cfg.x0, f(cfg.x0));
  best.trace.termination = Termination::MaxEvals;

  auto penalized = [&](const Eigen::VectorXd& raw, Eigen::VectorXd* clipped) {
    *clipped = raw.cwiseMax(cfg.lower).cwiseMin(cfg.upper);
    double v = f(*clipped);
    if (!std::isfinite(v)) v = std::numeric_limits<double>::max();
    return v + 1e6 * (raw - *clipped).squaredNorm();
  };

  // Restart loop: a run that has stalled or whose step size has collapsed is
  // not going to escape its basin, so the remaining budget is better spent on
  // a fresh run with a doubled population (wider exploration).
  int lambda = lambda0;
  while (best.trace.evals_used + lambda <= cfg.max_evals) {
    const int mu = lambda / 2;
    Eigen::VectorXd weights(mu);
    for (int i = 0; i < mu; ++i) weights[i] = std::log(mu + 0.5) - std::log(i + 1.0);
    weights /= weights.sum();
    const double mu_eff = 1.0 / weights.squaredNorm();

    const double cc = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
    const double cs = (mu_eff + 2.0) / (n + mu_eff + 5.0);
    const double c1 = 2.0 / ((n + 1.3) * (n + 1.3) + mu_eff);
    const double cmu = std::min(1.0 - c1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) /
                                               ((n + 2.0) * (n + 2.0) + mu_eff));
    const double damps =
        1.0 + 2.0 * std::max(0.0, std::sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + cs;
    const double chi_n = std::sqrt(static_cast<double>(n)) *
                         (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

    double sigma = cfg.sigma0 > 0.0 ? cfg.sigma0 : 0.1 * mean_width;
    Eigen::VectorXd mean = cfg.x0;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd pc = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd ps = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd bd = Eigen::MatrixXd::Identity(n, n);  // C^(1/2)

    // Default stall window: at least 30 generations, so a few unlucky
    // populations do not end a run that is still adapting.
    best.stall_evals = cfg.stall_evals > 0 ? cfg.stall_evals : std::max(20 * n, 30 * lambda);
    best.stalled = false;
    best.last_improvement = best.trace.evals_used;

    std::vector<Eigen::VectorXd> zs(lambda), xs(lambda);
    std::vector<double> fs(lambda);
    std::vector<int> order(lambda);

    bool collapsed = false;
    int gen = 0;
    while (best.trace.evals_used + lambda <= cfg.max_evals && !best.stalled && !collapsed) {
      ++gen;
      for (int i = 0; i < lambda; ++i) {
        Eigen::VectorXd z(n);
        for (int j = 0; j < n; ++j) z[j] = gauss(rng);
        zs[i] = z;
        const Eigen::VectorXd raw = mean + sigma * (bd * z);
        Eigen::VectorXd clipped;
        fs[i] = penalized(raw, &clipped);
        xs[i] = clipped;
      }
      // Candidates are recorded in index order so the trace is deterministic.
      for (int i = 0; i < lambda; ++i) best.record(xs[i], fs[i]);

      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fs[a] < fs[b]; });

      Eigen::VectorXd zmean = Eigen::VectorXd::Zero(n);
      Eigen::VectorXd new_mean = Eigen::VectorXd::Zero(n);
      for (int i = 0; i < mu; ++i) {
        zmean += weights[i] * zs[order[i]];
        new_mean += weights[i] * (mean + sigma * (bd * zs[order[i]]));
      }
      mean = new_mean;

      ps = (1.0 - cs) * ps + std::sqrt(cs * (2.0 - cs) * mu_eff) * zmean;
      const double hsig =
          ps.norm() / std::sqrt(1.0 - std::pow(1.0 - cs, 2.0 * gen)) / chi_n <
                  1.4 + 2.0 / (n + 1.0)
              ? 1.0
              : 0.0;
      pc = (1.0 - cc) * pc + hsig * std::sqrt(cc * (2.0 - cc) * mu_eff) * (bd * zmean);

      Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(n, n);
      for (int i = 0; i < mu; ++i) {
        const Eigen::VectorXd y = bd * zs[order[i]];
        rank_mu += weights[i] * y * y.transpose();
      }
      cov = (1.0 - c1 - cmu) * cov +
            c1 * (pc * pc.transpose() + (1.0 - hsig) * cc * (2.0 - cc) * cov) + cmu * rank_mu;

      sigma *= std::exp((cs / damps) * (ps.norm() / chi_n - 1.0));

      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
      bd = eig.eigenvectors() * eig.eigenvalues().cwiseMax(1e-30).cwiseSqrt().asDiagonal();

      if (sigma * std::sqrt(eig.eigenvalues().maxCoeff()) < 1e-14 * std::max(1.0, mean_width)) {
        collapsed = true;
      }
    }
    if (!best.stalled && !collapsed) break;  // budget exhausted mid-run
    best.trace.termination = best.stalled ? Termination::StallLimit : Termination::XTol;
    lambda *= 2;
  }
  return best.trace;
}

}  // namespace fnav
