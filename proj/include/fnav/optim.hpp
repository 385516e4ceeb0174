#pragma once

// Derivative-free optimizers: (mu/mu_w, lambda)-CMA-ES for the coarse
// registration level and a bound-constrained trust-region method with
// minimum-Frobenius-norm quadratic interpolation models for the fine level.

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fnav/errors.hpp"

namespace fnav {

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct OptimizerConfig {
  int max_evals = 1000;
  Eigen::VectorXd x0;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double sigma0 = 0.0;      // CMA-ES initial step; <= 0 selects 0.1 * mean bound width
  double rho_begin = 0.0;   // trust radii; <= 0 selects 0.05 * mean bound width
  double rho_end = 1e-8;
  int population = 0;       // <= 0 selects 4 + floor(3 ln n)
  std::uint64_t seed = 0;
  double f_tol = 1e-8;      // relative stall tolerance
  int stall_evals = 0;      // <= 0 selects 20 n

  void validate() const;
};

enum class Termination { MaxEvals, FTol, XTol, StallLimit };

struct OptimizerTrace {
  Eigen::VectorXd best_x;
  double best_f = 0.0;
  int evals_used = 0;
  std::vector<std::pair<int, double>> history;  // (eval index, f) at improvements
  Termination termination = Termination::MaxEvals;
};

/// Standard CMA-ES with rank-based weighted recombination, cumulative
/// step-size adaptation and rank-1 + rank-mu covariance updates. Bounds are
/// handled by clipping sampled candidates and adding the penalty
/// 1e6 * ||x_raw - x_clip||^2 to the objective. Deterministic given the seed.
OptimizerTrace cmaes_minimize(const Objective& f, const OptimizerConfig& cfg);

/// Bound-constrained trust-region minimization over a quadratic model
/// interpolating 2n+1 points (minimum-Frobenius-norm Hessian), with trust
/// radius shrinking from rho_begin to rho_end and stencil refresh on each
/// shrink. Best-so-far is monotone; n >= 2.
OptimizerTrace bobyqa_minimize(const Objective& f, const OptimizerConfig& cfg);

}  // namespace fnav
