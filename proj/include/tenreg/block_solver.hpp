#pragma once

// Penalized location-scale regression in the scale-free parameterization
//
//   maximize  N ln(rho) + sum_i ln f(rho*y_i - alpha0 - <a, x_i>)
//             - lambda * ||a||_1 - rho_penalty * rho
//
// over (a, rho > 0, alpha0). With a log-concave f this is concave. Each
// block step of the CP and Tucker estimators, and the scalar/vector baseline
// regressions, reduce to this problem with a different design matrix.
//
// The linear rho term carries the l1 penalties of the blocks held fixed:
// once divided by sigma they scale with rho, and keeping them makes the block
// objective equal to the full penalized log-likelihood restricted to the block.

#include "tenreg/distributions.hpp"
#include "tenreg/tensor.hpp"

namespace tenreg {

struct BlockProblem {
  /// N x p, row i is vec(X_i).
  const Matrix& design;
  /// Responses on the working scale.
  const Vector& y;
  DistributionKind working = DistributionKind::Normal;
  double lambda = 0.0;
  double rho_penalty = 0.0;
};

struct BlockState {
  Vector coef;
  double rho = 1.0;
  double alpha0 = 0.0;
};

struct BlockSolveOptions {
  /// Absolute tolerance on the KKT residual of the smooth part.
  double kkt_tol = 1e-9;
  int max_iterations = 200;
};

struct BlockSolution {
  BlockState state;
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
};

/// Objective value; -inf when rho <= 0 or the density underflows.
double block_objective(const BlockProblem& problem, const BlockState& state);

/// Gradient of the smooth part, ordered (rho, alpha0, coef...).
Vector block_smooth_gradient(const BlockProblem& problem, const BlockState& state);

/// Largest violation of the optimality conditions: |g| on rho and alpha0,
/// |g_j - lambda sign(a_j)| on non-zero coefficients, max(0, |g_j| - lambda)
/// on zero ones.
double block_kkt_residual(const BlockProblem& problem, const BlockState& state);

/// Proximal Newton ascent from `warm`: each step solves the l1-penalized
/// quadratic model exactly and is accepted under an Armijo backtracking
/// rule, so the objective never decreases. Throws NumericalError when the
/// scale parameter collapses (rho < 1e-10) or the likelihood is unbounded.
BlockSolution solve_block(const BlockProblem& problem, const BlockState& warm,
                          const BlockSolveOptions& options = {});

/// Intercept-and-scale-only starting point: rho = 1/sd(y), alpha0 = mean(y)*rho,
/// coefficients zero. Throws DataError on constant responses.
BlockState initial_block_state(const Vector& y, Index num_coef);

/// min_x 0.5 x'Mx - b'x + lambda * sum_{j >= num_free} |x_j| by feature-sign
/// search started at x0. M must be symmetric positive semi-definite; the first
/// `num_free` coordinates are unpenalized.
Vector solve_l1_quadratic(const Matrix& m, const Vector& b, double lambda, Index num_free,
                          const Vector& x0);

}  // namespace tenreg
