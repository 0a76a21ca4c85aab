#include "tenreg/block_solver.hpp"

#include "tenreg/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <cmath>
#include <limits>
#include <vector>

namespace tenreg {

namespace {

constexpr double kMinRho = 1e-10;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_shapes(const BlockProblem& p, const BlockState& s) {
  if (p.design.rows() != p.y.size())
    throw DimensionError("block design has " + std::to_string(p.design.rows()) +
                         " rows but " + std::to_string(p.y.size()) + " responses");
  if (p.design.cols() != s.coef.size())
    throw DimensionError("block design has " + std::to_string(p.design.cols()) +
                         " columns but " + std::to_string(s.coef.size()) + " coefficients");
}

Vector residuals(const BlockProblem& p, const BlockState& s) {
  Vector eps = s.rho * p.y - p.design * s.coef;
  eps.array() -= s.alpha0;
  return eps;
}

double sign(double v) { return (v > 0) - (v < 0); }

// Quadratic model value 0.5 x'Mx - b'x + lambda * ||x_pen||_1.
double l1_quadratic_value(const Matrix& m, const Vector& b, double lambda, Index num_free,
                          const Vector& x) {
  const Index n = x.size();
  return 0.5 * x.dot(m * x) - b.dot(x) + lambda * x.tail(n - num_free).lpNorm<1>();
}

}  // namespace

double block_objective(const BlockProblem& p, const BlockState& s) {
  check_shapes(p, s);
  if (!(s.rho > 0) || !std::isfinite(s.rho)) return kNegInf;
  const Vector eps = residuals(p, s);
  double ll = static_cast<double>(p.y.size()) * std::log(s.rho);
  for (Index i = 0; i < eps.size(); ++i) ll += log_density(p.working, eps[i]);
  const double value = ll - p.lambda * s.coef.lpNorm<1>() - p.rho_penalty * s.rho;
  return std::isnan(value) ? kNegInf : value;
}

Vector block_smooth_gradient(const BlockProblem& p, const BlockState& s) {
  check_shapes(p, s);
  const Vector eps = residuals(p, s);
  Vector d1(eps.size());
  for (Index i = 0; i < eps.size(); ++i) d1[i] = dlog_density(p.working, eps[i]);
  Vector g(s.coef.size() + 2);
  g[0] = static_cast<double>(p.y.size()) / s.rho + d1.dot(p.y) - p.rho_penalty;
  g[1] = -d1.sum();
  g.tail(s.coef.size()) = -(p.design.transpose() * d1);
  return g;
}

namespace {

double kkt_from_gradient(const Vector& g, const Vector& coef, double lambda) {
  double r = std::max(std::abs(g[0]), std::abs(g[1]));
  for (Index j = 0; j < coef.size(); ++j) {
    const double gj = g[j + 2];
    const double v = coef[j] != 0.0 ? std::abs(gj - lambda * sign(coef[j]))
                                    : std::max(0.0, std::abs(gj) - lambda);
    r = std::max(r, v);
  }
  return r;
}

// u - theta recomputed without cancellation: on the support A of u,
// step_A = M_AA^{-1} (g_A - lambda sign(u_A) + M_AZ theta_Z), step_Z = -theta_Z.
// Forming u from M theta + g and subtracting theta loses the step to rounding
// once it is small relative to theta.
Vector newton_step(const Matrix& m, const Vector& g, const Vector& theta, const Vector& u,
                   double lambda) {
  const Index n = theta.size();
  std::vector<Index> on, off;
  for (Index j = 0; j < n; ++j) (j < 2 || u[j] != 0.0 ? on : off).push_back(j);
  const Index k = static_cast<Index>(on.size());
  Matrix maa(k, k);
  Vector rhs(k);
  for (Index a = 0; a < k; ++a) {
    const Index ja = on[static_cast<std::size_t>(a)];
    rhs[a] = g[ja] - (ja < 2 ? 0.0 : lambda * sign(u[ja]));
    for (Index z : off) rhs[a] += m(ja, z) * theta[z];
    for (Index c = 0; c < k; ++c) maa(a, c) = m(ja, on[static_cast<std::size_t>(c)]);
  }
  Eigen::LDLT<Matrix> ldlt(maa);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0).all()) {
    maa.diagonal().array() += 1e-12 * (1.0 + maa.diagonal().cwiseAbs().maxCoeff());
    ldlt.compute(maa);
  }
  const Vector sa = ldlt.solve(rhs);
  Vector step(n);
  for (Index a = 0; a < k; ++a) step[on[static_cast<std::size_t>(a)]] = sa[a];
  for (Index z : off) step[z] = -theta[z];
  return step;
}

}  // namespace

double block_kkt_residual(const BlockProblem& p, const BlockState& s) {
  return kkt_from_gradient(block_smooth_gradient(p, s), s.coef, p.lambda);
}

BlockState initial_block_state(const Vector& y, Index num_coef) {
  if (y.size() < 2) throw DataError("need at least two responses");
  const double mean = y.mean();
  const double var = (y.array() - mean).square().sum() / static_cast<double>(y.size());
  if (!(var > 0)) throw DataError("responses are constant");
  BlockState s;
  s.coef = Vector::Zero(num_coef);
  s.rho = 1.0 / std::sqrt(var);
  s.alpha0 = mean * s.rho;
  return s;
}

Vector solve_l1_quadratic(const Matrix& m, const Vector& b, double lambda, Index num_free,
                          const Vector& x0) {
  const Index n = b.size();
  Vector x = x0;
  if (lambda <= 0) {
    // Plain Newton system; a tiny ridge keeps rank-deficient designs finite.
    Matrix mm = m;
    mm.diagonal().array() += 1e-12 * (1.0 + m.diagonal().cwiseAbs().maxCoeff());
    return mm.ldlt().solve(b);
  }
  const double scale = 1.0 + b.cwiseAbs().maxCoeff() + lambda;
  const double tol = 1e-11 * scale;
  const double ridge = 1e-12 * (1.0 + m.diagonal().cwiseAbs().maxCoeff());

  std::vector<char> active(n, 0);
  Vector s = Vector::Zero(n);
  for (Index j = 0; j < n; ++j) {
    active[j] = j < num_free || x[j] != 0.0;
    s[j] = j < num_free ? 0.0 : sign(x[j]);
  }

  double current = l1_quadratic_value(m, b, lambda, num_free, x);
  bool active_set_settled = false;
  const int max_outer = static_cast<int>(20 * n + 100);
  for (int outer = 0; outer < max_outer; ++outer) {
    const Vector r = m * x - b;
    double worst_active = 0.0;
    for (Index j = 0; j < n; ++j)
      if (active[j]) worst_active = std::max(worst_active, std::abs(r[j] + lambda * s[j]));
    if (worst_active <= tol || active_set_settled) {
      // Active set is optimal: add the most violating zero coefficient.
      Index best = -1;
      double viol = tol;
      for (Index j = num_free; j < n; ++j) {
        if (active[j]) continue;
        const double v = std::abs(r[j]) - lambda;
        if (v > viol) {
          viol = v;
          best = j;
        }
      }
      if (best < 0) break;
      active[best] = 1;
      s[best] = -sign(r[best]);
    }

    std::vector<Index> idx;
    for (Index j = 0; j < n; ++j)
      if (active[j]) idx.push_back(j);
    const Index k = static_cast<Index>(idx.size());
    Matrix ma(k, k);
    Vector rhs(k);
    for (Index a = 0; a < k; ++a) {
      rhs[a] = b[idx[a]] - lambda * s[idx[a]];
      for (Index c = 0; c < k; ++c) ma(a, c) = m(idx[a], idx[c]);
    }
    Eigen::LDLT<Matrix> ldlt(ma);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0).all()) {
      ma.diagonal().array() += ridge;
      ldlt.compute(ma);
    }
    const Vector xa = ldlt.solve(rhs);
    Vector target = Vector::Zero(n);
    for (Index a = 0; a < k; ++a) target[idx[a]] = xa[a];

    // Discrete line search over the sign changes on the segment x -> target.
    Vector best_x = target;
    double best_val = l1_quadratic_value(m, b, lambda, num_free, target);
    for (Index j = num_free; j < n; ++j) {
      if (!active[j] || x[j] == 0.0 || sign(target[j]) == sign(x[j])) continue;
      const double t = x[j] / (x[j] - target[j]);
      Vector cand = x + t * (target - x);
      cand[j] = 0.0;
      const double v = l1_quadratic_value(m, b, lambda, num_free, cand);
      if (v < best_val) {
        best_val = v;
        best_x = cand;
      }
    }
    if (!(best_val < current)) {
      // Nothing left to gain on this active set: what remains of its
      // violation is rounding. A second stall means no coordinate helps.
      if (active_set_settled) break;
      active_set_settled = true;
      for (Index j = num_free; j < n; ++j) {
        active[j] = x[j] != 0.0;
        s[j] = sign(x[j]);
      }
      continue;
    }
    active_set_settled = false;
    x = best_x;
    current = best_val;
    for (Index j = num_free; j < n; ++j) {
      if (std::abs(x[j]) <= 1e-15 * scale) x[j] = 0.0;
      active[j] = x[j] != 0.0;
      s[j] = sign(x[j]);
    }
  }
  return x;
}

BlockSolution solve_block(const BlockProblem& p, const BlockState& warm,
                          const BlockSolveOptions& options) {
  check_shapes(p, warm);
  const Index n = p.y.size();
  const Index q = warm.coef.size();
  const double dn = static_cast<double>(n);

  BlockSolution out;
  out.state = warm;
  if (!(warm.rho > 0)) throw NumericalError("block solver started with non-positive scale");
  double f = block_objective(p, warm);
  if (!std::isfinite(f)) throw NumericalError("block objective is not finite at the start");

  if (p.lambda <= 0 && p.rho_penalty <= 0) {
    // Without a penalty an interpolating fit drives rho to infinity.
    Matrix z(n, q + 1);
    z << Vector::Ones(n), p.design;
    const Vector resid = p.y - z * z.colPivHouseholderQr().solve(p.y);
    const double spread = (p.y.array() - p.y.mean()).matrix().norm();
    if (resid.norm() <= 1e-9 * spread)
      throw NumericalError("likelihood is unbounded: responses are fitted exactly");
  }

  Matrix zt(n, q + 2);
  zt.col(0) = p.y;
  zt.col(1).setConstant(-1.0);
  zt.rightCols(q) = -p.design;

  Vector theta(q + 2);
  auto pack = [&](const BlockState& s) {
    theta[0] = s.rho;
    theta[1] = s.alpha0;
    theta.tail(q) = s.coef;
  };
  auto unpack = [&](const Vector& t) {
    BlockState s;
    s.rho = t[0];
    s.alpha0 = t[1];
    s.coef = t.tail(q);
    return s;
  };
  pack(warm);

  for (int it = 0; it < options.max_iterations; ++it) {
    const BlockState cur = unpack(theta);
    const Vector eps = residuals(p, cur);
    Vector d1(n), w(n);
    for (Index i = 0; i < n; ++i) {
      const auto d = log_density_derivatives(p.working, eps[i]);
      d1[i] = d.d1;
      w[i] = -d.d2;
    }
    Vector g = zt.transpose() * d1;
    g[0] += dn / cur.rho - p.rho_penalty;
    out.kkt_residual = kkt_from_gradient(g, cur.coef, p.lambda);
    out.iterations = it;
    if (out.kkt_residual <= options.kkt_tol) break;

    const Matrix zw = zt.array().colwise() * w.array().sqrt();
    Matrix m = zw.transpose() * zw;
    m(0, 0) += dn / (cur.rho * cur.rho);
    const Vector b = m * theta + g;
    Vector u = solve_l1_quadratic(m, b, p.lambda, 2, theta);
    const Vector step = newton_step(m, g, theta, u, p.lambda);
    u = theta + step;
    const double decrease =
        g.dot(step) - p.lambda * (u.tail(q).lpNorm<1>() - cur.coef.lpNorm<1>());
    if (!(decrease > 0)) break;

    double t = 1.0;
    bool accepted = false;
    bool stalled = false;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      const Vector cand = theta + t * step;
      const BlockState cs = unpack(cand);
      const double fc = block_objective(p, cs);
      if (std::isfinite(fc) && fc >= f + 1e-4 * t * decrease) {
        // A step that no longer moves the objective means the KKT residual
        // is at its rounding floor.
        stalled = fc - f <= 4 * std::numeric_limits<double>::epsilon() * std::abs(f);
        theta = cand;
        f = fc;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    if (theta[0] < kMinRho) throw NumericalError("scale parameter collapsed (rho < 1e-10)");
    if (!std::isfinite(theta[0]) || theta[0] > 1e12)
      throw NumericalError("likelihood is unbounded: responses are fitted exactly");
    out.iterations = it + 1;
    if (stalled) break;
  }
  out.state = unpack(theta);
  out.objective = f;
  out.kkt_residual = block_kkt_residual(p, out.state);
  return out;
}

}  // namespace tenreg
