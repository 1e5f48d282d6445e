#pragma once

// Damped Gauss-Newton (Levenberg-Marquardt) for small dense problems.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <vector>

namespace range_rte::solvers {

struct LmOptions {
  int max_iter = 100;
  double gtol = 1e-12;   // on ||J^T r||_inf
  double xtol = 1e-14;   // relative step size
  double ftol = 1e-15;   // relative cost decrease
  double tau = 1e-6;     // initial damping relative to max diag(J^T J)
};

enum class LmStatus { kConverged, kMaxIter, kNonFinite };

inline const char* to_string(LmStatus s) {
  switch (s) {
    case LmStatus::kConverged: return "converged";
    case LmStatus::kMaxIter: return "max_iter";
    case LmStatus::kNonFinite: return "non_finite";
  }
  return "unknown";
}

struct LmDiagnostics {
  int iterations = 0;  // accepted steps
  int evaluations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;  // 0.5 * ||r||^2
  LmStatus status = LmStatus::kMaxIter;
  std::vector<double> cost_history;  // cost after each accepted step
};

struct LmResult {
  Eigen::VectorXd x;
  LmDiagnostics diag;
};

/// Minimizes 0.5 ||r(x)||^2. `residuals(x)` returns r, `jacobian(x)` returns
/// dr/dx. Accepted steps never increase the cost.
template <typename ResidualFn, typename JacobianFn>
LmResult lm_minimize(ResidualFn&& residuals, JacobianFn&& jacobian,
                     Eigen::VectorXd x0, const LmOptions& opts = {}) {
  LmResult out;
  out.x = std::move(x0);
  Eigen::VectorXd r = residuals(out.x);
  ++out.diag.evaluations;
  if (!r.allFinite()) {
    out.diag.status = LmStatus::kNonFinite;
    out.diag.initial_cost = out.diag.final_cost = INFINITY;
    return out;
  }
  double cost = 0.5 * r.squaredNorm();
  out.diag.initial_cost = cost;

  Eigen::MatrixXd jac = jacobian(out.x);
  Eigen::MatrixXd jtj = jac.transpose() * jac;
  Eigen::VectorXd grad = jac.transpose() * r;
  double lambda = opts.tau * std::max(1e-300, jtj.diagonal().maxCoeff());
  double nu = 2.0;

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    if (cost == 0.0 || grad.lpNorm<Eigen::Infinity>() <= opts.gtol) {
      out.diag.status = LmStatus::kConverged;
      out.diag.final_cost = cost;
      return out;
    }
    // Marquardt scaling with a floor so flat directions still get damped.
    Eigen::VectorXd scale = jtj.diagonal().cwiseMax(1e-12 * jtj.diagonal().maxCoeff());
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd lhs = jtj;
      lhs.diagonal() += lambda * scale;
      const Eigen::VectorXd step = lhs.ldlt().solve(-grad);
      if (!step.allFinite()) {
        out.diag.status = LmStatus::kNonFinite;
        out.diag.final_cost = cost;
        return out;
      }
      if (step.norm() <= opts.xtol * (out.x.norm() + opts.xtol)) {
        out.diag.status = LmStatus::kConverged;
        out.diag.final_cost = cost;
        return out;
      }
      const Eigen::VectorXd x_new = out.x + step;
      const Eigen::VectorXd r_new = residuals(x_new);
      ++out.diag.evaluations;
      const double cost_new =
          r_new.allFinite() ? 0.5 * r_new.squaredNorm() : INFINITY;
      const double predicted =
          -step.dot(grad) - 0.5 * step.dot(jtj * step);
      const double rho = predicted > 0.0 ? (cost - cost_new) / predicted : -1.0;
      if (cost_new < cost && rho > 0.0) {
        const double rel_decrease = (cost - cost_new) / std::max(cost, 1e-300);
        out.x = x_new;
        r = r_new;
        cost = cost_new;
        jac = jacobian(out.x);
        jtj = jac.transpose() * jac;
        grad = jac.transpose() * r;
        lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        nu = 2.0;
        accepted = true;
        ++out.diag.iterations;
        out.diag.cost_history.push_back(cost);
        if (rel_decrease <= opts.ftol) {
          out.diag.status = LmStatus::kConverged;
          out.diag.final_cost = cost;
          return out;
        }
      } else {
        lambda *= nu;
        nu *= 2.0;
        if (!std::isfinite(lambda) || lambda > 1e300) {
          // No descent possible at machine precision.
          out.diag.status = LmStatus::kConverged;
          out.diag.final_cost = cost;
          return out;
        }
      }
    }
  }
  out.diag.status = LmStatus::kMaxIter;
  out.diag.final_cost = cost;
  return out;
}

}  // namespace range_rte::solvers
