#pragma once

// Dense primal-dual interior-point solver for small semidefinite programs
//
//   min <C, X>  s.t.  <A_i, X> = b_i,  X >= 0
//   max b'y     s.t.  C - sum_i y_i A_i = S >= 0
//
// Infeasible-start path following with the Nesterov-Todd search direction
// and a Mehrotra predictor-corrector. Everything is dense; the intended envelope
// is n <= 16, m <= 8.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "range_rte/error.hpp"

namespace range_rte::solvers {

struct SdpStandardForm {
  Eigen::MatrixXd C;
  std::vector<Eigen::MatrixXd> A;
  Eigen::VectorXd b;

  Eigen::Index n() const { return C.rows(); }
  Eigen::Index m() const { return b.size(); }
};

enum class SdpStatus { kOptimal, kMaxIter, kInfeasible, kNumerical };

inline const char* to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::kOptimal: return "optimal";
    case SdpStatus::kMaxIter: return "max_iter";
    case SdpStatus::kInfeasible: return "infeasible";
    case SdpStatus::kNumerical: return "numerical";
  }
  return "unknown";
}

struct SolveDiagnostics {
  int iterations = 0;
  double primal_obj = 0.0;
  double dual_obj = 0.0;
  double gap = 0.0;  // |primal_obj - dual_obj|
  double rel_gap = 0.0;
  double primal_residual = 0.0;  // ||b - A(X)|| / (1 + ||b||)
  double dual_residual = 0.0;    // ||C - A'y - S||_F / (1 + ||C||_F)
  SdpStatus status = SdpStatus::kMaxIter;
};

struct SdpSolution {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::MatrixXd S;
  SolveDiagnostics diag;
};

namespace detail {

inline double inner(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a.array() * b.array()).sum();
}

inline Eigen::MatrixXd sym(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

}  // namespace detail

/// Solves the SDP to relative tolerance `tol` on primal feasibility, dual
/// feasibility and duality gap.
inline SdpSolution sdp_solve(const SdpStandardForm& problem, double tol = 1e-8,
                             int max_iter = 200, int centering_steps = 8) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  using detail::inner;
  using detail::sym;

  const Eigen::Index n = problem.n();
  const Eigen::Index m = problem.m();
  if (problem.C.cols() != n || static_cast<Eigen::Index>(problem.A.size()) != m) {
    throw Error(ErrorCode::kConfig, "sdp_solve: inconsistent problem shapes");
  }

  // Row-normalize the constraints and scale the objective to unit norm.
  std::vector<MatrixXd> a(static_cast<std::size_t>(m));
  VectorXd b(m);
  VectorXd a_scale(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const MatrixXd& ai = problem.A[static_cast<std::size_t>(i)];
    if (ai.rows() != n || ai.cols() != n) {
      throw Error(ErrorCode::kConfig, "sdp_solve: constraint shape mismatch");
    }
    a_scale(i) = std::max(ai.norm(), 1e-300);
    a[static_cast<std::size_t>(i)] = sym(ai) / a_scale(i);
    b(i) = problem.b(i) / a_scale(i);
  }
  const double c_scale = std::max(problem.C.norm(), 1e-300);
  const MatrixXd c = sym(problem.C) / c_scale;

  auto op_a = [&](const MatrixXd& x) {
    VectorXd out(m);
    for (Eigen::Index i = 0; i < m; ++i) out(i) = inner(a[static_cast<std::size_t>(i)], x);
    return out;
  };
  auto op_at = [&](const VectorXd& y) {
    MatrixXd out = MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < m; ++i) out += y(i) * a[static_cast<std::size_t>(i)];
    return out;
  };

  const double dn = static_cast<double>(n);
  double xi = std::max(10.0, std::sqrt(dn));
  for (Eigen::Index i = 0; i < m; ++i) xi = std::max(xi, dn * (1.0 + std::abs(b(i))) / 2.0);
  const double eta = std::max({10.0, std::sqrt(dn), c.norm()});

  MatrixXd x = xi * MatrixXd::Identity(n, n);
  MatrixXd s = eta * MatrixXd::Identity(n, n);
  VectorXd y = VectorXd::Zero(m);

  const double b_norm = b.norm();
  const double c_norm = c.norm();

  SdpSolution out;
  bool reached = false;  // tolerance met; later failures only end centering
  auto finish = [&](SdpStatus status, int iters) {
    if (reached) status = SdpStatus::kOptimal;
    out.X = x;
    out.y = y.cwiseProduct(VectorXd::Constant(m, c_scale).cwiseQuotient(a_scale));
    out.S = c_scale * s;
    const double pobj = inner(c, x);
    const double dobj = b.dot(y);
    out.diag.iterations = iters;
    out.diag.primal_obj = c_scale * pobj;
    out.diag.dual_obj = c_scale * dobj;
    out.diag.gap = std::abs(out.diag.primal_obj - out.diag.dual_obj);
    out.diag.rel_gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    out.diag.primal_residual = (b - op_a(x)).norm() / (1.0 + b_norm);
    out.diag.dual_residual = (c - op_at(y) - s).norm() / (1.0 + c_norm);
    out.diag.status = status;
    return out;
  };

  int centering_left = centering_steps;
  for (int iter = 0; iter < max_iter; ++iter) {
    const VectorXd rp = b - op_a(x);
    const MatrixXd rd = c - op_at(y) - s;
    const double pobj = inner(c, x);
    const double dobj = b.dot(y);
    const double rel_gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    const double pinf = rp.norm() / (1.0 + b_norm);
    const double dinf = rd.norm() / (1.0 + c_norm);
    const bool converged = rel_gap <= tol && pinf <= tol && dinf <= tol;
    reached = reached || converged;
    if (converged && centering_left == 0) return finish(SdpStatus::kOptimal, iter);

    // Infeasibility certificates, checked once iterates blow up.
    if (dobj > 0.0 && y.norm() > 1e8) {
      const VectorXd yn = y / dobj;
      const double lmax = Eigen::SelfAdjointEigenSolver<MatrixXd>(
                              op_at(yn), Eigen::EigenvaluesOnly)
                              .eigenvalues()(n - 1);
      if (lmax <= tol) return finish(SdpStatus::kInfeasible, iter);
    }
    if (pobj < 0.0 && x.norm() > 1e8) {
      const MatrixXd xn = x / (-pobj);
      if (op_a(xn).norm() <= tol) return finish(SdpStatus::kInfeasible, iter);
    }
    if (x.norm() > 1e14 || y.norm() > 1e14) {
      return finish(SdpStatus::kInfeasible, iter);
    }

    // Nesterov-Todd scaling from the Cholesky factors of X and S:
    // L_s' L_x = U D V', G = L_x V D^-1/2, so that G^-1 X G^-T = G' S G = D.
    Eigen::LLT<MatrixXd> x_llt(x);
    Eigen::LLT<MatrixXd> s_llt(s);
    if (x_llt.info() != Eigen::Success || s_llt.info() != Eigen::Success) {
      return finish(SdpStatus::kNumerical, iter);
    }
    const MatrixXd lx = x_llt.matrixL();
    const MatrixXd ls = s_llt.matrixL();
    Eigen::JacobiSVD<MatrixXd> svd(ls.transpose() * lx, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const VectorXd d = svd.singularValues();
    if (!(d.minCoeff() > 0.0)) return finish(SdpStatus::kNumerical, iter);
    const VectorXd d_isqrt = d.cwiseSqrt().cwiseInverse();
    const MatrixXd g = lx * svd.matrixV() * d_isqrt.asDiagonal();
    const MatrixXd gt = g.transpose();

    std::vector<MatrixXd> at(static_cast<std::size_t>(m));  // G' A_i G
    for (Eigen::Index i = 0; i < m; ++i) {
      at[static_cast<std::size_t>(i)] = sym(gt * a[static_cast<std::size_t>(i)] * g);
    }
    MatrixXd schur(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = i; j < m; ++j) {
        schur(i, j) = schur(j, i) =
            inner(at[static_cast<std::size_t>(i)], at[static_cast<std::size_t>(j)]);
      }
    }
    Eigen::LDLT<MatrixXd> schur_ldlt(schur);
    if (schur_ldlt.info() != Eigen::Success) return finish(SdpStatus::kNumerical, iter);

    const double mu = inner(x, s) / dn;
    const MatrixXd rd_t = sym(gt * rd * g);

    // Scaled direction for the complementarity target R:
    //   dX~ + dS~ = K,  K_ij = 2 R_ij / (d_i + d_j),
    //   dS~ = Rd~ - sum dy_i A~_i,  <A~_i, dX~> = rp_i.
    auto direction = [&](const MatrixXd& r, MatrixXd& dxt, VectorXd& dy, MatrixXd& dst) {
      MatrixXd k(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) k(i, j) = 2.0 * r(i, j) / (d(i) + d(j));
      }
      VectorXd rhs(m);
      const MatrixXd base = k - rd_t;
      for (Eigen::Index i = 0; i < m; ++i) {
        rhs(i) = rp(i) - inner(at[static_cast<std::size_t>(i)], base);
      }
      dy = schur_ldlt.solve(rhs);
      dst = rd_t;
      for (Eigen::Index i = 0; i < m; ++i) dst -= dy(i) * at[static_cast<std::size_t>(i)];
      dxt = k - dst;
    };
    // Largest step keeping D + alpha dM PSD.
    auto scaled_step = [&](const MatrixXd& dm) {
      const MatrixXd w = d_isqrt.asDiagonal() * dm * d_isqrt.asDiagonal();
      const double lmin =
          Eigen::SelfAdjointEigenSolver<MatrixXd>(sym(w), Eigen::EigenvaluesOnly).eigenvalues()(0);
      return lmin >= 0.0 ? std::numeric_limits<double>::infinity() : -1.0 / lmin;
    };

    const MatrixXd dsq = d.cwiseAbs2().asDiagonal();
    MatrixXd dxt_aff, dst_aff;
    VectorXd dy_aff;
    direction(-dsq, dxt_aff, dy_aff, dst_aff);
    if (!dxt_aff.allFinite() || !dy_aff.allFinite()) return finish(SdpStatus::kNumerical, iter);
    const double ap_aff = std::min(1.0, scaled_step(dxt_aff));
    const double ad_aff = std::min(1.0, scaled_step(dst_aff));
    const MatrixXd dmat = d.asDiagonal();
    const double mu_aff =
        inner(dmat + ap_aff * dxt_aff, dmat + ad_aff * dst_aff) / dn;
    double sigma = std::pow(std::max(0.0, mu_aff) / mu, 3);
    sigma = std::clamp(sigma, 0.0, 1.0);

    // Once converged, a few pure centering steps pull the iterate back to
    // the central path; components of X that neither the objective nor the
    // constraints see are otherwise only bounded by positive semidefiniteness.
    MatrixXd r;
    if (converged) {
      --centering_left;
      r = mu * MatrixXd::Identity(n, n) - dsq;
    } else {
      r = sigma * mu * MatrixXd::Identity(n, n) - dsq - sym(dxt_aff * dst_aff);
    }
    MatrixXd dxt, dst;
    VectorXd dy;
    direction(r, dxt, dy, dst);
    if (!dxt.allFinite() || !dy.allFinite()) return finish(SdpStatus::kNumerical, iter);

    const double gamma = 0.9 + 0.09 * std::min(ap_aff, ad_aff);
    const double ap = std::min(1.0, gamma * scaled_step(dxt));
    const double ad = std::min(1.0, gamma * scaled_step(dst));
    if (ap <= 0.0 && ad <= 0.0) return finish(SdpStatus::kNumerical, iter);

    const MatrixXd dx = sym(g * dxt * gt);
    const MatrixXd ds = rd - op_at(dy);
    x = sym(x + ap * dx);
    y = y + ad * dy;
    s = sym(s + ad * ds);
  }
  return finish(SdpStatus::kMaxIter, max_iter);
}

}  // namespace range_rte::solvers
