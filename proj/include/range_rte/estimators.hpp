#pragma once

// Estimators for the 4-DoF relative transform from synchronized ranges.
//
// The squared-distance weighted least-squares cost is rewritten as a
// quadratic form x' P0 x in the lifted monomial vector
//
//   x = [t_x, t_y, t_z, c, s, t_x c + t_y s, t_y c - t_x s, |t|^2, 1]
//
// with c = cos(theta), s = sin(theta), subject to five quadratic
// consistency constraints x' P_i x = r_i (the last one, |t| = d0, only when
// the first inter-origin distance is known). Three estimators are offered:
// the SDP relaxation with rank-one recovery, the QCQP solved by local
// refinement seeded from the relaxation, and plain range NLS.

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "range_rte/core_geometry.hpp"
#include "range_rte/error.hpp"
#include "range_rte/fisher.hpp"
#include "range_rte/measurement.hpp"
#include "range_rte/solvers/eig_sym.hpp"
#include "range_rte/solvers/lm.hpp"
#include "range_rte/solvers/sdp.hpp"

namespace range_rte {

using Vec9 = Eigen::Matrix<double, 9, 1>;
using Row9 = Eigen::Matrix<double, 1, 9>;
using Mat9 = Eigen::Matrix<double, 9, 9>;

// ---------------------------------------------------------------------------
// Lifted state

struct LiftedState {
  Vec9 x = Vec9::Zero();

  static LiftedState lift(const Transform4DoF& tf) {
    const double c = std::cos(tf.theta);
    const double s = std::sin(tf.theta);
    const Vec3& t = tf.t;
    LiftedState out;
    out.x << t.x(), t.y(), t.z(), c, s, t.x() * c + t.y() * s,
        t.y() * c - t.x() * s, t.squaredNorm(), 1.0;
    return out;
  }

  /// Largest violation among the defining relations (x9 = 1 included).
  double consistency_residual() const {
    const double c = x(3), s = x(4);
    double r = std::abs(x(8) - 1.0);
    r = std::max(r, std::abs(c * c + s * s - 1.0));
    r = std::max(r, std::abs(x(0) * c + x(1) * s - x(5)));
    r = std::max(r, std::abs(x(1) * c - x(0) * s - x(6)));
    r = std::max(r, std::abs(x.head<3>().squaredNorm() - x(7)));
    return r;
  }
};

/// Coefficient row A_i with A_i x(T) = |t + C pb - pa|^2 - s_i.
inline Row9 build_data_row(const SyncedSample& sample, double s_i) {
  const Vec3& p1 = sample.pa;
  const Vec3& p2 = sample.pb;
  const double eps =
      p1.squaredNorm() + p2.squaredNorm() - 2.0 * p1.z() * p2.z() - s_i;
  Row9 a;
  a << -2.0 * p1.x(), -2.0 * p1.y(), 2.0 * (p2.z() - p1.z()),
      -2.0 * (p1.x() * p2.x() + p1.y() * p2.y()),
      2.0 * (p1.x() * p2.y() - p2.x() * p1.y()), 2.0 * p2.x(), 2.0 * p2.y(),
      1.0, eps;
  return a;
}

// ---------------------------------------------------------------------------
// QCQP

struct QuadConstraint {
  Mat9 P = Mat9::Zero();
  double r = 0.0;
};

struct QcqpProblem {
  Mat9 P0 = Mat9::Zero();
  std::vector<QuadConstraint> constraints;
  Eigen::MatrixXd B;               // k x 9
  Eigen::VectorXd sqrt_weights;    // Sigma_s^{-1/2} diagonal
  bool has_d0 = false;

  double cost(const Vec9& x) const { return x.dot(P0 * x); }
  double cost(const Transform4DoF& tf) const {
    return cost(LiftedState::lift(tf).x);
  }
};

namespace detail {

// Symmetric matrix from MATLAB-style (row, col, value) triplets, 1-based.
// Off-diagonal entries are split half/half across (i,j) and (j,i) so that
// x' P x reproduces the bilinear form sum value * x_row * x_col.
struct Triplet {
  int row;
  int col;
  double value;
};

inline Mat9 symmetric_from_triplets(std::initializer_list<Triplet> entries) {
  Mat9 p = Mat9::Zero();
  for (const auto& e : entries) {
    const int i = e.row - 1;
    const int j = e.col - 1;
    if (i == j) {
      p(i, i) += e.value;
    } else {
      p(i, j) += 0.5 * e.value;
      p(j, i) += 0.5 * e.value;
    }
  }
  return p;
}

}  // namespace detail

/// The lifting constraints; `d0` adds |t|^2 = d0^2.
inline std::vector<QuadConstraint> lifting_constraints(std::optional<double> d0) {
  using detail::symmetric_from_triplets;
  std::vector<QuadConstraint> out;
  out.push_back({symmetric_from_triplets({{4, 4, 1}, {5, 5, 1}}), 1.0});
  out.push_back({symmetric_from_triplets({{1, 4, 1}, {2, 5, 1}, {9, 6, -1}}), 0.0});
  out.push_back({symmetric_from_triplets({{2, 4, 1}, {1, 5, -1}, {9, 7, -1}}), 0.0});
  out.push_back({symmetric_from_triplets(
                     {{1, 1, 1}, {2, 2, 1}, {3, 3, 1}, {8, 9, -1}}),
                 0.0});
  if (d0) {
    out.push_back({symmetric_from_triplets({{1, 1, 1}, {2, 2, 1}, {3, 3, 1}}),
                   (*d0) * (*d0)});
  }
  return out;
}

inline QcqpProblem assemble_qcqp(const SyncedDataset& dataset,
                                 const SquaredStats& stats) {
  const auto k = static_cast<Eigen::Index>(dataset.size());
  if (k < 1) {
    throw Error(ErrorCode::kInsufficientData, "assemble_qcqp: empty dataset");
  }
  QcqpProblem prob;
  prob.B.resize(k, 9);
  prob.sqrt_weights.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    prob.B.row(i) = build_data_row(dataset.samples[static_cast<std::size_t>(i)], stats.s(i));
    prob.sqrt_weights(i) = 1.0 / std::sqrt(stats.sigma_s_diag(i));
  }
  const Eigen::MatrixXd wb = prob.sqrt_weights.asDiagonal() * prob.B;
  prob.P0 = wb.transpose() * wb;
  prob.P0 = 0.5 * (prob.P0 + prob.P0.transpose()).eval();
  prob.constraints = lifting_constraints(dataset.d0);
  prob.has_d0 = dataset.d0.has_value();
  return prob;
}

/// Weighted squared-distance cost evaluated directly from the geometry.
inline double sdwls_cost(const Transform4DoF& tf, const SyncedDataset& dataset,
                         const SquaredStats& stats) {
  double acc = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset.samples[i];
    const Vec3 w = apply_transform(tf, s.pb) - s.pa;
    const double e = w.squaredNorm() - stats.s(static_cast<Eigen::Index>(i));
    acc += e * e / stats.sigma_s_diag(static_cast<Eigen::Index>(i));
  }
  return acc;
}

// ---------------------------------------------------------------------------
// SDP relaxation and rank-one recovery

struct SdpRelaxationOptions {
  double tol = 1e-10;
  int max_iter = 200;
};

struct SdpRelaxationResult {
  Mat9 X = Mat9::Zero();
  solvers::SolveDiagnostics diag;
  Eigen::VectorXd eigenvalues;  // descending
  double eig_ratio = 0.0;       // lambda_2 / lambda_1
  int numerical_rank = 0;       // eigenvalues above 1e-6 lambda_1
  double objective = 0.0;       // Tr(P0 X)
  double max_constraint_violation = 0.0;
  double wall_ms = 0.0;
};

/// Diagonal change of variables X = D Z D with D_ii = 1 / sqrt(P0_ii),
/// normalized so D_99 = 1.
inline Vec9 equilibration(const QcqpProblem& prob) {
  Vec9 d;
  for (int i = 0; i < 9; ++i) {
    const double p = prob.P0(i, i);
    d(i) = p > 0.0 && std::isfinite(p) ? 1.0 / std::sqrt(p) : 1.0;
  }
  return d / d(8);
}

/// min Tr(P0 X) s.t. Tr(P_i X) = r_i, X_99 = 1, X >= 0.
inline SdpRelaxationResult solve_sdp_relaxation(
    const QcqpProblem& prob, const SdpRelaxationOptions& opts = {}) {
  const auto start = std::chrono::steady_clock::now();
  const Vec9 dvec = equilibration(prob);
  const auto dmat = dvec.asDiagonal();

  solvers::SdpStandardForm sdp;
  sdp.C = dmat * prob.P0 * dmat;
  const auto m = static_cast<Eigen::Index>(prob.constraints.size());
  sdp.b.resize(m + 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& c = prob.constraints[static_cast<std::size_t>(i)];
    sdp.A.push_back(dmat * c.P * dmat);
    sdp.b(i) = c.r;
  }
  // Homogenization X_99 = 1; without it the scale of x9 is free.
  Eigen::MatrixXd e99 = Eigen::MatrixXd::Zero(9, 9);
  e99(8, 8) = 1.0;
  sdp.A.push_back(e99);
  sdp.b(m) = 1.0;
  const auto sol = solvers::sdp_solve(sdp, opts.tol, opts.max_iter);

  SdpRelaxationResult out;
  out.diag = sol.diag;
  out.X = dmat * sol.X * dmat;
  out.X = 0.5 * (out.X + out.X.transpose()).eval();
  out.objective = (prob.P0.array() * out.X.array()).sum();
  for (const auto& c : prob.constraints) {
    const double v = (c.P.array() * out.X.array()).sum();
    out.max_constraint_violation = std::max(
        out.max_constraint_violation, std::abs(v - c.r) / std::max(1.0, std::abs(c.r)));
  }
  const auto eig = solvers::eig_sym(out.X);
  out.eigenvalues = eig.values;
  const double l1 = eig.values(0);
  out.eig_ratio = l1 > 0.0 ? std::max(0.0, eig.values(1)) / l1
                           : std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    if (eig.values(i) > 1e-6 * l1) ++out.numerical_rank;
  }
  out.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - start)
                    .count();
  return out;
}

/// Optimal, or stopped early with residuals small enough to round from.
inline bool relaxation_usable(const SdpRelaxationResult& r) {
  if (r.diag.status == solvers::SdpStatus::kOptimal) return true;
  if (r.diag.status == solvers::SdpStatus::kInfeasible) return false;
  return r.diag.rel_gap <= 1e-6 && r.diag.primal_residual <= 1e-6 &&
         r.diag.dual_residual <= 1e-6;
}

/// Best rank-one factor sqrt(lambda_1) q_1, sign-fixed so x9 > 0 and scaled
/// to x9 = 1.
inline LiftedState recover_rank_one(const Mat9& X) {
  const auto eig = solvers::eig_sym(X);
  const double l1 = eig.values(0);
  if (!(l1 > 0.0)) {
    throw Error(ErrorCode::kDegenerateSolution,
                "recover_rank_one: no positive eigenvalue");
  }
  Vec9 x = std::sqrt(l1) * eig.vectors.col(0);
  if (x(8) < 0.0) x = -x;
  if (!(x(8) > 1e-12 * x.norm())) {
    throw Error(ErrorCode::kDegenerateSolution,
                "recover_rank_one: homogenizing coordinate vanishes");
  }
  LiftedState out;
  out.x = x / x(8);
  return out;
}

/// t = (x1, x2, x3), theta = atan2(x5, x4) after renormalizing (x4, x5).
inline Transform4DoF extract_transform(const LiftedState& state) {
  const double c = state.x(3);
  const double s = state.x(4);
  const double r = std::hypot(c, s);
  if (r < 1e-6) {
    throw Error(ErrorCode::kHeadingUndefined,
                "extract_transform: heading components vanish");
  }
  return Transform4DoF(state.x.head<3>(), std::atan2(s / r, c / r));
}

// ---------------------------------------------------------------------------
// Reports

enum class Estimator { kQcqp, kSdp, kNls };

inline const char* to_string(Estimator e) {
  switch (e) {
    case Estimator::kQcqp: return "qcqp";
    case Estimator::kSdp: return "sdp";
    case Estimator::kNls: return "nls";
  }
  return "unknown";
}

inline Estimator parse_estimator(const std::string& name) {
  if (name == "qcqp") return Estimator::kQcqp;
  if (name == "sdp") return Estimator::kSdp;
  if (name == "nls") return Estimator::kNls;
  throw Error(ErrorCode::kConfig, "unknown estimator '" + name + "'");
}

struct SolverInfo {
  std::string method;
  std::string status;
  bool converged = false;
  int iterations = 0;
  double final_cost = 0.0;
  double sdp_cost = std::numeric_limits<double>::quiet_NaN();  // QCQP cost at the SDP point
  double duality_gap = std::numeric_limits<double>::quiet_NaN();
  int rank = 0;
  double eig_ratio = std::numeric_limits<double>::quiet_NaN();
  double heading_renorm_residual = 0.0;  // | ||(x4,x5)|| - 1 | before extraction
  int restarts = 0;
  double wall_ms = 0.0;
};

struct EstimateReport {
  Transform4DoF theta_hat;
  std::optional<Vec4> std_errors;
  double kappa = std::numeric_limits<double>::infinity();
  SingularityFlags flags;
  FimReport fim;
  SolverInfo solver;
};

struct EstimatorOptions {
  SdpRelaxationOptions sdp;
  solvers::LmOptions lm;
  SingularityOptions singularity;
  int random_restarts = 6;
  std::uint64_t restart_seed = 0x5eed;
  std::optional<Transform4DoF> warm_start;
};

/// Fills the uncertainty part of a report from the FIM at the estimate.
inline void attach_uncertainty(EstimateReport& rep, const SyncedDataset& dataset,
                               const SingularityOptions& opts) {
  try {
    rep.fim = fim(rep.theta_hat, dataset);
  } catch (const Error&) {
    rep.fim = FimReport{};
  }
  rep.flags = singularity_report(rep.fim.F, opts);
  rep.kappa = rep.flags.kappa;
  rep.std_errors = rep.flags.std_errors;
}

// ---------------------------------------------------------------------------
// Local refinement over the natural parameters

namespace detail {

// d x / d (t_x, t_y, t_z, theta)
inline Eigen::Matrix<double, 9, 4> lift_jacobian(const Transform4DoF& tf) {
  const double c = std::cos(tf.theta);
  const double s = std::sin(tf.theta);
  const double tx = tf.t.x(), ty = tf.t.y(), tz = tf.t.z();
  Eigen::Matrix<double, 9, 4> j = Eigen::Matrix<double, 9, 4>::Zero();
  j(0, 0) = 1.0;
  j(1, 1) = 1.0;
  j(2, 2) = 1.0;
  j(5, 0) = c;   j(5, 1) = s;
  j(6, 0) = -s;  j(6, 1) = c;
  j(7, 0) = 2.0 * tx; j(7, 1) = 2.0 * ty; j(7, 2) = 2.0 * tz;
  j(3, 3) = -s;
  j(4, 3) = c;
  j(5, 3) = -tx * s + ty * c;
  j(6, 3) = -ty * s - tx * c;
  return j;
}

// Rotation taking e_x to `dir` (unit).
inline Mat3 frame_towards(const Vec3& dir) {
  return Eigen::Quaterniond::FromTwoVectors(Vec3::UnitX(), dir).toRotationMatrix();
}

// Parameterization of the transform used by the refinement. With a known
// d0 the translation lives on the sphere of radius d0, charted by
// (azimuth, elevation) around the start direction.
struct Chart {
  std::optional<double> radius;
  Mat3 base = Mat3::Identity();

  static Chart around(const Transform4DoF& start, std::optional<double> radius) {
    Chart ch;
    ch.radius = radius;
    if (radius) {
      const double n = start.t.norm();
      ch.base = frame_towards(n > 1e-12 ? Vec3(start.t / n) : Vec3::UnitX());
    }
    return ch;
  }

  Eigen::VectorXd initial(const Transform4DoF& start) const {
    if (radius) return Eigen::Vector3d(0.0, 0.0, start.theta);
    return Eigen::Vector4d(start.t.x(), start.t.y(), start.t.z(), start.theta);
  }

  Transform4DoF to_transform(const Eigen::VectorXd& p) const {
    if (radius) {
      const double az = p(0), el = p(1);
      const Vec3 dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                     std::sin(el));
      Transform4DoF tf;
      tf.t = (*radius) * (base * dir);
      tf.theta = p(2);
      return tf;
    }
    Transform4DoF tf;
    tf.t = p.head<3>();
    tf.theta = p(3);
    return tf;
  }

  // d (t_x, t_y, t_z, theta) / d p
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& p) const {
    if (radius) {
      const double az = p(0), el = p(1);
      Eigen::MatrixXd j = Eigen::MatrixXd::Zero(4, 3);
      const Vec3 d_az(-std::cos(el) * std::sin(az), std::cos(el) * std::cos(az), 0.0);
      const Vec3 d_el(-std::sin(el) * std::cos(az), -std::sin(el) * std::sin(az),
                      std::cos(el));
      j.block<3, 1>(0, 0) = (*radius) * (base * d_az);
      j.block<3, 1>(0, 1) = (*radius) * (base * d_el);
      j(3, 2) = 1.0;
      return j;
    }
    return Eigen::MatrixXd::Identity(4, 4);
  }
};

struct Refined {
  Transform4DoF tf;
  double cost = std::numeric_limits<double>::infinity();
  solvers::LmDiagnostics diag;
};

inline Refined refine_qcqp(const QcqpProblem& prob, const Transform4DoF& start,
                           std::optional<double> radius,
                           const solvers::LmOptions& lm) {
  const Chart chart = Chart::around(start, radius);
  const Eigen::MatrixXd wb = prob.sqrt_weights.asDiagonal() * prob.B;
  auto residuals = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
    return wb * LiftedState::lift(chart.to_transform(p)).x;
  };
  auto jacobian = [&](const Eigen::VectorXd& p) -> Eigen::MatrixXd {
    const Transform4DoF tf = chart.to_transform(p);
    return wb * lift_jacobian(tf) * chart.jacobian(p);
  };
  const auto res = solvers::lm_minimize(residuals, jacobian, chart.initial(start), lm);
  Refined out;
  out.tf = chart.to_transform(res.x);
  out.tf.theta = wrap_angle(out.tf.theta);
  out.diag = res.diag;
  out.cost = prob.cost(out.tf);
  if (!std::isfinite(out.cost)) out.cost = std::numeric_limits<double>::infinity();
  return out;
}

inline double mean_range(const SyncedDataset& dataset) {
  double acc = 0.0;
  for (const auto& s : dataset.samples) acc += s.d;
  return dataset.size() > 0 ? acc / static_cast<double>(dataset.size()) : 1.0;
}

}  // namespace detail

/// SDP relaxation followed by rank-one recovery and extraction.
inline EstimateReport sdp_estimate(const SyncedDataset& dataset,
                                   const EstimatorOptions& opts = {}) {
  const auto start = std::chrono::steady_clock::now();
  const auto stats = debias_squared(dataset);
  const auto prob = assemble_qcqp(dataset, stats);
  const auto relax = solve_sdp_relaxation(prob, opts.sdp);
  if (!relaxation_usable(relax)) {
    throw Error(ErrorCode::kSolverFailure,
                std::string("sdp relaxation failed: ") + solvers::to_string(relax.diag.status));
  }
  const LiftedState x = recover_rank_one(relax.X);
  EstimateReport rep;
  rep.theta_hat = extract_transform(x);
  rep.solver.method = "sdp";
  rep.solver.status = solvers::to_string(relax.diag.status);
  rep.solver.converged = relax.diag.status == solvers::SdpStatus::kOptimal;
  rep.solver.iterations = relax.diag.iterations;
  rep.solver.duality_gap = relax.diag.gap;
  rep.solver.rank = relax.numerical_rank;
  rep.solver.eig_ratio = relax.eig_ratio;
  rep.solver.heading_renorm_residual = std::abs(std::hypot(x.x(3), x.x(4)) - 1.0);
  rep.solver.final_cost = prob.cost(rep.theta_hat);
  rep.solver.sdp_cost = rep.solver.final_cost;
  attach_uncertainty(rep, dataset, opts.singularity);
  rep.solver.wall_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();
  return rep;
}

/// QCQP: SDP warm start, its z-mirror, an optional caller warm start and
/// random feasible starts, each refined locally; the lowest-cost candidate
/// wins.
inline EstimateReport solve_qcqp(const QcqpProblem& prob,
                                 const SyncedDataset& dataset,
                                 const EstimatorOptions& opts = {}) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<Transform4DoF> seeds;
  SolverInfo info;
  info.method = "qcqp";

  std::optional<SdpRelaxationResult> relax;
  try {
    relax = solve_sdp_relaxation(prob, opts.sdp);
    if (relaxation_usable(*relax)) {
      const LiftedState x = recover_rank_one(relax->X);
      const Transform4DoF sdp_tf = extract_transform(x);
      seeds.push_back(sdp_tf);
      Transform4DoF mirror = sdp_tf;
      mirror.t.z() = -mirror.t.z();
      seeds.push_back(mirror);
      info.duality_gap = relax->diag.gap;
      info.rank = relax->numerical_rank;
      info.eig_ratio = relax->eig_ratio;
      info.heading_renorm_residual = std::abs(std::hypot(x.x(3), x.x(4)) - 1.0);
    }
  } catch (const Error&) {
    // fall through to the remaining seeds
  }
  if (opts.warm_start) seeds.push_back(*opts.warm_start);

  std::mt19937_64 rng(opts.restart_seed);
  std::uniform_real_distribution<double> unif(-std::numbers::pi, std::numbers::pi);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::optional<double> radius =
      prob.has_d0 ? std::optional<double>(std::sqrt(prob.constraints.back().r))
                  : std::nullopt;
  const double norm = radius ? *radius : detail::mean_range(dataset);
  for (int i = 0; i < opts.random_restarts; ++i) {
    Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
    dir /= std::max(dir.norm(), 1e-12);
    seeds.emplace_back(norm * dir, unif(rng));
  }

  // Each seed is projected onto the feasible set before refinement.
  detail::Refined best;
  bool have_best = false;
  int total_iters = 0;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    Transform4DoF seed = seeds[i];
    if (radius) {
      const double n = seed.t.norm();
      seed.t = n > 1e-12 ? Vec3(seed.t * (*radius / n)) : Vec3(*radius, 0.0, 0.0);
    }
    if (i == 0 && relax) info.sdp_cost = prob.cost(seed);
    const auto cand = detail::refine_qcqp(prob, seed, radius, opts.lm);
    total_iters += cand.diag.iterations;
    if (!std::isfinite(cand.cost)) continue;
    if (!have_best || cand.cost < best.cost) {
      best = cand;
      have_best = true;
    }
  }
  if (!have_best) {
    throw Error(ErrorCode::kSolverFailure, "solve_qcqp: every restart diverged");
  }
  EstimateReport rep;
  rep.theta_hat = best.tf;
  info.final_cost = best.cost;
  info.iterations = total_iters;
  info.restarts = static_cast<int>(seeds.size());
  info.converged = best.diag.status == solvers::LmStatus::kConverged;
  info.status = solvers::to_string(best.diag.status);
  rep.solver = info;
  attach_uncertainty(rep, dataset, opts.singularity);
  rep.solver.wall_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();
  return rep;
}

inline EstimateReport qcqp_estimate(const SyncedDataset& dataset,
                                    const EstimatorOptions& opts = {}) {
  const auto stats = debias_squared(dataset);
  return solve_qcqp(assemble_qcqp(dataset, stats), dataset, opts);
}

/// Range-domain nonlinear least squares, 0.5 ||e_r||^2 / sigma_r^2, from
/// `init` (zero by default).
inline EstimateReport nls_estimate(const SyncedDataset& dataset,
                                   const Transform4DoF& init = {},
                                   const EstimatorOptions& opts = {}) {
  const auto start = std::chrono::steady_clock::now();
  const double inv_sigma = 1.0 / dataset.sigma_r;
  const auto k = static_cast<Eigen::Index>(dataset.size());
  auto unpack = [](const Eigen::VectorXd& p) {
    Transform4DoF tf;
    tf.t = p.head<3>();
    tf.theta = p(3);
    return tf;
  };
  auto residuals = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
    const Transform4DoF tf = unpack(p);
    Eigen::VectorXd r(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      const auto& s = dataset.samples[static_cast<std::size_t>(i)];
      r(i) = (true_range(tf, s.pa, s.pb) - s.d) * inv_sigma;
    }
    return r;
  };
  auto jacobian = [&](const Eigen::VectorXd& p) -> Eigen::MatrixXd {
    const Transform4DoF tf = unpack(p);
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(k, 4);
    for (Eigen::Index i = 0; i < k; ++i) {
      const auto& s = dataset.samples[static_cast<std::size_t>(i)];
      try {
        j.row(i) = range_jacobian(tf, s.pa, s.pb).row().transpose() * inv_sigma;
      } catch (const Error&) {
        // zero range: the gradient is undefined, leave the row empty
      }
    }
    return j;
  };
  Eigen::Vector4d p0(init.t.x(), init.t.y(), init.t.z(), init.theta);
  const auto res = solvers::lm_minimize(residuals, jacobian, p0, opts.lm);
  EstimateReport rep;
  rep.theta_hat = Transform4DoF(res.x.head<3>(), res.x(3));
  rep.solver.method = "nls";
  rep.solver.status = solvers::to_string(res.diag.status);
  rep.solver.converged = res.diag.status == solvers::LmStatus::kConverged;
  rep.solver.iterations = res.diag.iterations;
  rep.solver.final_cost = res.diag.final_cost;
  attach_uncertainty(rep, dataset, opts.singularity);
  rep.solver.wall_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();
  return rep;
}

inline EstimateReport run_estimator(Estimator which, const SyncedDataset& dataset,
                                    const EstimatorOptions& opts = {}) {
  switch (which) {
    case Estimator::kQcqp: return qcqp_estimate(dataset, opts);
    case Estimator::kSdp: return sdp_estimate(dataset, opts);
    case Estimator::kNls:
      return nls_estimate(dataset, opts.warm_start.value_or(Transform4DoF{}), opts);
  }
  throw Error(ErrorCode::kConfig, "run_estimator: unknown estimator");
}

// ---------------------------------------------------------------------------
// Sliding window

struct SlidingWindowOptions {
  std::size_t window = 50;
  std::size_t stride = 10;
  Estimator estimator = Estimator::kQcqp;
  EstimatorOptions estimator_opts;
  double excitation_var_threshold = 0.05;
  bool use_d0 = false;  // d0 only describes the initial transform
};

struct WindowEstimate {
  std::size_t first = 0;  // sample index range [first, last]
  std::size_t last = 0;
  double t = 0.0;
  bool skipped = false;
  bool failed = false;
  bool has_estimate = false;  // false until the first successful window
  Transform4DoF estimate;     // current (possibly held) estimate
  std::optional<EstimateReport> report;
  Vec3 aligned_target = Vec3::Zero();  // t_hat + C_hat pb at the last sample
};

inline std::vector<WindowEstimate> sliding_window_estimate(
    const SyncedDataset& stream, const SlidingWindowOptions& opts = {}) {
  if (opts.window < 10) {
    throw Error(ErrorCode::kConfig, "sliding_window_estimate: window must be >= 10");
  }
  if (opts.stride < 1) {
    throw Error(ErrorCode::kConfig, "sliding_window_estimate: stride must be >= 1");
  }
  std::vector<WindowEstimate> out;
  std::optional<Transform4DoF> current;
  for (std::size_t end = opts.window; end <= stream.size(); end += opts.stride) {
    WindowEstimate w;
    w.first = end - opts.window;
    w.last = end - 1;
    w.t = stream.samples[w.last].t;

    SyncedDataset win;
    win.sigma_r = stream.sigma_r;
    if (opts.use_d0) win.d0 = stream.d0;
    win.samples.assign(stream.samples.begin() + static_cast<std::ptrdiff_t>(w.first),
                       stream.samples.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<Vec3> pa, pb;
    pa.reserve(win.size());
    pb.reserve(win.size());
    for (const auto& s : win.samples) {
      pa.push_back(s.pa);
      pb.push_back(s.pb);
    }
    if (!motion_excitation_check(pa, pb, opts.excitation_var_threshold, opts.window)) {
      w.skipped = true;
    } else {
      EstimatorOptions eo = opts.estimator_opts;
      if (current) eo.warm_start = current;
      try {
        auto rep = run_estimator(opts.estimator, win, eo);
        current = rep.theta_hat;
        w.report = std::move(rep);
      } catch (const Error&) {
        w.failed = true;
      }
    }
    if (current) {
      w.has_estimate = true;
      w.estimate = *current;
      w.aligned_target = apply_transform(*current, stream.samples[w.last].pb);
    }
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace range_rte
