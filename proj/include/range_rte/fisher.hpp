#pragma once

// Fisher information of the range model: per-sample Jacobians, the FIM and
// its inverse (CRLB), the geometric expansion of det(F) over measurement
// subsets, reduced sub-problem determinants, singularity flags and
// confidence intervals.

#include <Eigen/Core>
#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "range_rte/core_geometry.hpp"
#include "range_rte/error.hpp"
#include "range_rte/measurement.hpp"
#include "range_rte/solvers/eig_sym.hpp"

namespace range_rte {

using Mat4 = Eigen::Matrix4d;
using Vec4 = Eigen::Vector4d;

inline constexpr double kDefaultKappaThreshold = 1e6;
inline constexpr double kInverseRelCutoff = 1e-12;

/// Gradient of one range with respect to (t_x, t_y, t_z, theta): the unit
/// relative-position vector `u` and the heading sensitivity `phi`.
struct RangeJacobian {
  Vec3 u = Vec3::UnitX();
  double phi = 0.0;
  double d = 0.0;

  Vec4 row() const { return Vec4(u.x(), u.y(), u.z(), phi); }
};

inline RangeJacobian range_jacobian(const Transform4DoF& tf, const Vec3& pa,
                                    const Vec3& pb) {
  const Vec3 rotated = heading_rotation(tf.theta) * pb;
  const Vec3 w = tf.t + rotated - pa;
  const double d = w.norm();
  if (!(d > 1e-12)) {
    throw Error(ErrorCode::kSingularGeometry,
                "range_jacobian: antennas coincide (zero range)");
  }
  RangeJacobian out;
  out.d = d;
  out.u = w / d;
  out.phi = Vec3::UnitZ().cross(rotated).dot(out.u);
  return out;
}

/// k x 4 matrix whose rows are the range Jacobians.
inline Eigen::MatrixXd jacobian_matrix(const Transform4DoF& tf,
                                       const SyncedDataset& dataset) {
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(dataset.size()), 4);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset.samples[i];
    jac.row(static_cast<Eigen::Index>(i)) = range_jacobian(tf, s.pa, s.pb).row();
  }
  return jac;
}

struct FimReport {
  Mat4 F = Mat4::Zero();
  std::optional<Mat4> crlb;
  double crlb_t = std::numeric_limits<double>::infinity();
  double crlb_theta = std::numeric_limits<double>::infinity();
  double det_f = 0.0;
  double kappa = std::numeric_limits<double>::infinity();
  Vec4 eigenvalues = Vec4::Zero();  // descending
};

/// Builds a report from an already-assembled information matrix.
inline FimReport analyze_fim(const Mat4& information) {
  FimReport rep;
  rep.F = 0.5 * (information + information.transpose());
  rep.det_f = rep.F.determinant();
  const auto eig = solvers::eig_sym(rep.F);
  rep.eigenvalues = eig.values;
  rep.kappa = solvers::condition_number(eig.values);
  const double lmax = eig.values(0);
  const double lmin = eig.values(3);
  if (lmax > 0.0 && lmin > kInverseRelCutoff * lmax) {
    const Vec4 inv = eig.values.cwiseInverse();
    Mat4 crlb = eig.vectors * inv.asDiagonal() * eig.vectors.transpose();
    rep.crlb_t = crlb(0, 0) + crlb(1, 1) + crlb(2, 2);
    rep.crlb_theta = crlb(3, 3);
    rep.crlb = crlb;
  }
  return rep;
}

/// F = sigma_r^-2 J'J evaluated at `tf`.
inline FimReport fim(const Transform4DoF& tf, const SyncedDataset& dataset) {
  Mat4 info = Mat4::Zero();
  for (const auto& s : dataset.samples) {
    const Vec4 g = range_jacobian(tf, s.pa, s.pb).row();
    info.noalias() += g * g.transpose();
  }
  info /= dataset.sigma_r * dataset.sigma_r;
  return analyze_fim(info);
}

// ---------------------------------------------------------------------------
// Geometric determinant

namespace detail {

// Neumaier-compensated accumulator; the subset sums below span many orders
// of magnitude.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double triple(const Vec3& a, const Vec3& b, const Vec3& c) {
  return a.cross(b).dot(c);
}

inline double cross_z(const Vec3& a, const Vec3& b) {
  return a.x() * b.y() - a.y() * b.x();
}

inline std::vector<std::size_t> evenly_spaced(std::size_t k, std::size_t m) {
  std::vector<std::size_t> idx(m);
  for (std::size_t i = 0; i < m; ++i) {
    idx[i] = (m == 1) ? 0 : (i * (k - 1)) / (m - 1);
  }
  return idx;
}

}  // namespace detail

struct GeometricDetOptions {
  std::size_t max_samples = 40;
  bool subsample = false;  // when k > max_samples, use evenly spaced samples
};

/// det(F) as the sum over all 4-subsets of squared Laplace expansions
/// sum_i (-1)^i Phi_i T_i, where T_i are triple products of the unit
/// relative-position vectors. The prefactor is sigma_r^-8 so the value
/// equals the determinant of the 4x4 FIM.
inline double det_fim_geometric(const Transform4DoF& tf,
                                const SyncedDataset& dataset,
                                const GeometricDetOptions& opts = {}) {
  const std::size_t k = dataset.size();
  if (k < 4) {
    throw Error(ErrorCode::kInsufficientData,
                "det_fim_geometric: needs at least 4 samples");
  }
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  if (k > opts.max_samples) {
    if (!opts.subsample) {
      throw Error(ErrorCode::kConfig,
                  "det_fim_geometric: k exceeds the subset-enumeration cap; "
                  "enable subsampling");
    }
    idx = detail::evenly_spaced(k, opts.max_samples);
  }
  const std::size_t m = idx.size();
  std::vector<Vec3> u(m);
  std::vector<double> phi(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& s = dataset.samples[idx[i]];
    const auto g = range_jacobian(tf, s.pa, s.pb);
    u[i] = g.u;
    phi[i] = g.phi;
  }
  using detail::triple;
  detail::CompensatedSum acc;
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      const Vec3 uab = u[a].cross(u[b]);
      for (std::size_t c = b + 1; c < m; ++c) {
        const double t4 = uab.dot(u[c]);
        const Vec3 uac = u[a].cross(u[c]);
        const Vec3 ubc = u[b].cross(u[c]);
        for (std::size_t d = c + 1; d < m; ++d) {
          const double t1 = ubc.dot(u[d]);
          const double t2 = uac.dot(u[d]);
          const double t3 = uab.dot(u[d]);
          const double lam =
              -phi[a] * t1 + phi[b] * t2 - phi[c] * t3 + phi[d] * t4;
          acc.add(lam * lam);
        }
      }
    }
  }
  const double var = dataset.sigma_r * dataset.sigma_r;
  return acc.value() / (var * var * var * var);
}

enum class SubProblem {
  kKnownHeading3d,    // state (t_x, t_y, t_z)
  kUnknownHeading2d,  // state (t_x, t_y, theta), z components dropped
  kKnownHeading2d,    // state (t_x, t_y), z components dropped
};

inline const char* to_string(SubProblem v) {
  switch (v) {
    case SubProblem::kKnownHeading3d: return "3d_known_theta";
    case SubProblem::kUnknownHeading2d: return "2d_unknown_theta";
    case SubProblem::kKnownHeading2d: return "2d_known_theta";
  }
  return "unknown";
}

inline std::size_t state_dimension(SubProblem v) {
  return v == SubProblem::kKnownHeading2d ? 2 : 3;
}

/// Planar projection used by the 2D sub-problems.
inline SyncedDataset project_planar(const SyncedDataset& dataset) {
  SyncedDataset out = dataset;
  for (auto& s : out.samples) {
    s.pa.z() = 0.0;
    s.pb.z() = 0.0;
  }
  return out;
}

/// Determinant of the reduced FIM for the sub-problem, via its subset
/// expansion (triples for the 3-state variants, pairs for the 2-state one).
inline double det_fim_subproblem(SubProblem variant,
                                 const SyncedDataset& dataset,
                                 const Transform4DoF& tf) {
  const std::size_t k = dataset.size();
  if (k < state_dimension(variant)) {
    throw Error(ErrorCode::kInsufficientData,
                std::string("det_fim_subproblem: not enough samples for ") +
                    to_string(variant));
  }
  const bool planar = variant != SubProblem::kKnownHeading3d;
  const SyncedDataset data = planar ? project_planar(dataset) : dataset;
  Transform4DoF eval = tf;
  if (planar) eval.t.z() = 0.0;

  std::vector<Vec3> u(k);
  std::vector<double> phi(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto g = range_jacobian(eval, data.samples[i].pa, data.samples[i].pb);
    u[i] = g.u;
    phi[i] = g.phi;
  }
  const double var = dataset.sigma_r * dataset.sigma_r;
  detail::CompensatedSum acc;
  switch (variant) {
    case SubProblem::kKnownHeading3d:
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b)
          for (std::size_t c = b + 1; c < k; ++c) {
            const double t = detail::triple(u[a], u[b], u[c]);
            acc.add(t * t);
          }
      return acc.value() / (var * var * var);
    case SubProblem::kUnknownHeading2d:
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b)
          for (std::size_t c = b + 1; c < k; ++c) {
            const double lam = phi[a] * detail::cross_z(u[b], u[c]) -
                               phi[b] * detail::cross_z(u[a], u[c]) +
                               phi[c] * detail::cross_z(u[a], u[b]);
            acc.add(lam * lam);
          }
      return acc.value() / (var * var * var);
    case SubProblem::kKnownHeading2d:
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b) {
          const double s = detail::cross_z(u[a], u[b]);
          acc.add(s * s);
        }
      return acc.value() / (var * var);
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Singularity detection and uncertainty

struct SingularityOptions {
  double kappa_threshold = kDefaultKappaThreshold;
  // A parameter is unobservable when its standard error exceeds this multiple
  // of the median standard error.
  double median_ratio = 10.0;
  // ... or when this much of its unit direction lies in the near-null
  // eigenspace (eigenvalues below lambda_max / kappa_threshold).
  double null_loading = 0.01;
};

struct SingularityFlags {
  bool configuration_singular = false;
  std::array<bool, 4> per_param_unobservable{};
  double kappa_threshold = kDefaultKappaThreshold;
  double kappa = std::numeric_limits<double>::infinity();
  std::optional<Vec4> std_errors;  // present iff F is invertible

  bool translation_unobservable() const {
    return per_param_unobservable[0] || per_param_unobservable[1] ||
           per_param_unobservable[2];
  }
  bool heading_unobservable() const { return per_param_unobservable[3]; }
};

inline SingularityFlags singularity_report(const Mat4& f_hat,
                                           const SingularityOptions& opts = {}) {
  SingularityFlags flags;
  flags.kappa_threshold = opts.kappa_threshold;
  const Mat4 f = 0.5 * (f_hat + f_hat.transpose());
  const auto eig = solvers::eig_sym(f);
  flags.kappa = solvers::condition_number(eig.values);
  flags.configuration_singular = flags.kappa > opts.kappa_threshold;

  const double lmax = eig.values(0);
  const bool invertible = lmax > 0.0 && eig.values(3) > kInverseRelCutoff * lmax;
  if (invertible) {
    Vec4 se;
    const Mat4 inv = eig.vectors * eig.values.cwiseInverse().asDiagonal() *
                     eig.vectors.transpose();
    for (int i = 0; i < 4; ++i) se(i) = std::sqrt(std::max(0.0, inv(i, i)));
    flags.std_errors = se;
    std::array<double, 4> sorted{se(0), se(1), se(2), se(3)};
    std::sort(sorted.begin(), sorted.end());
    const double median = 0.5 * (sorted[1] + sorted[2]);
    for (int i = 0; i < 4; ++i) {
      if (se(i) > opts.median_ratio * median) flags.per_param_unobservable[i] = true;
    }
  }
  const double null_cut = lmax > 0.0 ? lmax / opts.kappa_threshold : 0.0;
  for (int j = 0; j < 4; ++j) {
    if (lmax > 0.0 && eig.values(j) > null_cut) continue;
    for (int i = 0; i < 4; ++i) {
      const double v = eig.vectors(i, j);
      if (v * v > opts.null_loading) flags.per_param_unobservable[i] = true;
    }
  }
  return flags;
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct ConfidenceReport {
  std::optional<std::array<Interval, 4>> intervals;  // (t_x, t_y, t_z, theta)
  SingularityFlags flags;
};

/// 95% intervals: estimate +- 1.96 sqrt([F^-1]_ii).
inline ConfidenceReport confidence_intervals(const Transform4DoF& estimate,
                                             const Mat4& f_hat,
                                             const SingularityOptions& opts = {}) {
  ConfidenceReport rep;
  rep.flags = singularity_report(f_hat, opts);
  if (!rep.flags.std_errors) return rep;
  const Vec4 center(estimate.t.x(), estimate.t.y(), estimate.t.z(), estimate.theta);
  std::array<Interval, 4> out{};
  for (int i = 0; i < 4; ++i) {
    const double half = 1.96 * (*rep.flags.std_errors)(i);
    out[static_cast<std::size_t>(i)] = Interval{center(i) - half, center(i) + half};
  }
  rep.intervals = out;
  return rep;
}

}  // namespace range_rte
