#pragma once

// Range measurement model, odometry/range synchronization, squared-distance
// debiasing, streaming outlier rejection and the motion-excitation gate.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "range_rte/core_geometry.hpp"
#include "range_rte/error.hpp"

namespace range_rte {

struct RangeSample {
  double t = 0.0;
  double d = 0.0;
};

/// One range paired with both antenna positions, each in its agent's own
/// local frame (host antenna `pa`, target antenna `pb`).
struct SyncedSample {
  double t = 0.0;
  double d = 0.0;
  Vec3 pa = Vec3::Zero();
  Vec3 pb = Vec3::Zero();
};

struct SyncedDataset {
  std::vector<SyncedSample> samples;
  double sigma_r = 0.1;
  std::optional<double> d0;

  std::size_t size() const { return samples.size(); }

  void validate() const {
    if (!(sigma_r > 0.0)) {
      throw Error(ErrorCode::kConfig, "dataset: sigma_r must be positive");
    }
    if (d0 && !(*d0 > 0.0)) {
      throw Error(ErrorCode::kConfig, "dataset: d0 must be positive");
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      if (!(s.d > 0.0) || !s.pa.allFinite() || !s.pb.allFinite()) {
        throw Error(ErrorCode::kConfig, "dataset: invalid sample " +
                                            std::to_string(i));
      }
      if (i > 0 && !(s.t > samples[i - 1].t)) {
        throw Error(ErrorCode::kConfig,
                    "dataset: timestamps not strictly increasing");
      }
    }
  }
};

/// Debiased squared distances and the diagonal of their covariance.
struct SquaredStats {
  Eigen::VectorXd s;
  Eigen::VectorXd sigma_s_diag;
};

/// || t + C(theta) pb - pa ||
inline double true_range(const Transform4DoF& tf, const Vec3& pa,
                         const Vec3& pb) {
  return (apply_transform(tf, pb) - pa).norm();
}

// ---------------------------------------------------------------------------
// Synchronization

struct IngestOptions {
  double sigma_r = 0.1;
  std::optional<double> d0;
};

struct IngestResult {
  SyncedDataset dataset;
  std::size_t dropped = 0;  // ranges without odometry coverage on both agents
};

namespace detail {

// Pose at time t, or nullopt when t is not bracketed by the stream.
inline std::optional<Pose> pose_at(std::span<const Pose> stream, double t) {
  if (stream.empty()) return std::nullopt;
  auto ub = std::upper_bound(
      stream.begin(), stream.end(), t,
      [](double value, const Pose& p) { return value < p.t; });
  if (ub == stream.begin()) return std::nullopt;
  const Pose& lo = *(ub - 1);
  if (lo.t == t) return lo;
  if (ub == stream.end()) return std::nullopt;
  return interpolate_pose(lo, *ub, t);
}

}  // namespace detail

/// Pairs each range with interpolated antenna positions of both agents.
/// Ranges outside either odometry stream, or with non-increasing timestamps,
/// are dropped and counted.
inline IngestResult ingest_logs(std::span<const Pose> odom_a,
                                std::span<const Pose> odom_b,
                                std::span<const RangeSample> ranges,
                                const LeverArm& arm_a, const LeverArm& arm_b,
                                const IngestOptions& opts = {}) {
  IngestResult out;
  out.dataset.sigma_r = opts.sigma_r;
  out.dataset.d0 = opts.d0;
  for (const RangeSample& r : ranges) {
    if (!(r.d > 0.0) || !std::isfinite(r.t)) {
      ++out.dropped;
      continue;
    }
    if (!out.dataset.samples.empty() && !(r.t > out.dataset.samples.back().t)) {
      ++out.dropped;
      continue;
    }
    const auto pose_a = detail::pose_at(odom_a, r.t);
    const auto pose_b = detail::pose_at(odom_b, r.t);
    if (!pose_a || !pose_b) {
      ++out.dropped;
      continue;
    }
    out.dataset.samples.push_back(
        SyncedSample{r.t, r.d, antenna_world_position(*pose_a, arm_a),
                     antenna_world_position(*pose_b, arm_b)});
  }
  if (out.dataset.samples.empty()) {
    throw Error(ErrorCode::kNoData,
                "ingest_logs: no range falls inside the odometry overlap");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Squared-distance statistics

/// s_i = d_i^2 - sigma_r^2, var_i = sigma_r^2 (4 d_i^2 + 2 sigma_r^2).
inline SquaredStats debias_squared(const SyncedDataset& dataset) {
  const double var_r = dataset.sigma_r * dataset.sigma_r;
  const auto k = static_cast<Eigen::Index>(dataset.size());
  SquaredStats stats;
  stats.s.resize(k);
  stats.sigma_s_diag.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double d = dataset.samples[static_cast<std::size_t>(i)].d;
    stats.s(i) = d * d - var_r;
    stats.sigma_s_diag(i) = var_r * (4.0 * d * d + 2.0 * var_r);
  }
  return stats;
}

/// Full covariance of the squared-range noise for a general range covariance.
inline Eigen::MatrixXd squared_covariance(const Eigen::VectorXd& d,
                                          const Eigen::MatrixXd& sigma_r) {
  const Eigen::Index k = d.size();
  Eigen::MatrixXd out(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      out(i, j) = sigma_r(i, j) * (4.0 * d(i) * d(j) + 2.0 * sigma_r(i, j));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Outlier rejection

enum class OutlierMode {
  kAbsolute,  // reject when the window variance exceeds the threshold
  kIncrease,  // reject when the variance grows by more than the threshold
};

/// Sliding-window variance gate over the K latest accepted ranges. The first
/// K samples are accepted unconditionally.
class SlidingOutlierFilter {
 public:
  SlidingOutlierFilter(std::size_t window, double threshold_m2,
                       OutlierMode mode = OutlierMode::kAbsolute)
      : window_(window), threshold_(threshold_m2), mode_(mode) {
    if (window_ < 2) {
      throw Error(ErrorCode::kConfig, "outlier filter: window must be >= 2");
    }
  }

  bool accept(double d) {
    if (values_.size() < window_) {
      values_.push_back(d);
      return true;
    }
    const double next = candidate_variance(d);
    const double limit =
        mode_ == OutlierMode::kAbsolute ? threshold_ : variance() + threshold_;
    if (next > limit) return false;
    values_.pop_front();
    values_.push_back(d);
    return true;
  }

  /// Biased (1/K) variance of the current window.
  double variance() const {
    return biased_variance(values_.begin(), values_.end(), 0.0, false);
  }

 private:
  double candidate_variance(double d) const {
    return biased_variance(values_.begin() + 1, values_.end(), d, true);
  }

  template <typename It>
  static double biased_variance(It first, It last, double extra,
                                bool with_extra) {
    double n = static_cast<double>(std::distance(first, last)) +
               (with_extra ? 1.0 : 0.0);
    if (n <= 0.0) return 0.0;
    double mean = with_extra ? extra : 0.0;
    for (It it = first; it != last; ++it) mean += *it;
    mean /= n;
    double acc = with_extra ? (extra - mean) * (extra - mean) : 0.0;
    for (It it = first; it != last; ++it) acc += (*it - mean) * (*it - mean);
    return acc / n;
  }

  std::size_t window_;
  double threshold_;
  OutlierMode mode_;
  std::deque<double> values_;
};

struct FilterResult {
  std::vector<RangeSample> accepted;
  std::size_t rejected = 0;
};

inline FilterResult sliding_outlier_filter(
    std::span<const RangeSample> ranges, std::size_t window,
    double threshold_m2, OutlierMode mode = OutlierMode::kAbsolute) {
  SlidingOutlierFilter filter(window, threshold_m2, mode);
  FilterResult out;
  out.accepted.reserve(ranges.size());
  for (const RangeSample& r : ranges) {
    if (filter.accept(r.d)) {
      out.accepted.push_back(r);
    } else {
      ++out.rejected;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Motion excitation

namespace detail {

inline bool axes_excited(std::span<const Vec3> positions, double var_threshold,
                         std::size_t n) {
  const std::size_t m = std::min(n, positions.size());
  if (m < 2) return false;
  const auto recent = positions.subspan(positions.size() - m);
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : recent) mean += p;
  mean /= static_cast<double>(m);
  Vec3 var = Vec3::Zero();
  for (const Vec3& p : recent) var += (p - mean).cwiseAbs2();
  var /= static_cast<double>(m - 1);
  return (var.array() > var_threshold).all();
}

}  // namespace detail

/// True iff both agents show per-axis sample variance above `var_threshold`
/// on every axis over their last `n` positions.
inline bool motion_excitation_check(std::span<const Vec3> recent_a,
                                    std::span<const Vec3> recent_b,
                                    double var_threshold = 0.05,
                                    std::size_t n = 100) {
  if (recent_a.empty() || recent_b.empty()) {
    throw Error(ErrorCode::kInsufficientData,
                "motion_excitation_check: empty position list");
  }
  return detail::axes_excited(recent_a, var_threshold, n) &&
         detail::axes_excited(recent_b, var_threshold, n);
}

}  // namespace range_rte
