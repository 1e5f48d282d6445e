#pragma once

// Frames, poses, the 4-DoF transform between two gravity-aligned odometry
// frames, and pose interpolation.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <string>

#include "range_rte/error.hpp"

namespace range_rte {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Quat = Eigen::Quaterniond;  // coefficient storage is (x, y, z, w)

/// Wraps an angle into the half-open interval [-pi, pi).
inline double wrap_angle(double theta) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double r = std::fmod(theta + std::numbers::pi, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r - std::numbers::pi;
}

/// Timestamped pose of one agent expressed in its own local odometry frame.
struct Pose {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Quat q = Quat::Identity();

  bool is_valid() const {
    return std::isfinite(t) && p.allFinite() && q.coeffs().allFinite() &&
           std::abs(q.norm() - 1.0) <= 1e-9;
  }
};

/// Antenna offset in the body frame.
struct LeverArm {
  Vec3 r = Vec3::Zero();
};

/// Relative transform taking target-frame coordinates into the host frame:
/// translation plus a rotation about +z (counterclockwise, host to target).
struct Transform4DoF {
  Vec3 t = Vec3::Zero();
  double theta = 0.0;

  Transform4DoF() = default;
  Transform4DoF(const Vec3& translation, double heading)
      : t(translation), theta(wrap_angle(heading)) {}

  bool is_finite() const { return t.allFinite() && std::isfinite(theta); }
};

/// Rotation by `theta` about the z axis.
inline Mat3 heading_rotation(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Mat3 rot;
  rot << c, -s, 0.0,
         s, c, 0.0,
         0.0, 0.0, 1.0;
  return rot;
}

/// t + C(theta) p.
inline Vec3 apply_transform(const Transform4DoF& tf, const Vec3& p) {
  return tf.t + heading_rotation(tf.theta) * p;
}

inline Vec3 antenna_world_position(const Pose& pose, const LeverArm& arm) {
  return pose.p + pose.q.toRotationMatrix() * arm.r;
}

/// Linear interpolation of position, slerp of orientation. Endpoints are
/// returned unmodified.
inline Pose interpolate_pose(const Pose& a, const Pose& b, double t) {
  if (!(a.t < b.t)) {
    throw Error(ErrorCode::kOutOfRange,
                "interpolate_pose: bracket is empty (a.t >= b.t)");
  }
  if (!(t >= a.t && t <= b.t)) {
    throw Error(ErrorCode::kOutOfRange,
                "interpolate_pose: t=" + std::to_string(t) +
                    " outside [" + std::to_string(a.t) + ", " +
                    std::to_string(b.t) + "]");
  }
  if (t == a.t) return a;
  if (t == b.t) {
    Pose out = b;
    return out;
  }
  const double s = (t - a.t) / (b.t - a.t);
  Pose out;
  out.t = t;
  out.p = a.p + s * (b.p - a.p);
  out.q = a.q.slerp(s, b.q).normalized();
  return out;
}

}  // namespace range_rte
