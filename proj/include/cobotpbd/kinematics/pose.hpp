#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>

namespace cobotpbd::kinematics {

using Vector3 = Eigen::Vector3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix3 = Eigen::Matrix3d;

/// Rigid transform: unit quaternion rotation followed by translation (meters).
///
/// The quaternion is kept normalized with w >= 0 so that error computations
/// never see the double-cover ambiguity.
class Pose6D {
 public:
  Pose6D() : rotation_(Eigen::Quaterniond::Identity()), translation_(Vector3::Zero()) {}

  Pose6D(const Eigen::Quaterniond& rotation, const Vector3& translation)
      : rotation_(canonical(rotation)), translation_(translation) {}

  static Pose6D identity() { return {}; }

  static Pose6D from_translation(const Vector3& t) { return {Eigen::Quaterniond::Identity(), t}; }
  static Pose6D from_translation(double x, double y, double z) { return from_translation(Vector3(x, y, z)); }

  static Pose6D from_rotation(const Eigen::Quaterniond& q) { return {q, Vector3::Zero()}; }

  static Pose6D from_axis_angle(const Vector3& axis, double angle, const Vector3& t = Vector3::Zero()) {
    return {Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized())), t};
  }

  /// Rotation about world z; handy for tests and demo scenes.
  static Pose6D rot_z(double angle) { return from_axis_angle(Vector3::UnitZ(), angle); }

  static Pose6D from_matrix(const Matrix3& r, const Vector3& t) { return {Eigen::Quaterniond(r), t}; }

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  const Vector3& translation() const { return translation_; }
  Matrix3 rotation_matrix() const { return rotation_.toRotationMatrix(); }

  Eigen::Isometry3d isometry() const {
    Eigen::Isometry3d iso = Eigen::Isometry3d::Identity();
    iso.linear() = rotation_matrix();
    iso.translation() = translation_;
    return iso;
  }

  Vector3 transform_point(const Vector3& p) const { return rotation_ * p + translation_; }
  Vector3 rotate(const Vector3& v) const { return rotation_ * v; }

  Pose6D inverse() const {
    const Eigen::Quaterniond inv = rotation_.conjugate();
    return {inv, -(inv * translation_)};
  }

  /// this ∘ other: apply `other` expressed in this frame.
  Pose6D operator*(const Pose6D& other) const {
    return {rotation_ * other.rotation_, translation_ + rotation_ * other.translation_};
  }

  bool is_finite() const { return rotation_.coeffs().allFinite() && translation_.allFinite(); }

 private:
  static Eigen::Quaterniond canonical(Eigen::Quaterniond q) {
    const double n = q.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      return Eigen::Quaterniond::Identity();
    }
    q.coeffs() /= n;
    if (q.w() < 0.0) {
      q.coeffs() *= -1.0;
    }
    return q;
  }

  Eigen::Quaterniond rotation_;
  Vector3 translation_;
};

inline Pose6D compose(const Pose6D& a, const Pose6D& b) { return a * b; }
inline Pose6D inverse(const Pose6D& p) { return p.inverse(); }

/// Axis-angle vector (rad) of a rotation, angle in [0, π].
inline Vector3 rotation_vector(const Eigen::Quaterniond& q_in) {
  Eigen::Quaterniond q = q_in.normalized();
  if (q.w() < 0.0) {
    q.coeffs() *= -1.0;
  }
  const double s = q.vec().norm();
  if (s < 1e-15) {
    // small-angle limit: 2·vec
    return 2.0 * q.vec();
  }
  const double angle = 2.0 * std::atan2(s, q.w());
  return q.vec() * (angle / s);
}

inline Eigen::Quaterniond quaternion_from_rotation_vector(const Vector3& rv) {
  const double angle = rv.norm();
  if (angle < 1e-15) {
    Eigen::Quaterniond q(1.0, 0.5 * rv.x(), 0.5 * rv.y(), 0.5 * rv.z());
    return q.normalized();
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, rv / angle));
}

/// Rotation angle of the relative rotation between two poses, rad.
inline double angular_distance(const Pose6D& a, const Pose6D& b) {
  return rotation_vector(a.rotation() * b.rotation().conjugate()).norm();
}

inline double translation_distance(const Pose6D& a, const Pose6D& b) {
  return (a.translation() - b.translation()).norm();
}

inline bool approx_equal(const Pose6D& a, const Pose6D& b, double tol) {
  return translation_distance(a, b) <= tol && angular_distance(a, b) <= tol;
}

/// Spatial velocity: linear (m/s) and angular (rad/s), world frame.
struct Twist {
  Vector3 linear = Vector3::Zero();
  Vector3 angular = Vector3::Zero();

  static Twist zero() { return {}; }

  static Twist from_vector(const Vector6& v) { return {v.head<3>(), v.tail<3>()}; }

  Vector6 as_vector() const {
    Vector6 v;
    v << linear, angular;
    return v;
  }

  bool is_finite() const { return linear.allFinite() && angular.allFinite(); }
  bool is_zero() const { return linear.isZero(0.0) && angular.isZero(0.0); }
};

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

}  // namespace cobotpbd::kinematics
