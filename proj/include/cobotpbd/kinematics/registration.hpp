#pragma once

#include <optional>

#include "cobotpbd/error.hpp"
#include "cobotpbd/kinematics/pose.hpp"

namespace cobotpbd::kinematics {

struct Registration {
  Pose6D pose;  // annotated frame expressed in the annotating device's coordinates
  double scale = 1.0;

  /// Maps a pose given in device coordinates into the registered frame;
  /// translations are divided by the scale.
  Pose6D to_registered(const Pose6D& device_pose) const {
    const Pose6D local = pose.inverse() * device_pose;
    return {local.rotation(), local.translation() / scale};
  }

  Vector3 direction_to_device(const Vector3& v) const { return pose.rotate(v); }
};

/// Frame from three annotated points: origin p0, x toward p1, z normal to the
/// triangle, y = z × x. With a reference length the scale is |p1 − p0| / length.
inline Registration register_three_point(const Vector3& p0, const Vector3& p1, const Vector3& p2,
                                         std::optional<double> reference_length = std::nullopt) {
  const Vector3 a = p1 - p0;
  const Vector3 b = p2 - p0;
  const double area = 0.5 * a.cross(b).norm();
  if (!(area > 1e-9)) {
    throw RegistrationError("registration points are collinear (triangle area " + std::to_string(area) + " m^2)");
  }
  const Vector3 x = a.normalized();
  const Vector3 z = x.cross(b).normalized();
  const Vector3 y = z.cross(x);
  Matrix3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;

  Registration out;
  out.pose = Pose6D::from_matrix(r, p0);
  if (reference_length) {
    if (!(*reference_length > 0.0)) {
      throw RegistrationError("reference length must be positive");
    }
    out.scale = a.norm() / *reference_length;
  }
  return out;
}

}  // namespace cobotpbd::kinematics
