#pragma once

#include "cobotpbd/error.hpp"
#include "cobotpbd/kinematics/pose.hpp"

namespace cobotpbd::controllers {

using kinematics::Pose6D;

/// How controller motion maps onto the end effector.
enum class TeleopConvention {
  world_delta,  // translation as world offset, rotation as world-frame delta about the ee point
  tool_frame,   // x_c = ctrl ∘ offset, i.e. the ee rides rigidly on the controller
};

struct TeleopSession {
  Pose6D offset;       // inverse(ctrl_origin) ∘ ee_origin
  Pose6D ctrl_origin;  // controller pose at activation
  Pose6D ee_origin;    // end-effector pose at activation
  bool active = false;
  TeleopConvention convention = TeleopConvention::world_delta;
};

/// Captures the offset so the first target equals the current ee pose.
/// Resuming after a pause is a fresh activation.
inline TeleopSession teleop_activate(const Pose6D& ee_pose, const Pose6D& ctrl_pose,
                                     TeleopConvention convention = TeleopConvention::world_delta) {
  TeleopSession s;
  s.ctrl_origin = ctrl_pose;
  s.ee_origin = ee_pose;
  s.offset = ctrl_pose.inverse() * ee_pose;
  s.active = true;
  s.convention = convention;
  return s;
}

inline TeleopSession teleop_pause(TeleopSession s) {
  s.active = false;
  return s;
}

inline Pose6D teleop_target(const TeleopSession& s, const Pose6D& ctrl_pose) {
  if (!s.active) {
    throw SessionError("teleop session is not active");
  }
  if (s.convention == TeleopConvention::tool_frame) {
    return ctrl_pose * s.offset;
  }
  const auto delta_rot = ctrl_pose.rotation() * s.ctrl_origin.rotation().conjugate();
  const auto delta_t = ctrl_pose.translation() - s.ctrl_origin.translation();
  return {delta_rot * s.ee_origin.rotation(), s.ee_origin.translation() + delta_t};
}

}  // namespace cobotpbd::controllers
