#pragma once

#include <string>
#include <vector>

#include "cobotpbd/error.hpp"
#include "cobotpbd/kinematics/pose.hpp"
#include "cobotpbd/kinematics/robot_model.hpp"

namespace cobotpbd::kinematics {

using Jacobian = Eigen::Matrix<double, 6, Eigen::Dynamic>;

/// World poses of every joint frame (after its motion), the end effector and
/// the in-hand camera.
struct FkFrames {
  std::vector<Pose6D> joints;
  Pose6D ee;
  Pose6D camera;
};

namespace detail {

inline void check_dimension(const RobotModel& model, const Eigen::VectorXd& q) {
  if (static_cast<std::size_t>(q.size()) != model.dof()) {
    throw DimensionError("joint vector has " + std::to_string(q.size()) + " entries, model has " +
                         std::to_string(model.dof()) + " joints");
  }
}

inline Pose6D joint_motion(const Joint& j, double q) {
  if (j.type == JointType::revolute) {
    return Pose6D::from_axis_angle(j.axis, q);
  }
  return Pose6D::from_translation(j.axis * q);
}

}  // namespace detail

inline FkFrames forward_kinematics(const RobotModel& model, const Eigen::VectorXd& q, const Pose6D& base = {}) {
  detail::check_dimension(model, q);
  FkFrames out;
  out.joints.reserve(model.dof());
  Pose6D t = base;
  for (std::size_t i = 0; i < model.dof(); ++i) {
    const Joint& j = model.joint(i);
    t = t * j.origin * detail::joint_motion(j, q[i]);
    out.joints.push_back(t);
  }
  out.ee = t * model.ee_offset();
  out.camera = out.ee * model.camera_offset();
  return out;
}

inline Pose6D ee_pose(const RobotModel& model, const Eigen::VectorXd& q) { return forward_kinematics(model, q).ee; }

/// Geometric Jacobian in the world frame about the end-effector origin.
/// Rows 0-2 linear, rows 3-5 angular.
inline Jacobian jacobian(const RobotModel& model, const Eigen::VectorXd& q) {
  detail::check_dimension(model, q);
  const FkFrames fk = forward_kinematics(model, q);
  const Vector3 p_ee = fk.ee.translation();
  Jacobian jac(6, model.dof());
  for (std::size_t i = 0; i < model.dof(); ++i) {
    const Joint& j = model.joint(i);
    // The joint axis is invariant under its own motion, so the post-motion frame works.
    const Vector3 axis = fk.joints[i].rotate(j.axis);
    if (j.type == JointType::revolute) {
      const Vector3 p = fk.joints[i].translation();
      jac.col(i).head<3>() = axis.cross(p_ee - p);
      jac.col(i).tail<3>() = axis;
    } else {
      jac.col(i).head<3>() = axis;
      jac.col(i).tail<3>().setZero();
    }
  }
  return jac;
}

}  // namespace cobotpbd::kinematics
