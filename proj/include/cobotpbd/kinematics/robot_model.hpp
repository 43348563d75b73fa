#pragma once

#include <json.hpp>

#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "cobotpbd/error.hpp"
#include "cobotpbd/kinematics/pose.hpp"
#include "cobotpbd/kinematics/pose_json.hpp"

namespace cobotpbd::kinematics {

enum class JointType { revolute, prismatic };

struct Joint {
  std::string name;
  JointType type = JointType::revolute;
  Vector3 axis = Vector3::UnitZ();  // unit, in the joint frame (after origin)
  Pose6D origin;                    // parent -> joint
  double lower = -std::numbers::pi;
  double upper = std::numbers::pi;
  double velocity_limit = 1.0;
};

/// Serial chain. The end effector hangs off the last joint; the in-hand
/// camera hangs off the end effector.
class RobotModel {
 public:
  RobotModel(std::vector<Joint> joints, Pose6D ee_offset, Pose6D camera_offset = Pose6D::identity())
      : joints_(std::move(joints)), ee_offset_(ee_offset), camera_offset_(camera_offset) {
    validate();
  }

  std::size_t dof() const { return joints_.size(); }
  const std::vector<Joint>& joints() const { return joints_; }
  const Joint& joint(std::size_t i) const { return joints_.at(i); }
  const Pose6D& ee_offset() const { return ee_offset_; }
  const Pose6D& camera_offset() const { return camera_offset_; }

  Eigen::VectorXd lower_limits() const {
    Eigen::VectorXd v(dof());
    for (std::size_t i = 0; i < dof(); ++i) v[i] = joints_[i].lower;
    return v;
  }
  Eigen::VectorXd upper_limits() const {
    Eigen::VectorXd v(dof());
    for (std::size_t i = 0; i < dof(); ++i) v[i] = joints_[i].upper;
    return v;
  }
  Eigen::VectorXd velocity_limits() const {
    Eigen::VectorXd v(dof());
    for (std::size_t i = 0; i < dof(); ++i) v[i] = joints_[i].velocity_limit;
    return v;
  }

  /// Default secondary joint target: mid-range of each joint.
  Eigen::VectorXd mid_range() const { return 0.5 * (lower_limits() + upper_limits()); }

  Eigen::VectorXd clamp_to_limits(const Eigen::VectorXd& q) const {
    return q.cwiseMax(lower_limits()).cwiseMin(upper_limits());
  }

  bool within_limits(const Eigen::VectorXd& q, double slack = 0.0) const {
    if (static_cast<std::size_t>(q.size()) != dof()) return false;
    for (std::size_t i = 0; i < dof(); ++i) {
      if (q[i] < joints_[i].lower - slack || q[i] > joints_[i].upper + slack) return false;
    }
    return true;
  }

 private:
  void validate() const {
    if (joints_.empty()) {
      throw ConfigError("robot model needs at least one joint");
    }
    for (const auto& j : joints_) {
      if (std::abs(j.axis.norm() - 1.0) > 1e-9) {
        throw ConfigError("joint '" + j.name + "': axis must be unit-norm");
      }
      if (!(j.lower < j.upper)) {
        throw ConfigError("joint '" + j.name + "': limits must satisfy lo < hi");
      }
      if (!(j.velocity_limit > 0.0)) {
        throw ConfigError("joint '" + j.name + "': velocity limit must be positive");
      }
    }
  }

  std::vector<Joint> joints_;
  Pose6D ee_offset_;
  Pose6D camera_offset_;
};

inline RobotModel robot_model_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("joints") || !doc["joints"].is_array()) {
    throw ConfigError("robot model: missing 'joints' array");
  }
  std::vector<Joint> joints;
  for (const auto& jj : doc["joints"]) {
    Joint j;
    j.name = jj.value("name", "joint" + std::to_string(joints.size()));
    const std::string type = jj.value("type", "revolute");
    if (type == "revolute") {
      j.type = JointType::revolute;
    } else if (type == "prismatic") {
      j.type = JointType::prismatic;
    } else {
      throw ConfigError("joint '" + j.name + "': unknown type '" + type + "'");
    }
    if (!jj.contains("axis")) throw ConfigError("joint '" + j.name + "': missing axis");
    j.axis = vec3_from_json(jj["axis"], "joint '" + j.name + "' axis");
    if (jj.contains("origin")) j.origin = pose_from_json(jj["origin"], "joint '" + j.name + "' origin");
    if (!jj.contains("limits")) throw ConfigError("joint '" + j.name + "': missing limits");
    const auto& lim = jj["limits"];
    try {
      j.lower = lim.at("lo").get<double>();
      j.upper = lim.at("hi").get<double>();
      j.velocity_limit = lim.at("vel").get<double>();
    } catch (const json::exception&) {
      throw ConfigError("joint '" + j.name + "': limits need numeric lo, hi, vel");
    }
    joints.push_back(std::move(j));
  }
  Pose6D ee = doc.contains("ee_offset") ? pose_from_json(doc["ee_offset"], "ee_offset") : Pose6D{};
  Pose6D cam = doc.contains("camera_offset") ? pose_from_json(doc["camera_offset"], "camera_offset") : Pose6D{};
  return RobotModel(std::move(joints), ee, cam);
}

inline json robot_model_to_json(const RobotModel& m) {
  json joints = json::array();
  for (const auto& j : m.joints()) {
    joints.push_back({{"name", j.name},
                      {"type", j.type == JointType::revolute ? "revolute" : "prismatic"},
                      {"axis", vec3_to_json(j.axis)},
                      {"origin", pose_to_json(j.origin)},
                      {"limits", {{"lo", j.lower}, {"hi", j.upper}, {"vel", j.velocity_limit}}}});
  }
  return {{"joints", joints}, {"ee_offset", pose_to_json(m.ee_offset())}, {"camera_offset", pose_to_json(m.camera_offset())}};
}

inline RobotModel load_robot_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open robot model file: " + path);
  try {
    return robot_model_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("robot model " + path + ": " + e.what());
  }
}

/// Reference 7-DOF arm (Panda-like geometry, joint frames aligned at q = 0).
/// The end effector points down (-z world) at q = 0.
inline RobotModel default_arm() {
  auto rj = [](std::string name, Vector3 origin, Vector3 axis, double lo, double hi, double vel) {
    Joint j;
    j.name = std::move(name);
    j.type = JointType::revolute;
    j.axis = axis;
    j.origin = Pose6D::from_translation(origin);
    j.lower = lo;
    j.upper = hi;
    j.velocity_limit = vel;
    return j;
  };
  std::vector<Joint> joints{
      rj("joint1", {0, 0, 0.333}, {0, 0, 1}, -2.8973, 2.8973, 2.175),
      rj("joint2", {0, 0, 0}, {0, 1, 0}, -1.7628, 1.7628, 2.175),
      rj("joint3", {0, 0, 0.316}, {0, 0, 1}, -2.8973, 2.8973, 2.175),
      rj("joint4", {0.0825, 0, 0}, {0, -1, 0}, -3.0718, -0.0698, 2.175),
      rj("joint5", {-0.0825, 0, 0.384}, {0, 0, 1}, -2.8973, 2.8973, 2.61),
      rj("joint6", {0, 0, 0}, {0, -1, 0}, -0.0175, 3.7525, 2.61),
      rj("joint7", {0.088, 0, 0}, {0, 0, -1}, -2.8973, 2.8973, 2.61),
  };
  const Pose6D ee = Pose6D::from_axis_angle(Vector3::UnitX(), std::numbers::pi, Vector3(0, 0, -0.2104));
  // camera sits beside the gripper, optical axis (+z) along the tool axis
  const Pose6D camera = Pose6D::from_translation(0.05, 0.0, -0.05);
  return RobotModel(std::move(joints), ee, camera);
}

/// Ready configuration of the default arm: tool pointing down in front of the base.
inline Eigen::VectorXd default_home() {
  Eigen::VectorXd q(7);
  q << 0.0, -0.785, 0.0, -2.356, 0.0, 1.571, 0.785;
  return q;
}

}  // namespace cobotpbd::kinematics
