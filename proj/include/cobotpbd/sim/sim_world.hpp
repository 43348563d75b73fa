#pragma once

#include <json.hpp>

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cobotpbd/error.hpp"
#include "cobotpbd/kinematics/forward_kinematics.hpp"
#include "cobotpbd/kinematics/pose_json.hpp"

namespace cobotpbd::sim {

using kinematics::Pose6D;
using kinematics::RobotModel;
using kinematics::Vector3;
using json = nlohmann::json;

struct JointState {
  Eigen::VectorXd positions;
  Eigen::VectorXd velocities;
  double timestamp = 0.0;
};

struct SimObject {
  std::string id;
  std::string class_id;
  Pose6D pose_world;
  Vector3 half_extents = Vector3::Constant(0.02);
  std::optional<Pose6D> attachment;  // inverse(ee) ∘ object while held
};

struct ContactEvent {
  Vector3 force = Vector3::Zero();  // N, world frame
  Vector3 point = Vector3::Zero();
  std::string object_id;
};

struct SimConfig {
  double attach_tolerance = 0.010;  // m, ee point to box surface
  double contact_stiffness = 500.0;  // N/m
};

/// Signed distance from a box: positive outside. Returns the outward face
/// normal (box frame) of the nearest face when inside.
struct BoxProbe {
  double outside_distance = 0.0;
  double penetration = 0.0;
  Vector3 local_normal = Vector3::Zero();
};

inline BoxProbe probe_box(const Pose6D& box_pose, const Vector3& half_extents, const Vector3& world_point) {
  const Vector3 p = box_pose.inverse().transform_point(world_point);
  BoxProbe out;
  const Vector3 excess = p.cwiseAbs() - half_extents;
  if ((excess.array() > 0.0).any()) {
    out.outside_distance = excess.cwiseMax(0.0).norm();
    return out;
  }
  // inside: nearest face is the one with the least remaining depth
  Eigen::Index axis = 0;
  const Vector3 depth = -excess;
  depth.minCoeff(&axis);
  out.penetration = depth[axis];
  out.local_normal = Vector3::Zero();
  out.local_normal[axis] = p[axis] >= 0.0 ? 1.0 : -1.0;
  return out;
}

/// Deterministic kinematic world: Euler-integrated joints and rigid boxes.
class SimWorld {
 public:
  SimWorld(RobotModel model, Eigen::VectorXd q0, SimConfig cfg = {})
      : model_(std::move(model)), cfg_(cfg) {
    if (static_cast<std::size_t>(q0.size()) != model_.dof()) {
      throw DimensionError("initial joint vector does not match model");
    }
    joints_.positions = model_.clamp_to_limits(q0);
    joints_.velocities = Eigen::VectorXd::Zero(q0.size());
    update_fk();
  }

  const RobotModel& model() const { return model_; }
  const SimConfig& config() const { return cfg_; }
  const JointState& joints() const { return joints_; }
  double time() const { return joints_.timestamp; }
  const kinematics::FkFrames& frames() const { return fk_; }
  const Pose6D& ee_pose() const { return fk_.ee; }
  const Pose6D& camera_pose() const { return fk_.camera; }
  const std::map<std::string, SimObject>& objects() const { return objects_; }

  const SimObject& object(const std::string& id) const {
    auto it = objects_.find(id);
    if (it == objects_.end()) throw NotFoundError("sim object '" + id + "' does not exist");
    return it->second;
  }

  bool has_object(const std::string& id) const { return objects_.count(id) > 0; }

  void add_object(SimObject obj) {
    if (obj.attachment) obj.pose_world = fk_.ee * *obj.attachment;
    objects_[obj.id] = std::move(obj);
  }

  /// Moves a free object, e.g. a scripted disturbance.
  void set_object_pose(const std::string& id, const Pose6D& pose) {
    auto& obj = mutable_object(id);
    if (obj.attachment) throw AttachError("object '" + id + "' is held and cannot be moved directly");
    obj.pose_world = pose;
  }

  void set_joint_positions(const Eigen::VectorXd& q) {
    if (static_cast<std::size_t>(q.size()) != model_.dof()) throw DimensionError("joint vector does not match model");
    joints_.positions = model_.clamp_to_limits(q);
    update_fk();
  }

  /// θ' = clamp_limits(θ + clamp_vel(θ̇)·dt); held objects follow the ee.
  void step(const Eigen::VectorXd& qdot_cmd, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("step_sim: dt must be positive");
    if (static_cast<std::size_t>(qdot_cmd.size()) != model_.dof()) {
      throw DimensionError("velocity command does not match model");
    }
    const Eigen::VectorXd vmax = model_.velocity_limits();
    Eigen::VectorXd v = qdot_cmd;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (!std::isfinite(v[i])) v[i] = 0.0;
    }
    v = v.cwiseMax(-vmax).cwiseMin(vmax);
    const Eigen::VectorXd next = model_.clamp_to_limits(joints_.positions + v * dt);
    joints_.velocities = (next - joints_.positions) / dt;
    joints_.positions = next;
    joints_.timestamp += dt;
    update_fk();
  }

  /// Separation between the ee point and the object's surface (0 inside).
  double grasp_separation(const std::string& id) const {
    const SimObject& obj = object(id);
    return probe_box(obj.pose_world, obj.half_extents, fk_.ee.translation()).outside_distance;
  }

  void attach(const std::string& id) {
    auto& obj = mutable_object(id);
    if (obj.attachment) throw AttachError("object '" + id + "' is already attached");
    const double sep = grasp_separation(id);
    if (sep > cfg_.attach_tolerance) {
      throw AttachError("missed grasp on '" + id + "': separation " + std::to_string(sep * 1000.0) + " mm exceeds " +
                        std::to_string(cfg_.attach_tolerance * 1000.0) + " mm");
    }
    obj.attachment = fk_.ee.inverse() * obj.pose_world;
  }

  void detach(const std::string& id) {
    auto& obj = mutable_object(id);
    if (!obj.attachment) throw AttachError("object '" + id + "' is not attached");
    obj.attachment.reset();
  }

  std::optional<std::string> held_object() const {
    for (const auto& [id, obj] : objects_) {
      if (obj.attachment) return id;
    }
    return std::nullopt;
  }

  /// Spring contacts of the ee point against every free box it penetrates.
  std::vector<ContactEvent> synth_contacts() const {
    std::vector<ContactEvent> out;
    const Vector3 p = fk_.ee.translation();
    for (const auto& [id, obj] : objects_) {
      if (obj.attachment) continue;
      const BoxProbe probe = probe_box(obj.pose_world, obj.half_extents, p);
      if (probe.penetration > 0.0) {
        out.push_back({obj.pose_world.rotate(probe.local_normal) * (cfg_.contact_stiffness * probe.penetration), p, id});
      }
    }
    return out;
  }

 private:
  SimObject& mutable_object(const std::string& id) {
    auto it = objects_.find(id);
    if (it == objects_.end()) throw NotFoundError("sim object '" + id + "' does not exist");
    return it->second;
  }

  void update_fk() {
    fk_ = kinematics::forward_kinematics(model_, joints_.positions);
    for (auto& [id, obj] : objects_) {
      if (obj.attachment) obj.pose_world = fk_.ee * *obj.attachment;
    }
  }

  RobotModel model_;
  SimConfig cfg_;
  JointState joints_;
  kinematics::FkFrames fk_;
  std::map<std::string, SimObject> objects_;
};

inline SimWorld step_sim(SimWorld world, const Eigen::VectorXd& qdot_cmd, double dt) {
  world.step(qdot_cmd, dt);
  return world;
}

inline std::vector<ContactEvent> synth_contacts(const SimWorld& world) { return world.synth_contacts(); }

// ---------------------------------------------------------------------------
// World scene files: {"objects": [{"id","class","half_extents":[..],"pose":{...}}]}

inline std::vector<SimObject> world_objects_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("objects") || !doc["objects"].is_array()) {
    throw ConfigError("world file: missing 'objects' array");
  }
  std::vector<SimObject> out;
  for (const auto& o : doc["objects"]) {
    SimObject obj;
    try {
      obj.id = o.at("id").get<std::string>();
      obj.class_id = o.value("class", "");
    } catch (const json::exception& e) {
      throw ConfigError(std::string("world file object: ") + e.what());
    }
    if (o.contains("half_extents")) obj.half_extents = kinematics::vec3_from_json(o["half_extents"], obj.id + ".half_extents");
    if ((obj.half_extents.array() <= 0.0).any()) throw ConfigError("world object '" + obj.id + "': half extents must be positive");
    if (o.contains("pose")) obj.pose_world = kinematics::pose_from_json(o["pose"], obj.id + ".pose");
    out.push_back(std::move(obj));
  }
  return out;
}

inline json world_objects_to_json(const std::map<std::string, SimObject>& objects) {
  json arr = json::array();
  for (const auto& [id, o] : objects) {
    arr.push_back({{"id", o.id},
                   {"class", o.class_id},
                   {"half_extents", kinematics::vec3_to_json(o.half_extents)},
                   {"pose", kinematics::pose_to_json(o.pose_world)}});
  }
  return {{"objects", arr}};
}

inline std::vector<SimObject> load_world_objects(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open world file: " + path);
  try {
    return world_objects_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("world file " + path + ": " + e.what());
  }
}

}  // namespace cobotpbd::sim
