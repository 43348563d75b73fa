#pragma once

#include <json.hpp>

#include <string>

#include "cobotpbd/error.hpp"
#include "cobotpbd/kinematics/pose.hpp"

namespace cobotpbd::kinematics {

using json = nlohmann::json;

inline json vec3_to_json(const Vector3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Vector3 vec3_from_json(const json& j, const std::string& what = "vector") {
  if (!j.is_array() || j.size() != 3) {
    throw ConfigError(what + ": expected an array of 3 numbers");
  }
  Vector3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) {
      throw ConfigError(what + ": expected an array of 3 numbers");
    }
    v[i] = j[i].get<double>();
  }
  return v;
}

/// Wire encoding: {"xyz":[x,y,z], "quat_wxyz":[w,x,y,z]}.
inline json pose_to_json(const Pose6D& p) {
  const auto& q = p.rotation();
  return json{{"xyz", vec3_to_json(p.translation())}, {"quat_wxyz", json::array({q.w(), q.x(), q.y(), q.z()})}};
}

/// Both keys are optional; missing ones default to identity.
inline Pose6D pose_from_json(const json& j, const std::string& what = "pose") {
  if (!j.is_object()) {
    throw ConfigError(what + ": expected an object with xyz/quat_wxyz");
  }
  Vector3 t = Vector3::Zero();
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  if (auto it = j.find("xyz"); it != j.end()) {
    t = vec3_from_json(*it, what + ".xyz");
  }
  if (auto it = j.find("quat_wxyz"); it != j.end()) {
    if (!it->is_array() || it->size() != 4) {
      throw ConfigError(what + ".quat_wxyz: expected an array of 4 numbers");
    }
    for (const auto& c : *it) {
      if (!c.is_number()) {
        throw ConfigError(what + ".quat_wxyz: expected an array of 4 numbers");
      }
    }
    q = Eigen::Quaterniond((*it)[0].get<double>(), (*it)[1].get<double>(), (*it)[2].get<double>(),
                           (*it)[3].get<double>());
    if (!(q.norm() > 1e-12)) {
      throw ConfigError(what + ".quat_wxyz: zero quaternion");
    }
  }
  return {q, t};
}

inline bool is_pose_json(const json& j) {
  try {
    (void)pose_from_json(j);
    return true;
  } catch (const ConfigError&) {
    return false;
  }
}

}  // namespace cobotpbd::kinematics
