#pragma once

#include <json.hpp>

#include <map>
#include <optional>
#include <string>

#include "cobotpbd/error.hpp"
#include "cobotpbd/kinematics/pose_json.hpp"
#include "cobotpbd/primitives/primitives.hpp"

namespace cobotpbd::taskflow {

using kinematics::Pose6D;
using json = nlohmann::json;

enum class TeachPhase { pre, main, post };

inline const char* to_string(TeachPhase p) {
  switch (p) {
    case TeachPhase::pre: return "pre";
    case TeachPhase::main: return "main";
    case TeachPhase::post: return "post";
  }
  return "pre";
}

/// Accepts pre|main|post and the grasp/place spellings of each.
inline TeachPhase teach_phase_from_string(const std::string& s) {
  if (s == "pre" || s == "pre_grasp" || s == "pre_place") return TeachPhase::pre;
  if (s == "main" || s == "grasp" || s == "place") return TeachPhase::main;
  if (s == "post" || s == "post_grasp" || s == "post_place") return TeachPhase::post;
  throw SessionError("unknown teach phase '" + s + "'");
}

/// Demonstration capture for one object-centric primitive. Each capture
/// stores the ee pose in the object frame at that instant.
struct TeachSession {
  primitives::PrimitiveKind kind = primitives::PrimitiveKind::grasp;
  std::string target_class;
  std::string object_name;  // logical name used in the generated step
  std::map<TeachPhase, Pose6D> captured;

  std::optional<TeachPhase> phase_pending() const {
    for (TeachPhase p : {TeachPhase::pre, TeachPhase::main, TeachPhase::post}) {
      if (!captured.count(p)) return p;
    }
    return std::nullopt;
  }

  bool complete() const { return !phase_pending().has_value(); }
};

inline TeachSession start_teach(primitives::PrimitiveKind kind, std::string target_class, std::string object_name) {
  if (kind != primitives::PrimitiveKind::grasp && kind != primitives::PrimitiveKind::place) {
    throw SessionError("only grasp and place primitives can be taught");
  }
  TeachSession s;
  s.kind = kind;
  s.target_class = std::move(target_class);
  s.object_name = std::move(object_name);
  return s;
}

inline TeachSession capture_teach_point(TeachSession session, TeachPhase phase, const Pose6D& ee_pose,
                                        const Pose6D& object_pose) {
  session.captured[phase] = object_pose.inverse() * ee_pose;
  return session;
}

inline TeachSession capture_teach_point(TeachSession session, const std::string& phase, const Pose6D& ee_pose,
                                        const Pose6D& object_pose) {
  return capture_teach_point(std::move(session), teach_phase_from_string(phase), ee_pose, object_pose);
}

/// Step JSON for the finished demonstration; schema-valid by construction.
inline json teach_to_step_json(const TeachSession& s, const std::string& step_id) {
  if (!s.complete()) {
    throw SessionError(std::string("teach session incomplete: missing '") + to_string(*s.phase_pending()) + "'");
  }
  json step{{"id", step_id}, {"kind", primitives::to_string(s.kind)}};
  if (s.kind == primitives::PrimitiveKind::grasp) {
    primitives::GraspParams g;
    g.object_class = s.target_class;
    g.pre_grasp = s.captured.at(TeachPhase::pre);
    g.grasp = s.captured.at(TeachPhase::main);
    g.post_grasp = s.captured.at(TeachPhase::post);
    step["object"] = s.object_name;
    step["params"] = primitives::grasp_params_to_json(g);
  } else {
    primitives::PlaceParams p;
    p.target_object = s.object_name;
    p.target_pose = s.captured.at(TeachPhase::main);
    p.pre_place = s.captured.at(TeachPhase::pre);
    p.post_place = s.captured.at(TeachPhase::post);
    step["params"] = primitives::place_params_to_json(p);
  }
  return step;
}

inline json teach_session_to_json(const TeachSession& s) {
  json captured = json::object();
  for (const auto& [phase, pose] : s.captured) captured[to_string(phase)] = kinematics::pose_to_json(pose);
  json j{{"kind", primitives::to_string(s.kind)},
         {"class", s.target_class},
         {"object", s.object_name},
         {"captured", captured},
         {"complete", s.complete()}};
  if (auto p = s.phase_pending()) j["phase_pending"] = to_string(*p);
  return j;
}

}  // namespace cobotpbd::taskflow
