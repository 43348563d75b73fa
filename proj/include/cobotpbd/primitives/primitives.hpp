#pragma once

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cobotpbd/controllers/pid.hpp"
#include "cobotpbd/error.hpp"
#include "cobotpbd/kinematics/pose.hpp"
#include "cobotpbd/kinematics/pose_json.hpp"
#include "cobotpbd/primitives/schema.hpp"
#include "cobotpbd/scene/scene_memory.hpp"

namespace cobotpbd::primitives {

using controllers::GainMode;
using kinematics::Pose6D;
using kinematics::Vector3;

struct MotionTolerance {
  double position = 0.002;           // m
  double orientation_deg = 1.0;
  double timeout = 30.0;             // s per phase

  bool reached(const Pose6D& target, const Pose6D& current) const {
    return kinematics::translation_distance(target, current) <= position &&
           kinematics::rad_to_deg(kinematics::angular_distance(target, current)) <= orientation_deg;
  }
};

struct MoveParams {
  std::optional<Pose6D> pose;       // world frame, or object frame when the step names an object
  std::optional<std::string> named;  // "home"
  std::optional<GainMode> speed_mode;
  MotionTolerance tolerance;
};

struct GraspParams {
  std::string object_class;
  Pose6D pre_grasp, grasp, post_grasp;  // ee poses in the object frame
  GainMode approach_speed_mode = GainMode::slow;
  double gripper_width = 0.08;
  double grip_pressure = 0.5;
  MotionTolerance tolerance;
};

struct PlaceParams {
  std::optional<std::string> target_object;  // logical name; absolute target when empty
  Pose6D target_pose;                        // ee pose in the target object frame, or world
  Pose6D pre_place, post_place;              // ee poses in the target frame
  GainMode approach_speed_mode = GainMode::slow;
  MotionTolerance tolerance;
};

struct LookAtParams {
  std::optional<Vector3> point;
  Vector3 world_up = Vector3::UnitZ();
  MotionTolerance tolerance;
};

struct PerceiveParams {
  std::size_t min_objects = 1;
  double timeout = 30.0;
};

using PrimitiveParams = std::variant<MoveParams, GraspParams, PlaceParams, LookAtParams, PerceiveParams>;

struct PrimitiveSpec {
  std::string id;
  PrimitiveKind kind = PrimitiveKind::move;
  std::optional<std::string> object;  // logical name of the object this step acts on
  PrimitiveParams params;
  json raw_params = json::object();
};

// ---------------------------------------------------------------------------
// JSON <-> typed params

namespace detail {

inline MotionTolerance tolerance_from(const json& p) {
  MotionTolerance t;
  t.position = p.value("tolerance_m", t.position);
  t.orientation_deg = p.value("tolerance_deg", t.orientation_deg);
  t.timeout = p.value("timeout_s", t.timeout);
  return t;
}

inline GainMode mode_from(const std::string& s) { return s == "fast" ? GainMode::fast : GainMode::slow; }

}  // namespace detail

/// Builds typed params from a params object already checked with
/// validate_params; throws ConfigError on anything structurally off.
inline PrimitiveParams params_from_json(PrimitiveKind kind, const json& p) {
  using kinematics::pose_from_json;
  try {
    switch (kind) {
      case PrimitiveKind::move: {
        MoveParams m;
        if (p.contains("pose")) m.pose = pose_from_json(p["pose"]);
        if (p.contains("named")) m.named = p["named"].get<std::string>();
        const std::string sm = p.value("speed_mode", "auto");
        if (sm != "auto") m.speed_mode = detail::mode_from(sm);
        m.tolerance = detail::tolerance_from(p);
        return m;
      }
      case PrimitiveKind::grasp: {
        GraspParams g;
        g.object_class = p.value("object_class", "");
        g.pre_grasp = pose_from_json(p.at("pre_grasp"), "pre_grasp");
        g.grasp = pose_from_json(p.at("grasp"), "grasp");
        g.post_grasp = pose_from_json(p.at("post_grasp"), "post_grasp");
        g.approach_speed_mode = detail::mode_from(p.value("approach_speed_mode", "slow"));
        g.gripper_width = p.value("gripper_width", g.gripper_width);
        g.grip_pressure = p.value("grip_pressure", g.grip_pressure);
        g.tolerance = detail::tolerance_from(p);
        return g;
      }
      case PrimitiveKind::place: {
        PlaceParams pl;
        const json& t = p.at("target");
        if (t.contains("object")) pl.target_object = t["object"].get<std::string>();
        pl.target_pose = pose_from_json(t.at("pose"), "target.pose");
        const Pose6D main = pl.target_object ? pl.target_pose : Pose6D::identity();
        pl.pre_place = p.contains("pre_place") ? pose_from_json(p["pre_place"], "pre_place") : main;
        pl.post_place = p.contains("post_place") ? pose_from_json(p["post_place"], "post_place") : main;
        pl.approach_speed_mode = detail::mode_from(p.value("approach_speed_mode", "slow"));
        pl.tolerance = detail::tolerance_from(p);
        return pl;
      }
      case PrimitiveKind::lookat: {
        LookAtParams l;
        if (p.contains("point")) l.point = kinematics::vec3_from_json(p["point"], "point");
        if (p.contains("world_up")) l.world_up = kinematics::vec3_from_json(p["world_up"], "world_up").normalized();
        l.tolerance = detail::tolerance_from(p);
        return l;
      }
      case PrimitiveKind::perceive: {
        PerceiveParams pc;
        pc.min_objects = static_cast<std::size_t>(p.value("min_objects", 1.0));
        pc.timeout = p.value("timeout_s", pc.timeout);
        return pc;
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string(to_string(kind)) + " params: " + e.what());
  }
  throw ConfigError("unknown primitive kind");
}

inline json grasp_params_to_json(const GraspParams& g) {
  using kinematics::pose_to_json;
  json j{{"pre_grasp", pose_to_json(g.pre_grasp)},
         {"grasp", pose_to_json(g.grasp)},
         {"post_grasp", pose_to_json(g.post_grasp)},
         {"approach_speed_mode", controllers::to_string(g.approach_speed_mode)},
         {"gripper_width", g.gripper_width},
         {"grip_pressure", g.grip_pressure},
         {"tolerance_m", g.tolerance.position},
         {"tolerance_deg", g.tolerance.orientation_deg},
         {"timeout_s", g.tolerance.timeout}};
  if (!g.object_class.empty()) j["object_class"] = g.object_class;
  return j;
}

inline json place_params_to_json(const PlaceParams& p) {
  using kinematics::pose_to_json;
  json target{{"pose", pose_to_json(p.target_pose)}};
  if (p.target_object) target["object"] = *p.target_object;
  return {{"target", target},
          {"pre_place", pose_to_json(p.pre_place)},
          {"post_place", pose_to_json(p.post_place)},
          {"approach_speed_mode", controllers::to_string(p.approach_speed_mode)},
          {"tolerance_m", p.tolerance.position},
          {"tolerance_deg", p.tolerance.orientation_deg},
          {"timeout_s", p.tolerance.timeout}};
}

// ---------------------------------------------------------------------------
// Planning helpers

enum class WaypointAction { move, close_gripper, open_gripper };

struct Waypoint {
  WaypointAction action = WaypointAction::move;
  Pose6D pose;  // ee target; for gripper actions, the pose held while acting
  std::string phase;
};

/// [pre, grasp, close, post], each object_pose ∘ offset.
inline std::vector<Waypoint> plan_grasp(const GraspParams& g, const Pose6D& object_pose_world) {
  return {{WaypointAction::move, object_pose_world * g.pre_grasp, "approach_pre_grasp"},
          {WaypointAction::move, object_pose_world * g.grasp, "approach_grasp"},
          {WaypointAction::close_gripper, object_pose_world * g.grasp, "close_gripper"},
          {WaypointAction::move, object_pose_world * g.post_grasp, "retreat_post_grasp"}};
}

/// [pre, place, open, post] relative to the target frame.
inline std::vector<Waypoint> plan_place(const PlaceParams& p, const Pose6D& target_frame_world) {
  const Pose6D main = p.target_object ? target_frame_world * p.target_pose : target_frame_world;
  return {{WaypointAction::move, target_frame_world * p.pre_place, "approach_pre_place"},
          {WaypointAction::move, main, "approach_place"},
          {WaypointAction::open_gripper, main, "release"},
          {WaypointAction::move, target_frame_world * p.post_place, "retreat_post_place"}};
}

/// Camera pose with +z toward `target` and x kept horizontal w.r.t. `world_up`.
/// When the bearing is parallel to world_up the current roll is kept.
inline Pose6D look_at_orientation(const Pose6D& camera_pose, const Vector3& target, const Vector3& world_up) {
  const Vector3 pos = camera_pose.translation();
  const Vector3 bearing = target - pos;
  if (!(bearing.norm() > 1e-12)) {
    throw std::invalid_argument("look_at: target coincides with the camera position");
  }
  const Vector3 z = bearing.normalized();
  Vector3 x = world_up.normalized().cross(z);
  if (x.norm() < 1e-9) {
    const kinematics::Matrix3 r = camera_pose.rotation_matrix();
    x = r.col(0) - r.col(0).dot(z) * z;
    if (x.norm() < 1e-9) x = r.col(1).cross(z);
  }
  x.normalize();
  const Vector3 y = z.cross(x);
  kinematics::Matrix3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return Pose6D::from_matrix(r, pos);
}

// ---------------------------------------------------------------------------
// Execution

enum class Outcome { running, succeeded, failed };

struct PrimitiveStatus {
  std::string phase;
  double progress = 0.0;
  Outcome outcome = Outcome::running;
  std::string reason;  // set when failed

  bool done() const { return outcome != Outcome::running; }
};

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::running: return "running";
    case Outcome::succeeded: return "succeeded";
    case Outcome::failed: return "failed";
  }
  return "running";
}

struct GripperCommand {
  bool close = true;
  std::string object_id;  // object to attach; empty on open (engine releases whatever is held)
  double width = 0.0;
  double pressure = 0.0;
};

/// What the engine provides to a running primitive each tick.
struct StepContext {
  const scene::SceneMemory* scene = nullptr;
  Pose6D ee_pose;
  Pose6D camera_pose;
  Pose6D camera_offset;  // ee -> camera
  Pose6D home_pose;
  double now = 0.0;
  double dt = 0.0;
  double last_detection_time = -1.0;
  std::map<std::string, std::string> bindings;  // logical name -> object id
};

struct StepOutput {
  PrimitiveStatus status;
  std::optional<Pose6D> target;  // x_c for the task-space controller
  std::optional<GainMode> forced_mode;
  std::optional<GripperCommand> gripper;
  bool detection_request = false;
};

/// Phase state machine for one primitive. Phase order is fixed per kind;
/// phases advance only forward and only one at a time.
class PrimitiveExecution {
 public:
  explicit PrimitiveExecution(PrimitiveSpec spec) : spec_(std::move(spec)) {}

  const PrimitiveSpec& spec() const { return spec_; }
  const PrimitiveStatus& status() const { return status_; }
  const std::vector<std::string>& phase_history() const { return history_; }
  const std::vector<std::string>& phases() const { return phase_names(); }

  /// Feedback from the engine after executing a gripper command.
  void report_gripper_result(bool ok, const std::string& reason = {}) { gripper_result_ = {ok, reason}; }

  StepOutput step(const StepContext& ctx) {
    StepOutput out;
    if (status_.done()) {
      out.status = status_;
      return out;
    }
    if (!started_) {
      started_ = true;
      start_time_ = ctx.now;
      enter_phase(0, ctx.now);
    }
    switch (spec_.kind) {
      case PrimitiveKind::move: step_move(ctx, out); break;
      case PrimitiveKind::grasp: step_grasp(ctx, out); break;
      case PrimitiveKind::place: step_place(ctx, out); break;
      case PrimitiveKind::lookat: step_lookat(ctx, out); break;
      case PrimitiveKind::perceive: step_perceive(ctx, out); break;
    }
    out.status = status_;
    return out;
  }

 private:
  const std::vector<std::string>& phase_names() const {
    static const std::vector<std::string> move{"moving"};
    static const std::vector<std::string> grasp{"approach_pre_grasp", "approach_grasp", "close_gripper",
                                                "retreat_post_grasp"};
    static const std::vector<std::string> place{"approach_pre_place", "approach_place", "release",
                                                "retreat_post_place"};
    static const std::vector<std::string> lookat{"orienting"};
    static const std::vector<std::string> perceive{"waiting_for_detections"};
    switch (spec_.kind) {
      case PrimitiveKind::move: return move;
      case PrimitiveKind::grasp: return grasp;
      case PrimitiveKind::place: return place;
      case PrimitiveKind::lookat: return lookat;
      case PrimitiveKind::perceive: return perceive;
    }
    return move;
  }

  void enter_phase(std::size_t index, double now) {
    phase_ = index;
    phase_start_ = now;
    status_.phase = phase_names()[index];
    status_.progress = static_cast<double>(index) / static_cast<double>(phase_names().size());
    history_.push_back(status_.phase);
  }

  /// Moves to the next phase, or succeeds after the last one.
  void advance(double now) {
    if (phase_ + 1 >= phase_names().size()) {
      status_.outcome = Outcome::succeeded;
      status_.progress = 1.0;
      return;
    }
    enter_phase(phase_ + 1, now);
  }

  void fail(std::string reason) {
    status_.outcome = Outcome::failed;
    status_.reason = std::move(reason);
  }

  bool timed_out(const StepContext& ctx, double timeout) {
    if (ctx.now - phase_start_ > timeout) {
      fail("timeout");
      return true;
    }
    return false;
  }

  std::optional<std::string> resolve(const std::string& logical, const StepContext& ctx) {
    auto it = ctx.bindings.find(logical);
    const std::string id = it == ctx.bindings.end() ? logical : it->second;
    if (!ctx.scene || !ctx.scene->contains(id)) return std::nullopt;
    return id;
  }

  /// Scene pose of the named object; marks failure when it is unknown.
  std::optional<Pose6D> object_pose(const std::string& logical, const StepContext& ctx) {
    const auto id = resolve(logical, ctx);
    if (!id) {
      fail("object_not_found");
      return std::nullopt;
    }
    return ctx.scene->query(*id, ctx.now).pose_world;
  }

  void servo(const Pose6D& target, const MotionTolerance& tol, const StepContext& ctx, StepOutput& out,
             std::optional<GainMode> mode) {
    out.target = target;
    out.forced_mode = mode;
    if (tol.reached(target, ctx.ee_pose)) {
      advance(ctx.now);
    } else {
      timed_out(ctx, tol.timeout);
    }
  }

  void step_move(const StepContext& ctx, StepOutput& out) {
    const auto& p = std::get<MoveParams>(spec_.params);
    Pose6D target = ctx.home_pose;
    if (p.pose) {
      target = *p.pose;
      if (spec_.object) {
        auto obj = object_pose(*spec_.object, ctx);
        if (!obj) return;
        target = *obj * *p.pose;
      }
    }
    servo(target, p.tolerance, ctx, out, p.speed_mode);
  }

  /// Shared by grasp and place: waypoints are re-planned from the current
  /// scene estimate until the gripper acts, then frozen.
  void step_waypoints(const std::vector<Waypoint>& plan, const MotionTolerance& tol, GainMode approach_mode,
                      const StepContext& ctx, StepOutput& out, const std::string& object_id) {
    const Waypoint& wp = frozen_ ? (*frozen_)[phase_] : plan[phase_];
    switch (wp.action) {
      case WaypointAction::move: {
        const bool approach = phase_ < 2;
        servo(wp.pose, tol, ctx, out, approach ? std::optional<GainMode>(approach_mode) : std::nullopt);
        break;
      }
      case WaypointAction::close_gripper:
      case WaypointAction::open_gripper: {
        out.target = wp.pose;
        out.forced_mode = approach_mode;
        if (!gripper_sent_) {
          frozen_ = plan;
          GripperCommand cmd;
          cmd.close = wp.action == WaypointAction::close_gripper;
          cmd.object_id = cmd.close ? object_id : std::string{};
          if (const auto* g = std::get_if<GraspParams>(&spec_.params)) {
            cmd.width = g->gripper_width;
            cmd.pressure = g->grip_pressure;
          }
          out.gripper = cmd;
          gripper_sent_ = true;
        } else if (gripper_result_) {
          if (gripper_result_->first) {
            advance(ctx.now);
          } else {
            fail(gripper_result_->second.empty() ? std::string("gripper_failed") : gripper_result_->second);
          }
        } else {
          timed_out(ctx, tol.timeout);
        }
        break;
      }
    }
  }

  void step_grasp(const StepContext& ctx, StepOutput& out) {
    const auto& g = std::get<GraspParams>(spec_.params);
    if (!spec_.object) {
      fail("object_not_found");
      return;
    }
    std::vector<Waypoint> plan;
    std::string id;
    if (!frozen_) {
      auto resolved = resolve(*spec_.object, ctx);
      if (!resolved) {
        fail("object_not_found");
        return;
      }
      id = *resolved;
      plan = plan_grasp(g, ctx.scene->query(id, ctx.now).pose_world);
    }
    step_waypoints(plan, g.tolerance, g.approach_speed_mode, ctx, out, id);
  }

  void step_place(const StepContext& ctx, StepOutput& out) {
    const auto& p = std::get<PlaceParams>(spec_.params);
    std::vector<Waypoint> plan;
    if (!frozen_) {
      Pose6D frame = p.target_pose;
      if (p.target_object) {
        auto obj = object_pose(*p.target_object, ctx);
        if (!obj) return;
        frame = *obj;
      }
      plan = plan_place(p, frame);
    }
    step_waypoints(plan, p.tolerance, p.approach_speed_mode, ctx, out, {});
  }

  void step_lookat(const StepContext& ctx, StepOutput& out) {
    const auto& l = std::get<LookAtParams>(spec_.params);
    if (!lookat_target_) {
      Vector3 point;
      if (l.point) {
        point = *l.point;
      } else if (spec_.object) {
        auto obj = object_pose(*spec_.object, ctx);
        if (!obj) return;
        point = obj->translation();
      } else {
        fail("missing_target");
        return;
      }
      try {
        const Pose6D cam = look_at_orientation(ctx.camera_pose, point, l.world_up);
        lookat_target_ = cam * ctx.camera_offset.inverse();
      } catch (const std::invalid_argument&) {
        fail("target_at_camera");
        return;
      }
    }
    servo(*lookat_target_, l.tolerance, ctx, out, std::nullopt);
  }

  void step_perceive(const StepContext& ctx, StepOutput& out) {
    const auto& p = std::get<PerceiveParams>(spec_.params);
    if (!hold_pose_) hold_pose_ = ctx.ee_pose;
    out.target = *hold_pose_;
    out.detection_request = true;
    const bool fresh = ctx.last_detection_time >= start_time_;
    const std::size_t known = ctx.scene ? ctx.scene->objects().size() : 0;
    if (fresh && known >= p.min_objects) {
      advance(ctx.now);
    } else {
      timed_out(ctx, p.timeout);
    }
  }

  PrimitiveSpec spec_;
  PrimitiveStatus status_;
  std::vector<std::string> history_;
  bool started_ = false;
  double start_time_ = 0.0;
  double phase_start_ = 0.0;
  std::size_t phase_ = 0;
  std::optional<std::vector<Waypoint>> frozen_;
  bool gripper_sent_ = false;
  std::optional<std::pair<bool, std::string>> gripper_result_;
  std::optional<Pose6D> lookat_target_;
  std::optional<Pose6D> hold_pose_;
};

}  // namespace cobotpbd::primitives
