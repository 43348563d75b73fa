#pragma once

#include <json.hpp>

#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cobotpbd/controllers/pid.hpp"
#include "cobotpbd/controllers/teleop.hpp"
#include "cobotpbd/diagnostics.hpp"
#include "cobotpbd/haptics/haptics.hpp"
#include "cobotpbd/kinematics/differential_ik.hpp"
#include "cobotpbd/kinematics/registration.hpp"
#include "cobotpbd/kinematics/transform_tree.hpp"
#include "cobotpbd/primitives/primitives.hpp"
#include "cobotpbd/scene/scene_memory.hpp"
#include "cobotpbd/sim/detector.hpp"
#include "cobotpbd/sim/sim_world.hpp"
#include "cobotpbd/taskflow/commands.hpp"
#include "cobotpbd/taskflow/mux.hpp"
#include "cobotpbd/taskflow/task.hpp"
#include "cobotpbd/taskflow/teach.hpp"

namespace cobotpbd::taskflow {

using controllers::GainMode;
using kinematics::Pose6D;
using kinematics::Twist;
using kinematics::Vector3;

struct EngineConfig {
  kinematics::RobotModel model = kinematics::default_arm();
  Eigen::VectorXd home = kinematics::default_home();
  std::optional<Eigen::VectorXd> secondary_target;  // mid-range of the limits when unset
  double rate_hz = 250.0;
  controllers::ControllerConfig controller;
  kinematics::DiffIkOptions ik;
  sim::SimConfig sim;
  double visibility_timeout = 1.0;
  double haptic_f_max = 5.0;
  controllers::TeleopConvention teleop_convention = controllers::TeleopConvention::world_delta;
  double max_task_duration = 600.0;  // s of sim time for run_task
  bool spawn_detected_objects = true;  // create a default box for detections of unknown ids
  Vector3 spawn_half_extents = Vector3(0.02, 0.02, 0.02);

  double dt() const { return 1.0 / rate_hz; }
  Eigen::VectorXd secondary() const { return secondary_target ? *secondary_target : model.mid_range(); }
};

namespace detail {

inline json vecx_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Eigen::VectorXd vecx_from_json(const json& j) {
  const auto vals = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

}  // namespace detail

inline json engine_config_to_json(const EngineConfig& c) {
  json j{{"model", kinematics::robot_model_to_json(c.model)},
         {"home", detail::vecx_to_json(c.home)},
         {"rate_hz", c.rate_hz},
         {"controller", controllers::controller_config_to_json(c.controller)},
         {"ik", {{"damping", c.ik.damping},
                 {"singular_threshold", c.ik.singular_threshold},
                 {"auto_damping", c.ik.auto_damping},
                 {"nullspace_gain", c.ik.nullspace_gain}}},
         {"sim", {{"attach_tolerance_m", c.sim.attach_tolerance}, {"contact_stiffness", c.sim.contact_stiffness}}},
         {"visibility_timeout_s", c.visibility_timeout},
         {"haptic_f_max", c.haptic_f_max},
         {"teleop_convention", c.teleop_convention == controllers::TeleopConvention::world_delta ? "world_delta" : "tool_frame"},
         {"max_task_duration_s", c.max_task_duration},
         {"spawn_detected_objects", c.spawn_detected_objects},
         {"spawn_half_extents", kinematics::vec3_to_json(c.spawn_half_extents)}};
  if (c.secondary_target) j["secondary_target"] = detail::vecx_to_json(*c.secondary_target);
  return j;
}

inline EngineConfig engine_config_from_json(const json& j) {
  EngineConfig c;
  try {
    if (j.contains("model")) c.model = kinematics::robot_model_from_json(j["model"]);
    if (j.contains("home")) c.home = detail::vecx_from_json(j["home"]);
    else if (c.model.dof() != 7) c.home = c.model.mid_range();
    if (j.contains("secondary_target")) c.secondary_target = detail::vecx_from_json(j["secondary_target"]);
    c.rate_hz = j.value("rate_hz", c.rate_hz);
    if (j.contains("controller")) c.controller = controllers::controller_config_from_json(j["controller"]);
    if (j.contains("ik")) {
      const auto& ik = j["ik"];
      c.ik.damping = ik.value("damping", c.ik.damping);
      c.ik.singular_threshold = ik.value("singular_threshold", c.ik.singular_threshold);
      c.ik.auto_damping = ik.value("auto_damping", c.ik.auto_damping);
      c.ik.nullspace_gain = ik.value("nullspace_gain", c.ik.nullspace_gain);
    }
    if (j.contains("sim")) {
      c.sim.attach_tolerance = j["sim"].value("attach_tolerance_m", c.sim.attach_tolerance);
      c.sim.contact_stiffness = j["sim"].value("contact_stiffness", c.sim.contact_stiffness);
    }
    c.visibility_timeout = j.value("visibility_timeout_s", c.visibility_timeout);
    c.haptic_f_max = j.value("haptic_f_max", c.haptic_f_max);
    c.teleop_convention = j.value("teleop_convention", "world_delta") == "tool_frame"
                              ? controllers::TeleopConvention::tool_frame
                              : controllers::TeleopConvention::world_delta;
    c.max_task_duration = j.value("max_task_duration_s", c.max_task_duration);
    c.spawn_detected_objects = j.value("spawn_detected_objects", c.spawn_detected_objects);
    if (j.contains("spawn_half_extents")) c.spawn_half_extents = kinematics::vec3_from_json(j["spawn_half_extents"]);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("engine config: ") + e.what());
  }
  if (!(c.rate_hz > 0.0)) throw ConfigError("engine config: rate_hz must be positive");
  if (static_cast<std::size_t>(c.home.size()) != c.model.dof()) throw ConfigError("engine config: home size mismatch");
  if (c.secondary_target && static_cast<std::size_t>(c.secondary_target->size()) != c.model.dof()) {
    throw ConfigError("engine config: secondary_target size mismatch");
  }
  return c;
}

struct StepOutcome {
  std::string id;
  primitives::PrimitiveKind kind = primitives::PrimitiveKind::move;
  primitives::Outcome outcome = primitives::Outcome::running;
  std::string reason;
  double start_time = 0.0;
  double end_time = 0.0;
  std::vector<std::string> phases;
};

struct TaskResult {
  std::string task;
  bool success = false;
  std::vector<StepOutcome> steps;
  double duration = 0.0;
  std::optional<std::size_t> failed_step;
  std::string reason;
  std::vector<Diagnostic> diagnostics;  // validation findings, when rejected
};

inline json task_result_to_json(const TaskResult& r) {
  json steps = json::array();
  for (const auto& s : r.steps) {
    json sj{{"id", s.id},
            {"kind", primitives::to_string(s.kind)},
            {"outcome", primitives::to_string(s.outcome)},
            {"start", s.start_time},
            {"end", s.end_time},
            {"phases", s.phases}};
    if (!s.reason.empty()) sj["reason"] = s.reason;
    steps.push_back(sj);
  }
  json j{{"task", r.task}, {"success", r.success}, {"steps", steps}, {"duration_s", r.duration}};
  if (r.failed_step) j["failed_step"] = *r.failed_step;
  if (!r.reason.empty()) j["reason"] = r.reason;
  if (!r.diagnostics.empty()) {
    json ds = json::array();
    for (const auto& d : r.diagnostics) ds.push_back(diagnostic_to_json(d));
    j["diagnostics"] = ds;
  }
  return j;
}

struct TaskEvent {
  double time = 0.0;
  std::string step_id;
  std::string event;  // started | phase | succeeded | failed
  std::string detail;
};

/// Diagnostic addressed to one client (kLocalClient broadcasts).
struct Outgoing {
  ClientId client = kLocalClient;
  Diagnostic diagnostic;
};

/// The control loop: commands, perception, multiplexer, primitive or teleop
/// source, task-space PID, differential IK, simulation, contacts, haptics.
/// Single-threaded; other threads talk to it only through enqueue().
class Engine {
 public:
  explicit Engine(EngineConfig cfg = {})
      : cfg_(std::move(cfg)),
        world_(cfg_.model, cfg_.home, cfg_.sim),
        scene_(cfg_.visibility_timeout),
        controller_(cfg_.controller),
        layout_(haptics::default_layout()),
        patterns_(haptics::default_patterns()) {
    home_pose_ = kinematics::ee_pose(cfg_.model, world_.model().clamp_to_limits(cfg_.home));
    haptic_ = haptics::zero_frame(layout_);
    update_tree();
  }

  // ---- setup -------------------------------------------------------------

  void add_object(sim::SimObject obj) {
    world_.add_object(std::move(obj));
    update_tree();
  }
  void set_detection_replay(std::vector<scene::Detection> detections) { replay_ = scene::DetectionReplay(std::move(detections)); }
  void set_simulated_detector(sim::DetectorConfig cfg) { detector_.emplace(std::move(cfg)); }
  void set_haptic_layout(haptics::ActuatorLayout layout) {
    layout.validate();
    layout_ = std::move(layout);
    haptic_ = haptics::zero_frame(layout_);
  }

  // ---- commands ----------------------------------------------------------

  /// Thread-safe; applied in arrival order at the start of the next tick.
  void enqueue(Command cmd) {
    std::lock_guard lock(queue_mutex_);
    queue_.push_back(std::move(cmd));
  }

  void switch_mode(ControlSource source) { apply_mode_switch(kLocalClient, source); }

  /// Validates and installs a task (does not start it). Returns diagnostics;
  /// the task is rejected when any are errors.
  std::vector<Diagnostic> submit_task(const TaskDescription& task) {
    auto ds = validate_task(task, schemas_, nullptr);
    if (!has_errors(ds)) pending_task_ = task;
    return ds;
  }

  /// Starts the submitted task. Needs autonomous mode and no running task.
  std::optional<std::string> start_task() {
    if (!pending_task_) return "no task submitted";
    if (mux_.active_source != ControlSource::autonomous) return "mux is not in autonomous mode";
    if (run_ && !run_->finished) return "a task is already running";
    run_.emplace();
    run_->task = *pending_task_;
    run_->result.task = run_->task.name;
    run_->start_time = time();
    return std::nullopt;
  }

  void abort_task(const std::string& reason = "aborted") {
    if (run_ && !run_->finished) finish_run(false, reason);
  }

  /// Runs a task to completion in simulated time. Validation errors reject
  /// the task without ticking. An idle mux is switched to autonomous first.
  TaskResult run_task(const TaskDescription& task) {
    TaskResult rejected;
    rejected.task = task.name;
    rejected.diagnostics = submit_task(task);
    if (has_errors(rejected.diagnostics)) {
      rejected.reason = "validation failed";
      return rejected;
    }
    if (mux_.active_source == ControlSource::idle) switch_mode(ControlSource::autonomous);
    if (auto err = start_task()) {
      rejected.reason = *err;
      return rejected;
    }
    const double deadline = time() + cfg_.max_task_duration;
    while (run_ && !run_->finished && time() < deadline) tick();
    if (run_ && !run_->finished) finish_run(false, "task deadline exceeded");
    return run_->result;
  }

  // ---- loop --------------------------------------------------------------

  void tick() {
    const double now = world_.time();
    const double dt = cfg_.dt();
    apply_commands();
    perceive(now);

    std::optional<Pose6D> target;
    std::optional<GainMode> forced;
    switch (mux_.active_source) {
      case ControlSource::idle: break;
      case ControlSource::teleop:
        if (teleop_ && teleop_->active && ctrl_pose_world_) target = controllers::teleop_target(*teleop_, *ctrl_pose_world_);
        break;
      case ControlSource::autonomous: step_task(now, dt, target, forced); break;
    }

    Eigen::VectorXd qdot = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg_.model.dof()));
    twist_ = Twist::zero();
    if (target) {
      const auto out = controller_.step(*target, world_.ee_pose(), dt, forced);
      twist_ = out.twist.is_finite() ? out.twist : Twist::zero();
      gain_mode_ = out.mode;
      last_error_ = out.error;
      const auto ik = kinematics::diff_ik(cfg_.model, world_.joints().positions, twist_, cfg_.secondary(), cfg_.ik);
      degraded_ = ik.status == kinematics::DiffIkStatus::degraded;
      qdot = ik.velocities;
    } else {
      controller_.reset();
      last_error_.setZero();
    }
    last_target_ = target;
    world_.step(qdot, dt);

    contacts_ = world_.synth_contacts();
    Vector3 force = Vector3::Zero();
    for (const auto& c : contacts_) force += c.force;
    haptic_ = haptics::render_force_cue(layout_, registration_.direction_to_device(force), cfg_.haptic_f_max, world_.time());

    update_tree();
    ++ticks_;
    if (record_) *record_ << snapshot_json(false).dump() << '\n';
  }

  void run_for(double seconds) {
    const std::size_t n = static_cast<std::size_t>(std::llround(seconds * cfg_.rate_hz));
    for (std::size_t i = 0; i < n; ++i) tick();
  }

  // ---- observation -------------------------------------------------------

  double time() const { return world_.time(); }
  std::uint64_t ticks() const { return ticks_; }
  const EngineConfig& config() const { return cfg_; }
  const sim::SimWorld& world() const { return world_; }
  sim::SimWorld& mutable_world() { return world_; }
  const scene::SceneMemory& scene() const { return scene_; }
  const MuxState& mux() const { return mux_; }
  const Twist& commanded_twist() const { return twist_; }
  GainMode gain_mode() const { return gain_mode_; }
  const std::optional<Pose6D>& last_target() const { return last_target_; }
  bool degraded() const { return degraded_; }
  bool teleop_active() const { return teleop_ && teleop_->active; }
  const std::optional<controllers::TeleopSession>& teleop_session() const { return teleop_; }
  const kinematics::Registration& registration() const { return registration_; }
  const haptics::HapticFrame& haptic_frame() const { return haptic_; }
  const haptics::ActuatorLayout& haptic_layout() const { return layout_; }
  const haptics::PatternLibrary& haptic_patterns() const { return patterns_; }
  const std::vector<sim::ContactEvent>& contacts() const { return contacts_; }
  const std::vector<TaskEvent>& events() const { return events_; }
  const kinematics::TransformTree& transforms() const { return tree_; }
  const Pose6D& home_pose() const { return home_pose_; }
  const std::optional<TeachSession>& teach_session() const { return teach_; }
  const std::optional<json>& taught_step() const { return taught_step_; }
  bool task_running() const { return run_ && !run_->finished; }
  std::optional<TaskResult> last_result() const {
    if (run_ && run_->finished) return run_->result;
    return std::nullopt;
  }
  const primitives::PrimitiveExecution* current_primitive() const {
    return run_ && run_->exec ? &*run_->exec : nullptr;
  }

  std::vector<Outgoing> drain_outbox() {
    std::vector<Outgoing> out;
    out.swap(outbox_);
    return out;
  }

  void set_record_sink(std::ostream* out) { record_ = out; }

  /// State snapshot; joint frames are optional since they follow from q.
  json snapshot_json(bool include_frames = true) const {
    const auto& q = world_.joints();
    json objects = json::array();
    for (const auto& [id, o] : world_.objects()) {
      json oj{{"id", id},
              {"class", o.class_id},
              {"pose", kinematics::pose_to_json(o.pose_world)},
              {"half_extents", kinematics::vec3_to_json(o.half_extents)},
              {"attached", o.attachment.has_value()}};
      if (scene_.contains(id)) {
        const auto so = scene_.query(id, time());
        oj["status"] = scene::to_string(so.status);
        oj["pose_memory"] = kinematics::pose_to_json(so.pose_world);
        oj["last_seen"] = so.last_seen;
      } else {
        oj["status"] = "unknown";
      }
      objects.push_back(oj);
    }
    json task = nullptr;
    if (run_) {
      task = {{"name", run_->task.name},
              {"step_index", run_->index},
              {"running", !run_->finished},
              {"success", run_->result.success}};
      if (run_->exec) {
        task["step_id"] = run_->exec->spec().id;
        task["phase"] = run_->exec->status().phase;
        task["outcome"] = primitives::to_string(run_->exec->status().outcome);
      }
    }
    json teach = nullptr;
    if (teach_) {
      teach = teach_session_to_json(*teach_);
      if (teach_object_id_) teach["object_id"] = *teach_object_id_;
    }
    if (taught_step_) {
      if (teach.is_null()) teach = json::object();
      teach["primitive"] = *taught_step_;
    }
    json snap{{"t", time()},
              {"tick", ticks_},
              {"q", detail::vecx_to_json(q.positions)},
              {"qd", detail::vecx_to_json(q.velocities)},
              {"ee", kinematics::pose_to_json(world_.ee_pose())},
              {"camera", kinematics::pose_to_json(world_.camera_pose())},
              {"mux", to_string(mux_.active_source)},
              {"gain_mode", controllers::to_string(gain_mode_)},
              {"twist", {{"linear", kinematics::vec3_to_json(twist_.linear)}, {"angular", kinematics::vec3_to_json(twist_.angular)}}},
              {"teleop_active", teleop_active()},
              {"degraded", degraded_},
              {"objects", objects},
              {"task", task},
              {"teach", teach}};
    if (last_target_) snap["target"] = kinematics::pose_to_json(*last_target_);
    if (include_frames) {
      json frames = json::array();
      for (const auto& f : world_.frames().joints) frames.push_back(kinematics::pose_to_json(f));
      snap["frames"] = frames;
    }
    return snap;
  }

 private:
  struct TaskRun {
    TaskDescription task;
    std::size_t index = 0;
    std::optional<primitives::PrimitiveExecution> exec;
    std::map<std::string, std::string> bindings;
    double start_time = 0.0;
    double step_start = 0.0;
    std::string last_phase;
    bool finished = false;
    TaskResult result;
  };

  void emit(ClientId client, Severity sev, std::string code, std::string message) {
    outbox_.push_back({client, Diagnostic{sev, std::move(code), "", std::move(message), 0}});
  }

  // ---- command application ----------------------------------------------

  void apply_commands() {
    std::deque<Command> batch;
    {
      std::lock_guard lock(queue_mutex_);
      batch.swap(queue_);
    }
    // latest-wins: only the highest-seq controller pose of this tick applies
    const CtrlPoseCommand* latest = nullptr;
    ClientId latest_client = kLocalClient;
    for (const auto& cmd : batch) {
      if (const auto* c = std::get_if<CtrlPoseCommand>(&cmd.body)) {
        if (!latest || c->seq >= latest->seq) {
          latest = c;
          latest_client = cmd.client;
        }
        continue;
      }
      apply(cmd);
    }
    if (latest) apply_ctrl_pose(latest_client, *latest);
  }

  void apply(const Command& cmd) {
    std::visit(
        [&](const auto& body) {
          using T = std::decay_t<decltype(body)>;
          if constexpr (std::is_same_v<T, ModeSwitchCommand>) {
            apply_mode_switch(cmd.client, body.source);
          } else if constexpr (std::is_same_v<T, TeachCommand>) {
            apply_teach(cmd.client, body);
          } else if constexpr (std::is_same_v<T, TaskSubmitCommand>) {
            apply_task_submit(cmd.client, body);
          } else if constexpr (std::is_same_v<T, TaskControlCommand>) {
            if (body.action == TaskControlCommand::Action::start) {
              if (auto err = start_task()) emit(cmd.client, Severity::error, "task-start", *err);
            } else {
              abort_task("aborted by client");
            }
          } else if constexpr (std::is_same_v<T, RegisterPointsCommand>) {
            try {
              registration_ = kinematics::register_three_point(body.p0, body.p1, body.p2, body.reference_length);
              if (mux_.active_source == ControlSource::teleop) teleop_.reset();
            } catch (const RegistrationError& e) {
              emit(cmd.client, Severity::error, "registration", e.what());
            }
          } else if constexpr (std::is_same_v<T, ClientLostCommand>) {
            if (mux_.active_source == ControlSource::teleop) apply_mode_switch(cmd.client, ControlSource::idle);
          } else if constexpr (std::is_same_v<T, ClearSceneCommand>) {
            scene_.clear();
          }
        },
        cmd.body);
  }

  void apply_ctrl_pose(ClientId client, const CtrlPoseCommand& c) {
    if (mux_.active_source != ControlSource::teleop) {
      emit(client, Severity::warning, "teleop-inactive", "ctrl_pose ignored: mux is not in teleop mode");
      return;
    }
    ctrl_pose_world_ = registration_.to_registered(c.pose);
    if (!teleop_ || !teleop_->active) {
      // activation handshake: first pose after (re)entering teleop anchors the offset
      teleop_ = controllers::teleop_activate(world_.ee_pose(), *ctrl_pose_world_, cfg_.teleop_convention);
      controller_.reset();
    }
  }

  void apply_mode_switch(ClientId client, ControlSource source) {
    const auto t = mux_switch(mux_, source);
    if (!t.changed) return;
    if (mux_.active_source == ControlSource::autonomous && task_running()) finish_run(false, "preempted by mode switch");
    mux_ = t.state;
    if (t.reset_controller) controller_.reset();
    teleop_.reset();
    ctrl_pose_world_.reset();
    emit(client, Severity::warning, "mode", std::string("mux switched to ") + to_string(source));
  }

  void apply_task_submit(ClientId client, const TaskSubmitCommand& c) {
    try {
      const auto task = parse_task_json(c.task);
      for (const auto& d : submit_task(task)) outbox_.push_back({client, d});
    } catch (const TaskParseError& e) {
      for (const auto& d : e.diagnostics()) outbox_.push_back({client, d});
    }
  }

  void apply_teach(ClientId client, const TeachCommand& c) {
    try {
      switch (c.action) {
        case TeachCommand::Action::start: {
          const auto kind = primitives::kind_from_string(c.kind);
          if (!kind) throw SessionError("unknown primitive kind '" + c.kind + "'");
          std::string id = c.object_id;
          if (id.empty()) {
            const auto ids = scene_.ids_of_class(c.object_class);
            if (ids.empty()) throw SessionError("no object of class '" + c.object_class + "' in scene");
            id = ids.front();
          }
          teach_ = start_teach(*kind, c.object_class, c.object_name.empty() ? id : c.object_name);
          teach_object_id_ = id;
          teach_step_id_ = c.step_id.empty() ? std::string("taught_") + c.kind : c.step_id;
          taught_step_.reset();
          break;
        }
        case TeachCommand::Action::capture: {
          if (!teach_) throw SessionError("no teach session in progress");
          if (!scene_.contains(*teach_object_id_)) throw NotFoundError("unknown object '" + *teach_object_id_ + "'");
          const Pose6D obj = scene_.query(*teach_object_id_, time()).pose_world;
          teach_ = capture_teach_point(*teach_, c.phase, world_.ee_pose(), obj);
          if (teach_->complete()) taught_step_ = teach_to_step_json(*teach_, teach_step_id_);
          break;
        }
        case TeachCommand::Action::cancel:
          teach_.reset();
          teach_object_id_.reset();
          break;
      }
    } catch (const Error& e) {
      emit(client, Severity::error, "teach", e.what());
    }
  }

  // ---- perception ---------------------------------------------------------

  void perceive(double now) {
    std::vector<scene::Detection> dets;
    if (replay_) {
      auto r = replay_->poll(now);
      dets.insert(dets.end(), r.begin(), r.end());
    }
    if (detector_) {
      auto s = detector_->poll(world_, now, detection_requested_);
      dets.insert(dets.end(), s.begin(), s.end());
    }
    detection_requested_ = false;
    if (!dets.empty()) {
      scene_.apply(dets, world_.camera_pose(), now);
      last_detection_time_ = now;
      if (cfg_.spawn_detected_objects) {
        for (const auto& d : dets) {
          if (world_.has_object(d.object_id)) continue;
          sim::SimObject obj;
          obj.id = d.object_id;
          obj.class_id = d.class_id;
          obj.half_extents = cfg_.spawn_half_extents;
          obj.pose_world = scene_.query(d.object_id, now).pose_world;
          world_.add_object(std::move(obj));
        }
      }
    } else {
      scene_.refresh_status(now);
    }
  }

  // ---- task execution -----------------------------------------------------

  void finish_run(bool success, std::string reason) {
    run_->finished = true;
    run_->result.success = success;
    run_->result.reason = std::move(reason);
    run_->result.duration = time() - run_->start_time;
  }

  void begin_step(double now) {
    const auto& spec = run_->task.steps[run_->index];
    run_->bindings = resolve_bindings(run_->task, scene_);
    run_->exec.emplace(spec);
    run_->step_start = now;
    run_->last_phase.clear();
    events_.push_back({now, spec.id, "started", primitives::to_string(spec.kind)});
  }

  void step_task(double now, double dt, std::optional<Pose6D>& target, std::optional<GainMode>& forced) {
    if (!run_ || run_->finished) return;
    if (run_->index >= run_->task.steps.size()) {
      finish_run(true, "");
      return;
    }
    if (!run_->exec) begin_step(now);

    primitives::StepContext ctx;
    ctx.scene = &scene_;
    ctx.ee_pose = world_.ee_pose();
    ctx.camera_pose = world_.camera_pose();
    ctx.camera_offset = cfg_.model.camera_offset();
    ctx.home_pose = home_pose_;
    ctx.now = now;
    ctx.dt = dt;
    ctx.last_detection_time = last_detection_time_;
    ctx.bindings = run_->bindings;

    const auto out = run_->exec->step(ctx);
    if (out.detection_request) detection_requested_ = true;
    if (out.status.phase != run_->last_phase) {
      // a new waypoint: start the PID from a clean slate
      controller_.reset();
      if (!run_->last_phase.empty()) events_.push_back({now, run_->exec->spec().id, "phase", out.status.phase});
      run_->last_phase = out.status.phase;
    }
    if (out.gripper) execute_gripper(*out.gripper);
    target = out.target;
    forced = out.forced_mode;

    if (out.status.done()) {
      StepOutcome so;
      so.id = run_->exec->spec().id;
      so.kind = run_->exec->spec().kind;
      so.outcome = out.status.outcome;
      so.reason = out.status.reason;
      so.start_time = run_->step_start;
      so.end_time = now;
      so.phases = run_->exec->phase_history();
      run_->result.steps.push_back(so);
      const bool ok = out.status.outcome == primitives::Outcome::succeeded;
      events_.push_back({now, so.id, ok ? "succeeded" : "failed", so.reason});
      run_->exec.reset();
      if (!ok) {
        run_->result.failed_step = run_->index;
        finish_run(false, "step '" + so.id + "' failed: " + so.reason);
        return;
      }
      ++run_->index;
      if (run_->index >= run_->task.steps.size()) finish_run(true, "");
    }
  }

  void execute_gripper(const primitives::GripperCommand& g) {
    try {
      if (g.close) {
        if (!world_.has_object(g.object_id)) {
          run_->exec->report_gripper_result(false, "object_not_in_world");
          return;
        }
        world_.attach(g.object_id);
      } else {
        const auto held = world_.held_object();
        if (!held) {
          run_->exec->report_gripper_result(false, "nothing_held");
          return;
        }
        world_.detach(*held);
      }
      run_->exec->report_gripper_result(true);
    } catch (const AttachError& e) {
      run_->exec->report_gripper_result(false, "missed_grasp");
      emit(kLocalClient, Severity::error, "gripper", e.what());
    }
  }

  void update_tree() {
    const double t = world_.time();
    tree_.set_transform("world", "base", Pose6D::identity(), t);
    tree_.set_transform("base", "ee", world_.ee_pose(), t);
    tree_.set_transform("ee", "camera", cfg_.model.camera_offset(), t);
    tree_.set_transform("world", "device", registration_.pose.inverse(), t);
    for (const auto& [id, o] : world_.objects()) tree_.set_transform("world", "object/" + id, o.pose_world, t);
  }

  EngineConfig cfg_;
  sim::SimWorld world_;
  scene::SceneMemory scene_;
  controllers::TaskSpaceController controller_;
  haptics::ActuatorLayout layout_;
  haptics::PatternLibrary patterns_;
  primitives::SchemaSet schemas_ = primitives::primitive_schemas();
  kinematics::TransformTree tree_;
  kinematics::Registration registration_;
  Pose6D home_pose_;

  MuxState mux_;
  std::optional<controllers::TeleopSession> teleop_;
  std::optional<Pose6D> ctrl_pose_world_;

  std::optional<scene::DetectionReplay> replay_;
  std::optional<sim::SimulatedDetector> detector_;
  bool detection_requested_ = false;
  double last_detection_time_ = -1.0;

  std::optional<TaskDescription> pending_task_;
  std::optional<TaskRun> run_;
  std::vector<TaskEvent> events_;

  std::optional<TeachSession> teach_;
  std::optional<std::string> teach_object_id_;
  std::string teach_step_id_;
  std::optional<json> taught_step_;

  Twist twist_;
  GainMode gain_mode_ = GainMode::slow;
  kinematics::Vector6 last_error_ = kinematics::Vector6::Zero();
  std::optional<Pose6D> last_target_;
  bool degraded_ = false;
  std::vector<sim::ContactEvent> contacts_;
  haptics::HapticFrame haptic_;
  std::uint64_t ticks_ = 0;
  std::ostream* record_ = nullptr;

  std::mutex queue_mutex_;
  std::deque<Command> queue_;
  std::vector<Outgoing> outbox_;
};

}  // namespace cobotpbd::taskflow
