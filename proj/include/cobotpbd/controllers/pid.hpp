#pragma once

#include <json.hpp>

#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>

#include "cobotpbd/error.hpp"
#include "cobotpbd/kinematics/pose.hpp"

namespace cobotpbd::controllers {

using kinematics::Pose6D;
using kinematics::Twist;
using kinematics::Vector3;
using kinematics::Vector6;
using json = nlohmann::json;

/// Task-space error e = x_c − x: translation difference, then the rotation
/// vector of R_c·R⁻¹ (world frame, angle in [0, π]).
inline Vector6 pose_error(const Pose6D& target, const Pose6D& current) {
  Vector6 e;
  e.head<3>() = target.translation() - current.translation();
  e.tail<3>() = kinematics::rotation_vector(target.rotation() * current.rotation().conjugate());
  return e;
}

/// Scheduling metric: ‖e_lin‖ + angular_weight·‖e_ang‖.
inline double weighted_error_norm(const Vector6& e, double angular_weight = 0.1) {
  return e.head<3>().norm() + angular_weight * e.tail<3>().norm();
}

struct GainSet {
  Vector6 kp = Vector6::Zero();
  Vector6 ki = Vector6::Zero();
  Vector6 kd = Vector6::Zero();

  static GainSet uniform(double p, double i, double d) {
    return {Vector6::Constant(p), Vector6::Constant(i), Vector6::Constant(d)};
  }

  bool valid() const { return (kp.array() >= 0).all() && (ki.array() >= 0).all() && (kd.array() >= 0).all(); }
};

enum class GainMode { slow, fast };

inline const char* to_string(GainMode m) { return m == GainMode::slow ? "slow" : "fast"; }

struct PidLimits {
  double windup = 0.5;             // per-component bound on the integral
  double max_linear = 0.25;        // m/s
  double max_angular = 1.0;        // rad/s
};

struct PidState {
  Vector6 integral = Vector6::Zero();
  std::optional<Vector6> prev_error;
  GainMode mode = GainMode::slow;
  double last_time = 0.0;

  /// Clears integral and derivative memory; the gain mode is kept.
  void reset() {
    integral.setZero();
    prev_error.reset();
  }
};

/// Scales each half of the twist down to its norm cap.
inline Twist cap_twist(Twist t, double max_linear, double max_angular) {
  const double ln = t.linear.norm();
  if (ln > max_linear) t.linear *= max_linear / ln;
  const double an = t.angular.norm();
  if (an > max_angular) t.angular *= max_angular / an;
  return t;
}

/// One PID update. Rectangular integration, backward-difference derivative
/// (zero on the first step after a reset).
inline std::pair<Twist, PidState> pid_step(const PidState& state, const Vector6& error, double dt,
                                           const GainSet& gains, const PidLimits& limits = {}) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("pid_step: dt must be positive");
  }
  PidState next = state;
  next.integral = (state.integral + error * dt).cwiseMax(-limits.windup).cwiseMin(limits.windup);
  Vector6 derivative = Vector6::Zero();
  if (state.prev_error) {
    derivative = (error - *state.prev_error) / dt;
  }
  next.prev_error = error;
  next.last_time = state.last_time + dt;

  Vector6 out = gains.kp.cwiseProduct(error) + gains.ki.cwiseProduct(next.integral) + gains.kd.cwiseProduct(derivative);
  if (!out.allFinite()) {
    out.setZero();
  }
  return {cap_twist(Twist::from_vector(out), limits.max_linear, limits.max_angular), next};
}

struct SchedulerConfig {
  double threshold = 0.05;   // τ, meters of weighted error
  double hysteresis = 0.01;  // h
  double angular_weight = 0.1;
  GainSet slow = GainSet::uniform(0.5, 0.0, 0.05);
  GainSet fast = GainSet::uniform(2.0, 0.0, 0.05);

  bool valid() const { return hysteresis > 0.0 && hysteresis < threshold && slow.valid() && fast.valid(); }

  const GainSet& gains(GainMode m) const { return m == GainMode::slow ? slow : fast; }
};

/// Dual-gain selection with a hysteresis band centred on the threshold.
inline GainMode select_mode(const Vector6& error, const SchedulerConfig& cfg, GainMode current) {
  const double n = weighted_error_norm(error, cfg.angular_weight);
  if (n > cfg.threshold + 0.5 * cfg.hysteresis) return GainMode::slow;
  if (n < cfg.threshold - 0.5 * cfg.hysteresis) return GainMode::fast;
  return current;
}

struct ControllerConfig {
  SchedulerConfig scheduler;
  PidLimits limits;

  void validate() const {
    if (!scheduler.valid()) {
      throw ConfigError("controller config: need 0 < hysteresis < threshold and non-negative gains");
    }
    if (!(limits.windup >= 0.0) || !(limits.max_linear > 0.0) || !(limits.max_angular > 0.0)) {
      throw ConfigError("controller config: windup must be >= 0 and speed caps positive");
    }
  }
};

namespace detail {

inline Vector6 vec6_from_json(const json& j, const std::string& what) {
  if (j.is_number()) return Vector6::Constant(j.get<double>());
  if (!j.is_array() || j.size() != 6) throw ConfigError(what + ": expected 6 numbers");
  Vector6 v;
  for (int i = 0; i < 6; ++i) {
    if (!j[i].is_number()) throw ConfigError(what + ": expected 6 numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

inline json vec6_to_json(const Vector6& v) {
  json a = json::array();
  for (int i = 0; i < 6; ++i) a.push_back(v[i]);
  return a;
}

inline GainSet gains_from_json(const json& j, const GainSet& fallback, const std::string& what) {
  GainSet g = fallback;
  if (j.contains("kp")) g.kp = vec6_from_json(j["kp"], what + ".kp");
  if (j.contains("ki")) g.ki = vec6_from_json(j["ki"], what + ".ki");
  if (j.contains("kd")) g.kd = vec6_from_json(j["kd"], what + ".kd");
  return g;
}

}  // namespace detail

/// {"slow": {"kp","ki","kd"}, "fast": {...}, "threshold_m", "hysteresis_m",
///  "max_linear_mps", "max_angular_rps", "windup"}; absent keys keep defaults.
inline ControllerConfig controller_config_from_json(const json& j) {
  ControllerConfig c;
  if (!j.is_object()) throw ConfigError("controller config: expected an object");
  if (j.contains("slow")) c.scheduler.slow = detail::gains_from_json(j["slow"], c.scheduler.slow, "slow");
  if (j.contains("fast")) c.scheduler.fast = detail::gains_from_json(j["fast"], c.scheduler.fast, "fast");
  try {
    c.scheduler.threshold = j.value("threshold_m", c.scheduler.threshold);
    c.scheduler.hysteresis = j.value("hysteresis_m", c.scheduler.hysteresis);
    c.limits.max_linear = j.value("max_linear_mps", c.limits.max_linear);
    c.limits.max_angular = j.value("max_angular_rps", c.limits.max_angular);
    c.limits.windup = j.value("windup", c.limits.windup);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("controller config: ") + e.what());
  }
  c.validate();
  return c;
}

inline json controller_config_to_json(const ControllerConfig& c) {
  auto gains = [](const GainSet& g) {
    return json{{"kp", detail::vec6_to_json(g.kp)}, {"ki", detail::vec6_to_json(g.ki)}, {"kd", detail::vec6_to_json(g.kd)}};
  };
  return {{"slow", gains(c.scheduler.slow)},
          {"fast", gains(c.scheduler.fast)},
          {"threshold_m", c.scheduler.threshold},
          {"hysteresis_m", c.scheduler.hysteresis},
          {"max_linear_mps", c.limits.max_linear},
          {"max_angular_rps", c.limits.max_angular},
          {"windup", c.limits.windup}};
}

inline ControllerConfig load_controller_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open controller config: " + path);
  try {
    return controller_config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("controller config " + path + ": " + e.what());
  }
}

/// Gain-scheduled task-space controller: error, mode selection, PID.
/// Integral memory is dropped whenever the mode changes.
class TaskSpaceController {
 public:
  explicit TaskSpaceController(ControllerConfig cfg = {}) : cfg_(std::move(cfg)) { cfg_.validate(); }

  struct Output {
    Twist twist;
    Vector6 error;
    GainMode mode;
    bool switched;
  };

  /// `forced` pins the gain mode (approach phases of grasp/place).
  Output step(const Pose6D& target, const Pose6D& current, double dt, std::optional<GainMode> forced = std::nullopt) {
    const Vector6 e = pose_error(target, current);
    const GainMode mode = forced ? *forced : select_mode(e, cfg_.scheduler, state_.mode);
    const bool switched = mode != state_.mode;
    if (switched) {
      state_.reset();
      state_.mode = mode;
    }
    auto [twist, next] = pid_step(state_, e, dt, cfg_.scheduler.gains(mode), cfg_.limits);
    state_ = next;
    return {twist, e, mode, switched};
  }

  void reset() { state_.reset(); }
  const PidState& state() const { return state_; }
  const ControllerConfig& config() const { return cfg_; }

 private:
  ControllerConfig cfg_;
  PidState state_;
};

}  // namespace cobotpbd::controllers
