#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include <json.hpp>

#include "cobotpbd/kinematics/pose.hpp"
#include "cobotpbd/taskflow/mux.hpp"

namespace cobotpbd::taskflow {

using ClientId = std::uint64_t;
inline constexpr ClientId kLocalClient = 0;

struct CtrlPoseCommand {
  std::uint64_t seq = 0;
  kinematics::Pose6D pose;  // device coordinates; registered on arrival
};

struct ModeSwitchCommand {
  ControlSource source = ControlSource::idle;
};

struct TeachCommand {
  enum class Action { start, capture, cancel } action = Action::start;
  std::string kind = "grasp";  // start
  std::string object_class;    // start
  std::string object_name;     // start: logical name in the generated step
  std::string object_id;       // start: scene id; resolved by class when empty
  std::string phase;           // capture
  std::string step_id;         // start: id of the generated step
};

struct TaskSubmitCommand {
  nlohmann::json task;
};

struct TaskControlCommand {
  enum class Action { start, abort } action = Action::start;
};

struct RegisterPointsCommand {
  kinematics::Vector3 p0, p1, p2;
  std::optional<double> reference_length;
};

/// Issued by the gateway when a client connection goes away.
struct ClientLostCommand {};

struct ClearSceneCommand {};

using CommandBody = std::variant<CtrlPoseCommand, ModeSwitchCommand, TeachCommand, TaskSubmitCommand, TaskControlCommand,
                                 RegisterPointsCommand, ClientLostCommand, ClearSceneCommand>;

struct Command {
  ClientId client = kLocalClient;
  CommandBody body;
};

}  // namespace cobotpbd::taskflow
