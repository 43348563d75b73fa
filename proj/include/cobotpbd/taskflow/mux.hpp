#pragma once

#include <optional>
#include <string>

namespace cobotpbd::taskflow {

enum class ControlSource { idle, teleop, autonomous };

inline const char* to_string(ControlSource s) {
  switch (s) {
    case ControlSource::idle: return "idle";
    case ControlSource::teleop: return "teleop";
    case ControlSource::autonomous: return "autonomous";
  }
  return "idle";
}

inline std::optional<ControlSource> control_source_from_string(const std::string& s) {
  if (s == "idle") return ControlSource::idle;
  if (s == "teleop") return ControlSource::teleop;
  if (s == "autonomous") return ControlSource::autonomous;
  return std::nullopt;
}

struct MuxState {
  ControlSource active_source = ControlSource::idle;
};

/// Effects the engine must apply after a switch.
struct MuxTransition {
  MuxState state;
  bool changed = false;
  bool reset_controller = false;
  bool requires_teleop_activation = false;
};

inline MuxTransition mux_switch(const MuxState& state, ControlSource request) {
  MuxTransition t;
  t.state.active_source = request;
  if (request == state.active_source) return t;
  t.changed = true;
  t.reset_controller = true;
  t.requires_teleop_activation = request == ControlSource::teleop;
  return t;
}

}  // namespace cobotpbd::taskflow
