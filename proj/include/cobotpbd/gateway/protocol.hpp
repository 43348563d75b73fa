#pragma once

#include <json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cobotpbd/diagnostics.hpp"
#include "cobotpbd/error.hpp"
#include "cobotpbd/kinematics/pose_json.hpp"
#include "cobotpbd/taskflow/commands.hpp"

namespace cobotpbd::gateway {

using json = nlohmann::json;

enum class MessageType {
  ctrl_pose,
  mode_switch,
  teach_capture,
  task_submit,
  task_control,
  state_snapshot,
  haptic_frame,
  diagnostics,
  register_points,
};

inline constexpr std::array<MessageType, 9> kAllMessageTypes{
    MessageType::ctrl_pose,    MessageType::mode_switch,    MessageType::teach_capture,
    MessageType::task_submit,  MessageType::task_control,   MessageType::state_snapshot,
    MessageType::haptic_frame, MessageType::diagnostics,    MessageType::register_points};

inline const char* to_string(MessageType t) {
  switch (t) {
    case MessageType::ctrl_pose: return "ctrl_pose";
    case MessageType::mode_switch: return "mode_switch";
    case MessageType::teach_capture: return "teach_capture";
    case MessageType::task_submit: return "task_submit";
    case MessageType::task_control: return "task_control";
    case MessageType::state_snapshot: return "state_snapshot";
    case MessageType::haptic_frame: return "haptic_frame";
    case MessageType::diagnostics: return "diagnostics";
    case MessageType::register_points: return "register_points";
  }
  return "diagnostics";
}

inline std::optional<MessageType> message_type_from_string(std::string_view s) {
  for (auto t : kAllMessageTypes) {
    if (s == to_string(t)) return t;
  }
  return std::nullopt;
}

/// Client-to-engine types; the rest only flow from the engine outward.
inline bool is_inbound(MessageType t) {
  return t != MessageType::state_snapshot && t != MessageType::haptic_frame && t != MessageType::diagnostics;
}

struct Message {
  MessageType type = MessageType::diagnostics;
  std::uint64_t seq = 0;
  json payload = json::object();

  bool operator==(const Message& o) const { return type == o.type && seq == o.seq && payload == o.payload; }
};

/// One line of NDJSON, newline included.
inline std::string encode(const Message& m) {
  json j{{"type", to_string(m.type)}, {"seq", m.seq}, {"payload", m.payload}};
  return j.dump() + "\n";
}

namespace detail {

inline Diagnostic wire_error(std::string code, std::string path, std::string message) {
  return Diagnostic{Severity::error, std::move(code), std::move(path), std::move(message), 0};
}

inline bool is_vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) return false;
  for (const auto& v : j) {
    if (!v.is_number()) return false;
  }
  return true;
}

inline std::optional<Diagnostic> check_payload(MessageType type, const json& p) {
  auto bad = [](std::string path, std::string msg) { return wire_error("invalid-payload", std::move(path), std::move(msg)); };
  auto need_string = [&](const char* key, std::initializer_list<const char*> allowed) -> std::optional<Diagnostic> {
    if (!p.contains(key) || !p[key].is_string()) return bad(std::string("/payload/") + key, std::string("'") + key + "' must be a string");
    if (allowed.size() == 0) return std::nullopt;
    for (const char* a : allowed) {
      if (p[key].get<std::string>() == a) return std::nullopt;
    }
    return bad(std::string("/payload/") + key, "unsupported value '" + p[key].get<std::string>() + "'");
  };
  switch (type) {
    case MessageType::ctrl_pose:
      if (!p.contains("pose") || !kinematics::is_pose_json(p["pose"])) return bad("/payload/pose", "'pose' must be {xyz, quat_wxyz}");
      return std::nullopt;
    case MessageType::mode_switch: return need_string("source", {"idle", "teleop", "autonomous"});
    case MessageType::teach_capture: {
      if (auto d = need_string("action", {"start", "capture", "cancel"})) return d;
      const auto action = p["action"].get<std::string>();
      if (action == "start") {
        if (auto d = need_string("primitive", {"grasp", "place"})) return d;
        if (auto d = need_string("object_class", {})) return d;
      } else if (action == "capture") {
        if (auto d = need_string("phase", {})) return d;
      }
      for (const char* key : {"object_name", "object_id", "step_id"}) {
        if (p.contains(key) && !p[key].is_string()) return bad(std::string("/payload/") + key, "must be a string");
      }
      return std::nullopt;
    }
    case MessageType::task_submit:
      if (!p.contains("task") || !p["task"].is_object()) return bad("/payload/task", "'task' must be an object");
      return std::nullopt;
    case MessageType::task_control: return need_string("action", {"start", "abort"});
    case MessageType::register_points:
      for (const char* key : {"p0", "p1", "p2"}) {
        if (!p.contains(key) || !is_vec3(p[key])) return bad(std::string("/payload/") + key, "must be [x, y, z]");
      }
      if (p.contains("reference_length") && !p["reference_length"].is_number()) {
        return bad("/payload/reference_length", "must be a number");
      }
      return std::nullopt;
    case MessageType::diagnostics:
      if (!p.contains("diagnostics") || !p["diagnostics"].is_array()) return bad("/payload/diagnostics", "must be an array");
      return std::nullopt;
    case MessageType::state_snapshot:
    case MessageType::haptic_frame: return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace detail

/// Either a message or the reason this line was not one.
using DecodeResult = std::variant<Message, Diagnostic>;

/// Decodes a single line (trailing newline optional). Never throws.
inline DecodeResult decode(std::string_view line) {
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
  json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded()) return detail::wire_error("malformed-json", "", "line is not valid JSON");
  if (!j.is_object()) return detail::wire_error("invalid-message", "", "message must be a JSON object");
  if (!j.contains("type") || !j["type"].is_string()) return detail::wire_error("invalid-message", "/type", "missing 'type'");
  const auto type = message_type_from_string(j["type"].get<std::string>());
  if (!type) return detail::wire_error("unknown-type", "/type", "unknown message type '" + j["type"].get<std::string>() + "'");
  if (!j.contains("seq") || !j["seq"].is_number_unsigned()) {
    return detail::wire_error("invalid-message", "/seq", "'seq' must be a non-negative integer");
  }
  Message m;
  m.type = *type;
  m.seq = j["seq"].get<std::uint64_t>();
  m.payload = j.contains("payload") ? j["payload"] : json::object();
  if (!m.payload.is_object()) return detail::wire_error("invalid-payload", "/payload", "'payload' must be an object");
  if (auto d = detail::check_payload(m.type, m.payload)) return *d;
  return m;
}

/// Splits a byte stream into lines and decodes each. Partial lines are kept
/// until their newline arrives; over-long lines are discarded with a diagnostic.
class LineDecoder {
 public:
  explicit LineDecoder(std::size_t max_line_bytes = 1 << 20) : max_line_(max_line_bytes) {}

  std::vector<DecodeResult> feed(std::string_view bytes) {
    std::vector<DecodeResult> out;
    for (char c : bytes) {
      if (c == '\n') {
        if (overflow_) {
          out.emplace_back(detail::wire_error("line-too-long", "", "line exceeds " + std::to_string(max_line_) + " bytes"));
        } else if (buffer_.find_first_not_of(" \t\r") != std::string::npos) {
          out.push_back(decode(buffer_));
        }
        buffer_.clear();
        overflow_ = false;
        continue;
      }
      if (overflow_) continue;
      if (buffer_.size() >= max_line_) {
        overflow_ = true;
        buffer_.clear();
        continue;
      }
      buffer_.push_back(c);
    }
    return out;
  }

  std::size_t pending_bytes() const { return buffer_.size(); }

 private:
  std::size_t max_line_;
  std::string buffer_;
  bool overflow_ = false;
};

/// Per-sender sequence check: a warning for each gap or regression.
class SeqTracker {
 public:
  std::optional<Diagnostic> observe(std::uint64_t seq) {
    std::optional<Diagnostic> d;
    if (last_ && seq != *last_ + 1) {
      const bool gap = seq > *last_;
      d = Diagnostic{Severity::warning, gap ? "seq-gap" : "seq-regression", "/seq",
                     gap ? "missing " + std::to_string(seq - *last_ - 1) + " message(s) before seq " + std::to_string(seq)
                         : "seq " + std::to_string(seq) + " not above previous " + std::to_string(*last_),
                     0};
    }
    if (!last_ || seq > *last_) last_ = seq;
    return d;
  }

  std::optional<std::uint64_t> last() const { return last_; }

 private:
  std::optional<std::uint64_t> last_;
};

// ---------------------------------------------------------------------------
// Message <-> engine command

/// Converts an inbound message to an engine command. Throws ConfigError for
/// outbound-only types.
inline taskflow::CommandBody to_command(const Message& m) {
  using namespace taskflow;
  const json& p = m.payload;
  switch (m.type) {
    case MessageType::ctrl_pose: return CtrlPoseCommand{m.seq, kinematics::pose_from_json(p.at("pose"))};
    case MessageType::mode_switch: return ModeSwitchCommand{*control_source_from_string(p.at("source").get<std::string>())};
    case MessageType::teach_capture: {
      TeachCommand c;
      const auto action = p.at("action").get<std::string>();
      c.action = action == "start" ? TeachCommand::Action::start
                 : action == "capture" ? TeachCommand::Action::capture
                                       : TeachCommand::Action::cancel;
      c.kind = p.value("primitive", "grasp");
      c.object_class = p.value("object_class", "");
      c.object_name = p.value("object_name", "");
      c.object_id = p.value("object_id", "");
      c.phase = p.value("phase", "");
      c.step_id = p.value("step_id", "");
      return c;
    }
    case MessageType::task_submit: return TaskSubmitCommand{p.at("task")};
    case MessageType::task_control:
      return TaskControlCommand{p.at("action").get<std::string>() == "start" ? TaskControlCommand::Action::start
                                                                             : TaskControlCommand::Action::abort};
    case MessageType::register_points: {
      RegisterPointsCommand c;
      c.p0 = kinematics::vec3_from_json(p.at("p0"));
      c.p1 = kinematics::vec3_from_json(p.at("p1"));
      c.p2 = kinematics::vec3_from_json(p.at("p2"));
      if (p.contains("reference_length")) c.reference_length = p["reference_length"].get<double>();
      return c;
    }
    default: throw ConfigError(std::string("message type '") + to_string(m.type) + "' is not a client command");
  }
}

inline Message diagnostics_message(std::uint64_t seq, const std::vector<Diagnostic>& ds) {
  json arr = json::array();
  for (const auto& d : ds) arr.push_back(diagnostic_to_json(d));
  return Message{MessageType::diagnostics, seq, {{"diagnostics", arr}}};
}

}  // namespace cobotpbd::gateway
