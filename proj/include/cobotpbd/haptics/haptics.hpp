#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cobotpbd/error.hpp"
#include "cobotpbd/kinematics/pose_json.hpp"

namespace cobotpbd::haptics {

using kinematics::Vector3;
using json = nlohmann::json;
using Vector2 = Eigen::Vector2d;

enum class Region { fingertip, palm, edge };

inline const char* to_string(Region r) {
  switch (r) {
    case Region::fingertip: return "fingertip";
    case Region::palm: return "palm";
    case Region::edge: return "edge";
  }
  return "palm";
}

inline Region region_from_string(const std::string& s) {
  if (s == "fingertip") return Region::fingertip;
  if (s == "palm") return Region::palm;
  if (s == "edge") return Region::edge;
  throw ConfigError("unknown actuator region '" + s + "'");
}

struct Actuator {
  std::string id;
  Vector2 position = Vector2::Zero();  // normalized hand coordinates
  Vector3 preferred_direction = Vector3::UnitZ();
  Region region = Region::palm;
};

struct ActuatorLayout {
  std::vector<Actuator> actuators;  // order defines tie-breaking

  void validate() const {
    std::set<std::string> ids;
    for (const auto& a : actuators) {
      if (!ids.insert(a.id).second) throw ConfigError("duplicate actuator id '" + a.id + "'");
      if (std::abs(a.preferred_direction.norm() - 1.0) > 1e-9) {
        throw ConfigError("actuator '" + a.id + "': preferred direction must be unit-norm");
      }
    }
  }

  std::size_t size() const { return actuators.size(); }
};

/// 16 actuators: two per fingertip, four on the palm, two on the hand edges.
/// Preferred directions cycle through ±x, ±y, ±z of the hand frame.
inline ActuatorLayout default_layout() {
  static const Vector3 dirs[6] = {Vector3::UnitX(), -Vector3::UnitX(), Vector3::UnitY(),
                                  -Vector3::UnitY(), Vector3::UnitZ(),  -Vector3::UnitZ()};
  ActuatorLayout layout;
  int k = 0;
  auto add = [&](std::string id, Vector2 pos, Region region) {
    layout.actuators.push_back({std::move(id), pos, dirs[k % 6], region});
    ++k;
  };
  const char* fingers[5] = {"thumb", "index", "middle", "ring", "little"};
  const double finger_u[5] = {0.08, 0.30, 0.50, 0.70, 0.88};
  const double finger_v[5] = {0.62, 0.94, 0.97, 0.94, 0.86};
  for (int f = 0; f < 5; ++f) {
    add(std::string(fingers[f]) + "_a", {finger_u[f] - 0.02, finger_v[f]}, Region::fingertip);
    add(std::string(fingers[f]) + "_b", {finger_u[f] + 0.02, finger_v[f]}, Region::fingertip);
  }
  add("palm_ul", {0.35, 0.45}, Region::palm);
  add("palm_ur", {0.65, 0.45}, Region::palm);
  add("palm_ll", {0.35, 0.22}, Region::palm);
  add("palm_lr", {0.65, 0.22}, Region::palm);
  add("edge_l", {0.02, 0.30}, Region::edge);
  add("edge_r", {0.98, 0.30}, Region::edge);
  return layout;
}

struct HapticFrame {
  std::map<std::string, double> intensities;
  double timestamp = 0.0;

  double at(const std::string& id) const {
    auto it = intensities.find(id);
    return it == intensities.end() ? 0.0 : it->second;
  }

  bool all_zero() const {
    return std::all_of(intensities.begin(), intensities.end(), [](const auto& kv) { return kv.second == 0.0; });
  }
};

inline HapticFrame zero_frame(const ActuatorLayout& layout, double timestamp = 0.0) {
  HapticFrame f;
  f.timestamp = timestamp;
  for (const auto& a : layout.actuators) f.intensities[a.id] = 0.0;
  return f;
}

/// intensity_i = clamp(‖f‖/f_max, 0, 1) · max(0, f̂ · d_i)
inline HapticFrame render_force_cue(const ActuatorLayout& layout, const Vector3& force_hand, double f_max,
                                    double timestamp = 0.0) {
  if (!(f_max > 0.0)) throw std::invalid_argument("render_force_cue: f_max must be positive");
  HapticFrame f = zero_frame(layout, timestamp);
  const double mag = force_hand.norm();
  if (!(mag > 0.0) || !std::isfinite(mag)) return f;
  const double level = std::clamp(mag / f_max, 0.0, 1.0);
  const Vector3 dir = force_hand / mag;
  for (const auto& a : layout.actuators) {
    f.intensities[a.id] = std::clamp(level * std::max(0.0, dir.dot(a.preferred_direction)), 0.0, 1.0);
  }
  return f;
}

/// Index of the strongest actuator; ties go to the earliest in layout order.
inline std::size_t argmax_actuator(const ActuatorLayout& layout, const HapticFrame& frame) {
  std::size_t best = 0;
  double best_v = -1.0;
  for (std::size_t i = 0; i < layout.actuators.size(); ++i) {
    const double v = frame.at(layout.actuators[i].id);
    if (v > best_v) {
      best_v = v;
      best = i;
    }
  }
  return best;
}

/// Perceived intensity at j = max_i intensity_i · exp(−‖pos_j − pos_i‖ / r).
inline HapticFrame isolate_crosstalk(const ActuatorLayout& layout, const HapticFrame& frame, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("isolate_crosstalk: radius must be positive");
  HapticFrame out;
  out.timestamp = frame.timestamp;
  for (const auto& target : layout.actuators) {
    double perceived = 0.0;
    for (const auto& source : layout.actuators) {
      const double d = (target.position - source.position).norm();
      const double coupling = d == 0.0 ? 1.0 : std::exp(-d / radius);
      perceived = std::max(perceived, frame.at(source.id) * coupling);
    }
    out.intensities[target.id] = perceived;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedded patterns

struct Pattern {
  std::string name;
  double sample_rate = 100.0;  // Hz
  bool looping = false;
  /// Envelope per group: an actuator id, a region name, or "all".
  std::map<std::string, std::vector<double>> envelopes;

  std::size_t samples() const {
    std::size_t n = 0;
    for (const auto& [g, e] : envelopes) n = std::max(n, e.size());
    return n;
  }
  double duration() const { return static_cast<double>(samples()) / sample_rate; }

  void validate() const {
    if (!(sample_rate > 0.0)) throw PatternError("pattern '" + name + "': sample rate must be positive");
    for (const auto& [g, e] : envelopes) {
      for (double v : e) {
        if (!(v >= 0.0 && v <= 1.0)) throw PatternError("pattern '" + name + "': envelope samples must be in [0,1]");
      }
    }
  }
};

class PatternLibrary {
 public:
  void add(Pattern p) {
    p.validate();
    patterns_[p.name] = std::move(p);
  }

  bool contains(const std::string& name) const { return patterns_.count(name) > 0; }
  const Pattern& get(const std::string& name) const {
    auto it = patterns_.find(name);
    if (it == patterns_.end()) throw PatternError("unknown haptic pattern '" + name + "'");
    return it->second;
  }
  const std::map<std::string, Pattern>& patterns() const { return patterns_; }

 private:
  std::map<std::string, Pattern> patterns_;
};

inline PatternLibrary default_patterns() {
  PatternLibrary lib;
  Pattern ramp{"ramp", 100.0, false, {}};
  std::vector<double> up(50);
  for (std::size_t i = 0; i < up.size(); ++i) up[i] = static_cast<double>(i) / static_cast<double>(up.size() - 1);
  ramp.envelopes["all"] = up;
  lib.add(ramp);

  Pattern pulse{"contact_pulse", 100.0, false, {}};
  pulse.envelopes["fingertip"] = {1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  lib.add(pulse);

  Pattern heartbeat{"heartbeat", 50.0, true, {}};
  heartbeat.envelopes["palm"] = {0.8, 0.8, 0.0, 0.0, 0.6, 0.6, 0.0, 0.0, 0.0, 0.0,
                                 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  lib.add(heartbeat);

  Pattern alert{"alert", 50.0, true, {}};
  alert.envelopes["edge"] = {1.0, 1.0, 1.0, 0.0, 0.0, 0.0};
  lib.add(alert);
  return lib;
}

/// Zero-order hold sample at time t. One-shot patterns are silent past
/// their duration; looping ones wrap.
inline HapticFrame play_pattern(const PatternLibrary& lib, const ActuatorLayout& layout, const std::string& name,
                                double t) {
  const Pattern& p = lib.get(name);
  HapticFrame f = zero_frame(layout, t);
  const double duration = p.duration();
  if (t < 0.0 || duration <= 0.0) return f;
  double local = t;
  if (local >= duration) {
    if (!p.looping) return f;
    local = std::fmod(local, duration);
  }
  const auto index = static_cast<std::size_t>(std::floor(local * p.sample_rate + 1e-9));
  auto sample = [&](const std::string& group) -> std::optional<double> {
    auto it = p.envelopes.find(group);
    if (it == p.envelopes.end()) return std::nullopt;
    return index < it->second.size() ? it->second[index] : 0.0;
  };
  for (const auto& a : layout.actuators) {
    if (auto v = sample(a.id)) {
      f.intensities[a.id] = *v;
    } else if (auto v2 = sample(to_string(a.region))) {
      f.intensities[a.id] = *v2;
    } else if (auto v3 = sample("all")) {
      f.intensities[a.id] = *v3;
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// JSON

inline ActuatorLayout layout_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("actuators") || !doc["actuators"].is_array()) {
    throw ConfigError("haptic layout: missing 'actuators' array");
  }
  ActuatorLayout layout;
  for (const auto& a : doc["actuators"]) {
    Actuator act;
    try {
      act.id = a.at("id").get<std::string>();
      const auto& pos = a.at("position");
      act.position = Vector2(pos.at(0).get<double>(), pos.at(1).get<double>());
      act.region = region_from_string(a.value("region", "palm"));
    } catch (const json::exception& e) {
      throw ConfigError(std::string("haptic layout actuator: ") + e.what());
    }
    act.preferred_direction = kinematics::vec3_from_json(a.at("preferred_direction"), act.id + ".preferred_direction");
    layout.actuators.push_back(std::move(act));
  }
  layout.validate();
  return layout;
}

inline json layout_to_json(const ActuatorLayout& layout) {
  json arr = json::array();
  for (const auto& a : layout.actuators) {
    arr.push_back({{"id", a.id},
                   {"position", {a.position.x(), a.position.y()}},
                   {"preferred_direction", kinematics::vec3_to_json(a.preferred_direction)},
                   {"region", to_string(a.region)}});
  }
  return {{"actuators", arr}};
}

inline PatternLibrary patterns_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("patterns") || !doc["patterns"].is_array()) {
    throw ConfigError("pattern file: missing 'patterns' array");
  }
  PatternLibrary lib;
  for (const auto& pj : doc["patterns"]) {
    Pattern p;
    try {
      p.name = pj.at("name").get<std::string>();
      p.sample_rate = pj.value("sample_rate_hz", 100.0);
      p.looping = pj.value("looping", false);
      for (const auto& [group, env] : pj.at("envelopes").items()) {
        p.envelopes[group] = env.get<std::vector<double>>();
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string("pattern file: ") + e.what());
    }
    lib.add(std::move(p));
  }
  return lib;
}

inline json patterns_to_json(const PatternLibrary& lib) {
  json arr = json::array();
  for (const auto& [name, p] : lib.patterns()) {
    arr.push_back({{"name", p.name}, {"sample_rate_hz", p.sample_rate}, {"looping", p.looping}, {"envelopes", p.envelopes}});
  }
  return {{"patterns", arr}};
}

inline json frame_to_json(const HapticFrame& f) { return {{"t", f.timestamp}, {"intensities", f.intensities}}; }

inline HapticFrame frame_from_json(const json& j) {
  HapticFrame f;
  f.timestamp = j.value("t", 0.0);
  f.intensities = j.at("intensities").get<std::map<std::string, double>>();
  for (const auto& [id, v] : f.intensities) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("haptic frame: intensity of '" + id + "' outside [0,1]");
  }
  return f;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace cobotpbd::haptics
