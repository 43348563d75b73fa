#pragma once

#include <json.hpp>

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "cobotpbd/error.hpp"
#include "cobotpbd/kinematics/pose.hpp"
#include "cobotpbd/kinematics/pose_json.hpp"

namespace cobotpbd::scene {

using kinematics::Pose6D;
using json = nlohmann::json;

struct Detection {
  std::string object_id;
  std::string class_id;
  Pose6D pose_camera;  // object in the camera frame
  double timestamp = 0.0;
};

enum class Visibility { visible, remembered };

inline const char* to_string(Visibility v) { return v == Visibility::visible ? "visible" : "remembered"; }

struct SceneObject {
  std::string object_id;
  std::string class_id;
  Pose6D pose_world;
  double last_seen = 0.0;
  Visibility status = Visibility::visible;
};

/// Last-known 6D poses of every object ever detected. Objects are never
/// dropped by staleness, only marked remembered.
class SceneMemory {
 public:
  explicit SceneMemory(double visibility_timeout = 1.0) : visibility_timeout_(visibility_timeout) {}

  double visibility_timeout() const { return visibility_timeout_; }
  const std::map<std::string, SceneObject>& objects() const { return objects_; }
  bool contains(const std::string& id) const { return objects_.count(id) > 0; }
  bool empty() const { return objects_.empty(); }

  /// Drops every object; the only path by which memory forgets.
  void clear() { objects_.clear(); }

  void refresh_status(double now) {
    for (auto& [id, obj] : objects_) obj.status = status_at(obj, now);
  }

  Visibility status_at(const SceneObject& obj, double now) const {
    return (now - obj.last_seen) > visibility_timeout_ ? Visibility::remembered : Visibility::visible;
  }

  /// Upsert each detection at camera_pose_world ∘ pose_camera (latest wins).
  void apply(const std::vector<Detection>& detections, const Pose6D& camera_pose_world, double now) {
    for (const auto& d : detections) {
      SceneObject& obj = objects_[d.object_id];
      obj.object_id = d.object_id;
      if (!d.class_id.empty() || obj.class_id.empty()) obj.class_id = d.class_id;
      obj.pose_world = camera_pose_world * d.pose_camera;
      obj.last_seen = now;
    }
    refresh_status(now);
  }

  /// Remembered objects are returned too, so primitives can target them.
  SceneObject query(const std::string& id, double now) const {
    auto it = objects_.find(id);
    if (it == objects_.end()) throw NotFoundError("object '" + id + "' not in scene memory");
    SceneObject out = it->second;
    out.status = status_at(out, now);
    return out;
  }

  /// pose_world(id) ∘ local
  Pose6D object_frame_to_world(const std::string& id, const Pose6D& local, double now) const {
    return query(id, now).pose_world * local;
  }

  std::vector<std::string> ids_of_class(const std::string& class_id) const {
    std::vector<std::string> ids;
    for (const auto& [id, obj] : objects_) {
      if (obj.class_id == class_id) ids.push_back(id);
    }
    return ids;
  }

  bool operator==(const SceneMemory& other) const {
    if (objects_.size() != other.objects_.size()) return false;
    for (const auto& [id, a] : objects_) {
      auto it = other.objects_.find(id);
      if (it == other.objects_.end()) return false;
      const SceneObject& b = it->second;
      if (a.class_id != b.class_id || a.last_seen != b.last_seen || a.status != b.status) return false;
      if (a.pose_world.translation() != b.pose_world.translation() ||
          a.pose_world.rotation().coeffs() != b.pose_world.rotation().coeffs()) {
        return false;
      }
    }
    return true;
  }

 private:
  double visibility_timeout_;
  std::map<std::string, SceneObject> objects_;
};

/// Functional form used by tests and by the engine's perception stage.
inline SceneMemory apply_detections(SceneMemory mem, const std::vector<Detection>& detections,
                                    const Pose6D& camera_pose_world, double now) {
  mem.apply(detections, camera_pose_world, now);
  return mem;
}

inline SceneObject query_object(const SceneMemory& mem, const std::string& id, double now) { return mem.query(id, now); }

inline Pose6D object_frame_to_world(const SceneMemory& mem, const std::string& id, const Pose6D& local, double now) {
  return mem.object_frame_to_world(id, local, now);
}

// ---------------------------------------------------------------------------
// Detection replay files: one {"t", "id", "class", "pose_camera"} per line.

inline Detection detection_from_json(const json& j) {
  Detection d;
  try {
    d.timestamp = j.at("t").get<double>();
    d.object_id = j.at("id").get<std::string>();
    d.class_id = j.value("class", "");
    d.pose_camera = kinematics::pose_from_json(j.at("pose_camera"), "pose_camera");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("detection: ") + e.what());
  }
  return d;
}

inline json detection_to_json(const Detection& d) {
  return {{"t", d.timestamp}, {"id", d.object_id}, {"class", d.class_id},
          {"pose_camera", kinematics::pose_to_json(d.pose_camera)}};
}

/// Parses JSON Lines; blank lines are skipped. Timestamps must not decrease.
inline std::vector<Detection> parse_detection_replay(std::istream& in, const std::string& source = "replay") {
  std::vector<Detection> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(detection_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (out.size() > 1 && out.back().timestamp < out[out.size() - 2].timestamp) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": timestamps must be non-decreasing");
    }
  }
  return out;
}

inline std::vector<Detection> load_detection_replay(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open detection replay: " + path);
  return parse_detection_replay(in, path);
}

/// Feeds a recorded detection stream into the engine by timestamp.
class DetectionReplay {
 public:
  DetectionReplay() = default;
  explicit DetectionReplay(std::vector<Detection> detections) : detections_(std::move(detections)) {}

  /// Detections with timestamp <= now not yet delivered, restamped to now.
  std::vector<Detection> poll(double now) {
    std::vector<Detection> out;
    while (next_ < detections_.size() && detections_[next_].timestamp <= now + 1e-9) {
      out.push_back(detections_[next_++]);
      out.back().timestamp = now;
    }
    return out;
  }

  bool exhausted() const { return next_ >= detections_.size(); }
  const std::vector<Detection>& detections() const { return detections_; }

 private:
  std::vector<Detection> detections_;
  std::size_t next_ = 0;
};

}  // namespace cobotpbd::scene
