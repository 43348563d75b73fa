#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "cobotpbd/scene/scene_memory.hpp"
#include "cobotpbd/sim/sim_world.hpp"

namespace cobotpbd::sim {

/// Interval during which an object is hidden from the camera.
struct Occlusion {
  std::string object_id;
  double from = 0.0;
  double to = 0.0;

  bool covers(const std::string& id, double t) const { return id == object_id && t >= from && t < to; }
};

struct DetectorConfig {
  double rate_hz = 30.0;
  double fov_half_angle = std::numbers::pi;  // π: everything in range is visible
  double max_range = std::numeric_limits<double>::infinity();
  double position_noise = 0.0;  // m, isotropic Gaussian
  std::uint64_t seed = 0;
  std::vector<Occlusion> occlusions;
};

/// Stand-in for the fiducial detector: reports the true pose of every free or
/// held object inside the camera cone, in the camera frame.
class SimulatedDetector {
 public:
  explicit SimulatedDetector(DetectorConfig cfg = {}) : cfg_(std::move(cfg)), rng_(cfg_.seed) {}

  const DetectorConfig& config() const { return cfg_; }

  bool visible(const SimWorld& world, const SimObject& obj, double now) const {
    for (const auto& o : cfg_.occlusions) {
      if (o.covers(obj.id, now)) return false;
    }
    const Pose6D& cam = world.camera_pose();
    const Vector3 rel = obj.pose_world.translation() - cam.translation();
    const double range = rel.norm();
    if (range > cfg_.max_range) return false;
    if (range < 1e-9 || cfg_.fov_half_angle >= std::numbers::pi) return true;
    const Vector3 axis = cam.rotate(Vector3::UnitZ());
    const double angle = std::acos(std::clamp(axis.dot(rel / range), -1.0, 1.0));
    return angle <= cfg_.fov_half_angle;
  }

  /// Runs a detection cycle when one is due (or forced).
  std::vector<scene::Detection> poll(const SimWorld& world, double now, bool force = false) {
    std::vector<scene::Detection> out;
    if (!force && now + 1e-12 < next_time_) return out;
    next_time_ = now + 1.0 / cfg_.rate_hz;
    std::normal_distribution<double> noise(0.0, cfg_.position_noise);
    const Pose6D cam_inv = world.camera_pose().inverse();
    for (const auto& [id, obj] : world.objects()) {
      if (!visible(world, obj, now)) continue;
      Pose6D truth = obj.pose_world;
      if (cfg_.position_noise > 0.0) {
        truth = Pose6D(truth.rotation(), truth.translation() + Vector3(noise(rng_), noise(rng_), noise(rng_)));
      }
      out.push_back({id, obj.class_id, cam_inv * truth, now});
    }
    return out;
  }

 private:
  DetectorConfig cfg_;
  std::mt19937_64 rng_;
  double next_time_ = 0.0;
};

inline json detector_config_to_json(const DetectorConfig& c) {
  json occ = json::array();
  for (const auto& o : c.occlusions) occ.push_back({{"id", o.object_id}, {"from", o.from}, {"to", o.to}});
  json j{{"rate_hz", c.rate_hz}, {"fov_half_angle", c.fov_half_angle}, {"position_noise", c.position_noise},
         {"seed", c.seed}, {"occlusions", occ}};
  if (std::isfinite(c.max_range)) j["max_range"] = c.max_range;
  return j;
}

inline DetectorConfig detector_config_from_json(const json& j) {
  DetectorConfig c;
  try {
    c.rate_hz = j.value("rate_hz", c.rate_hz);
    c.fov_half_angle = j.value("fov_half_angle", c.fov_half_angle);
    c.max_range = j.value("max_range", c.max_range);
    c.position_noise = j.value("position_noise", c.position_noise);
    c.seed = j.value("seed", c.seed);
    for (const auto& o : j.value("occlusions", json::array())) {
      c.occlusions.push_back({o.at("id").get<std::string>(), o.at("from").get<double>(), o.at("to").get<double>()});
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("detector config: ") + e.what());
  }
  if (!(c.rate_hz > 0.0)) throw ConfigError("detector config: rate_hz must be positive");
  return c;
}

}  // namespace cobotpbd::sim
