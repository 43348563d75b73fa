#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "../support/oracles.hpp"
#include "cobotpbd/controllers/pid.hpp"
#include "cobotpbd/controllers/teleop.hpp"
#include "cobotpbd/haptics/haptics.hpp"
#include "cobotpbd/scene/scene_memory.hpp"
#include "cobotpbd/sim/detector.hpp"
#include "cobotpbd/sim/sim_world.hpp"

using namespace cobotpbd;
using namespace cobotpbd::controllers;
using kinematics::Pose6D;
using kinematics::Twist;
using kinematics::Vector3;
using kinematics::Vector6;

namespace {

constexpr double kPi = std::numbers::pi;

Vector6 vec6(double a, double b, double c, double d, double e, double f) {
  Vector6 v;
  v << a, b, c, d, e, f;
  return v;
}

void expect_pose_near(const Pose6D& a, const Pose6D& b, double tol) {
  EXPECT_LE(kinematics::translation_distance(a, b), tol);
  EXPECT_LE((a.rotation_matrix() - b.rotation_matrix()).cwiseAbs().maxCoeff(), tol);
}

}  // namespace

// ---------------------------------------------------------------------------
// Pose error and PID

TEST(PoseError, ZeroAtTarget) {
  std::mt19937_64 rng(1);
  const Pose6D p = oracle::random_pose(rng);
  EXPECT_LT(pose_error(p, p).norm(), 1e-15);
}

TEST(PoseError, TranslationOffset) {
  const Pose6D x = Pose6D::rot_z(0.3);
  const Pose6D xc(x.rotation(), x.translation() + Vector3(0.1, 0, 0));
  EXPECT_LT((pose_error(xc, x) - vec6(0.1, 0, 0, 0, 0, 0)).norm(), 1e-15);
}

TEST(PoseError, QuarterTurnAboutZ) {
  const Pose6D x = Pose6D::from_translation(0.2, 0.1, 0.3);
  const Pose6D xc = Pose6D(Pose6D::rot_z(kPi / 2).rotation(), x.translation());
  EXPECT_LT((pose_error(xc, x) - vec6(0, 0, 0, 0, 0, kPi / 2)).norm(), 1e-12);
}

TEST(Pid, ProportionalOnly) {
  auto [twist, st] = pid_step({}, vec6(0.1, 0, 0, 0, 0, 0), 0.01, GainSet::uniform(2, 0, 0));
  EXPECT_LT((twist.linear - Vector3(0.2, 0, 0)).norm(), 1e-15);
  EXPECT_TRUE(twist.angular.isZero());
}

TEST(Pid, IntegralIsRectangular) {
  const GainSet g = GainSet::uniform(0, 1, 0);
  const PidLimits lim{.windup = 10.0, .max_linear = 10.0, .max_angular = 10.0};
  auto [t1, s1] = pid_step({}, vec6(0.1, 0, 0, 0, 0, 0), 0.5, g, lim);
  auto [t2, s2] = pid_step(s1, vec6(0.1, 0, 0, 0, 0, 0), 0.5, g, lim);
  EXPECT_NEAR(t1.linear.x(), 0.05, 1e-15);
  EXPECT_NEAR(t2.linear.x(), 0.1, 1e-15);
}

TEST(Pid, DerivativeIsBackwardDifference) {
  const GainSet g = GainSet::uniform(0, 0, 1);
  const PidLimits lim{.windup = 10.0, .max_linear = 10.0, .max_angular = 10.0};
  auto [t1, s1] = pid_step({}, Vector6::Zero(), 0.1, g, lim);
  auto [t2, s2] = pid_step(s1, vec6(0.1, 0, 0, 0, 0, 0), 0.1, g, lim);
  EXPECT_EQ(t1.linear.x(), 0.0);
  EXPECT_NEAR(t2.linear.x(), 1.0, 1e-12);
}

TEST(Pid, IntegralClampedToWindup) {
  const GainSet g = GainSet::uniform(0, 1, 0);
  PidState s;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int i = 0; i < 1000; ++i) {
    s = pid_step(s, vec6(u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)), 0.05, g).second;
    EXPECT_LE(s.integral.cwiseAbs().maxCoeff(), 0.5);
  }
}

TEST(Pid, TwistCapped) {
  auto [t, s] = pid_step({}, vec6(10, 10, 0, 5, 0, 0), 0.01, GainSet::uniform(2, 0, 0));
  EXPECT_NEAR(t.linear.norm(), 0.25, 1e-12);
  EXPECT_NEAR(t.angular.norm(), 1.0, 1e-12);
}

TEST(Pid, RejectsNonPositiveDt) {
  EXPECT_THROW(pid_step({}, Vector6::Zero(), 0.0, GainSet::uniform(1, 0, 0)), std::invalid_argument);
}

TEST(GainSchedule, ThresholdRule) {
  const SchedulerConfig cfg;
  EXPECT_EQ(select_mode(vec6(0.2, 0, 0, 0, 0, 0), cfg, GainMode::fast), GainMode::slow);
  EXPECT_EQ(select_mode(vec6(0.01, 0, 0, 0, 0, 0), cfg, GainMode::slow), GainMode::fast);
  EXPECT_EQ(select_mode(vec6(0.05, 0, 0, 0, 0, 0), cfg, GainMode::slow), GainMode::slow);
  EXPECT_EQ(select_mode(vec6(0.05, 0, 0, 0, 0, 0), cfg, GainMode::fast), GainMode::fast);
}

TEST(GainSchedule, MixedNorm) {
  EXPECT_NEAR(weighted_error_norm(vec6(0.03, 0.04, 0, 0, 0, 0.2)), 0.05 + 0.02, 1e-15);
}

TEST(GainSchedule, ModeSwitchResetsIntegral) {
  ControllerConfig cfg;
  cfg.scheduler.slow = GainSet::uniform(0.5, 1.0, 0);
  cfg.scheduler.fast = GainSet::uniform(2.0, 1.0, 0);
  TaskSpaceController c(cfg);
  const Pose6D current = Pose6D::identity();
  auto far = c.step(Pose6D::from_translation(0.2, 0, 0), current, 0.01);
  EXPECT_EQ(far.mode, GainMode::slow);
  EXPECT_GT(c.state().integral.norm(), 0.0);
  auto near = c.step(Pose6D::from_translation(0.01, 0, 0), current, 0.01);
  EXPECT_TRUE(near.switched);
  EXPECT_EQ(near.mode, GainMode::fast);
  EXPECT_NEAR(c.state().integral.x(), 0.01 * 0.01, 1e-15);
}

TEST(ControllerConfig, JsonRoundTripAndValidation) {
  ControllerConfig cfg;
  cfg.scheduler.threshold = 0.07;
  cfg.limits.max_linear = 0.3;
  const auto back = controller_config_from_json(controller_config_to_json(cfg));
  EXPECT_EQ(back.scheduler.threshold, 0.07);
  EXPECT_EQ(back.limits.max_linear, 0.3);
  json bad = controller_config_to_json(cfg);
  bad["hysteresis_m"] = 0.5;
  EXPECT_THROW(controller_config_from_json(bad), ConfigError);
  bad = controller_config_to_json(cfg);
  bad["slow"]["kp"] = {1, 1, 1, 1, 1, -1};
  EXPECT_THROW(controller_config_from_json(bad), ConfigError);
}

// ---------------------------------------------------------------------------
// Teleoperation

TEST(Teleop, ActivationFixedPoint) {
  std::mt19937_64 rng(3);
  const Pose6D ee = oracle::random_pose(rng);
  const auto s = teleop_activate(ee, Pose6D::identity());
  expect_pose_near(teleop_target(s, Pose6D::identity()), ee, 1e-15);
}

TEST(Teleop, TranslationDeltaAddsInWorld) {
  std::mt19937_64 rng(4);
  const Pose6D ee = oracle::random_pose(rng);
  const Pose6D ctrl0 = oracle::random_pose(rng);
  const auto s = teleop_activate(ee, ctrl0);
  const Vector3 dt(0.01, -0.2, 0.05);
  const Pose6D target = teleop_target(s, Pose6D(ctrl0.rotation(), ctrl0.translation() + dt));
  EXPECT_LT((target.translation() - (ee.translation() + dt)).norm(), 1e-14);
  EXPECT_LT(kinematics::angular_distance(target, ee), 1e-12);
}

TEST(Teleop, RotationInPlace) {
  std::mt19937_64 rng(5);
  const Pose6D ee = oracle::random_pose(rng);
  const auto s = teleop_activate(ee, Pose6D::identity());
  const Pose6D target = teleop_target(s, Pose6D::rot_z(kPi / 2));
  const Eigen::Matrix3d expected = Eigen::AngleAxisd(kPi / 2, Vector3::UnitZ()).toRotationMatrix() * ee.rotation_matrix();
  EXPECT_LT((target.rotation_matrix() - expected).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((target.translation() - ee.translation()).norm(), 1e-15);
}

TEST(Teleop, CompositeMoveMatchesMatrixAlgebra) {
  std::mt19937_64 rng(6);
  const Pose6D ee = oracle::random_pose(rng);
  const Pose6D ctrl0 = oracle::random_pose(rng);
  const auto s = teleop_activate(ee, ctrl0);
  // world-frame delta: Δ = [R_z(45°) | (0, 0.1, 0)] applied to the controller about its own position
  const Eigen::Matrix3d rz = Eigen::AngleAxisd(kPi / 4, Vector3::UnitZ()).toRotationMatrix();
  const Eigen::Matrix3d r_ctrl = rz * ctrl0.rotation_matrix();
  const Vector3 t_ctrl = ctrl0.translation() + Vector3(0, 0.1, 0);
  const Pose6D ctrl1 = Pose6D::from_matrix(r_ctrl, t_ctrl);
  const Pose6D target = teleop_target(s, ctrl1);
  const Eigen::Matrix3d r_expected = r_ctrl * ctrl0.rotation_matrix().transpose() * ee.rotation_matrix();
  EXPECT_LT((target.rotation_matrix() - r_expected).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((target.translation() - (ee.translation() + Vector3(0, 0.1, 0))).norm(), 1e-14);
}

TEST(Teleop, PauseThenResumeAnchorsAtCurrentEe) {
  std::mt19937_64 rng(7);
  auto s = teleop_activate(oracle::random_pose(rng), oracle::random_pose(rng));
  s = teleop_pause(s);
  EXPECT_THROW(teleop_target(s, Pose6D::identity()), SessionError);
  const Pose6D ee_now = oracle::random_pose(rng);
  const Pose6D ctrl_now = oracle::random_pose(rng);
  s = teleop_activate(ee_now, ctrl_now);
  expect_pose_near(teleop_target(s, ctrl_now), ee_now, 1e-12);
}

TEST(Teleop, ToolFrameConvention) {
  std::mt19937_64 rng(8);
  const Pose6D ee = oracle::random_pose(rng);
  const Pose6D ctrl0 = oracle::random_pose(rng);
  const auto s = teleop_activate(ee, ctrl0, TeleopConvention::tool_frame);
  expect_pose_near(teleop_target(s, ctrl0), ee, 1e-12);
  const Pose6D ctrl1 = oracle::random_pose(rng);
  expect_pose_near(teleop_target(s, ctrl1), ctrl1 * ctrl0.inverse() * ee, 1e-12);
}

// ---------------------------------------------------------------------------
// Scene memory

TEST(SceneMemory, FirstDetectionIsVisible) {
  scene::SceneMemory mem(1.0);
  mem.apply({{"a", "tray", Pose6D::from_translation(0, 0, 0.5), 0.0}}, Pose6D::identity(), 0.0);
  const auto o = mem.query("a", 0.0);
  EXPECT_EQ(o.status, scene::Visibility::visible);
  EXPECT_NEAR(o.pose_world.translation().z(), 0.5, 1e-15);
}

TEST(SceneMemory, RedetectionUpdatesPoseAndTime) {
  scene::SceneMemory mem(1.0);
  mem.apply({{"a", "tray", Pose6D::identity(), 0.0}}, Pose6D::identity(), 0.0);
  mem.apply({{"a", "tray", Pose6D::from_translation(1, 0, 0), 2.0}}, Pose6D::identity(), 2.0);
  const auto o = mem.query("a", 2.0);
  EXPECT_NEAR(o.pose_world.translation().x(), 1.0, 1e-15);
  EXPECT_EQ(o.last_seen, 2.0);
}

TEST(SceneMemory, StaleObjectIsRememberedNotDropped) {
  scene::SceneMemory mem(1.0);
  const Pose6D p = Pose6D::from_translation(0.3, 0.2, 0.1);
  mem.apply({{"a", "tray", p, 0.0}}, Pose6D::identity(), 0.0);
  const auto o = mem.query("a", 100.0);
  EXPECT_EQ(o.status, scene::Visibility::remembered);
  expect_pose_near(o.pose_world, p, 0.0);
}

TEST(SceneMemory, UnknownIdNotFound) {
  scene::SceneMemory mem;
  EXPECT_THROW(mem.query("ghost", 0.0), NotFoundError);
}

TEST(SceneMemory, CameraFrameConversion) {
  std::mt19937_64 rng(9);
  const Pose6D cam = oracle::random_pose(rng);
  const Pose6D rel = oracle::random_pose(rng);
  const auto mem = scene::apply_detections(scene::SceneMemory{}, {{"a", "c", rel, 0.0}}, cam, 0.0);
  const Eigen::Matrix4d expected = oracle::to_matrix(cam) * oracle::to_matrix(rel);
  EXPECT_LT((oracle::to_matrix(mem.query("a", 0).pose_world) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SceneMemory, ObjectFrameToWorld) {
  scene::SceneMemory mem;
  mem.apply({{"a", "c", Pose6D::identity(), 0.0}, {"b", "c", Pose6D::rot_z(kPi / 2), 0.0}}, Pose6D::identity(), 0.0);
  expect_pose_near(mem.object_frame_to_world("a", Pose6D::identity(), 0), Pose6D::identity(), 0.0);
  expect_pose_near(mem.object_frame_to_world("a", Pose6D::from_translation(0, 0, 0.1), 0),
                   Pose6D::from_translation(0, 0, 0.1), 1e-15);
  EXPECT_LT((mem.object_frame_to_world("b", Pose6D::from_translation(0.1, 0, 0), 0).translation() - Vector3(0, 0.1, 0)).norm(),
            1e-15);
}

TEST(SceneMemory, ReplayParsingAndOrdering) {
  std::istringstream good(
      "{\"t\":0.0,\"id\":\"a\",\"class\":\"tray\",\"pose_camera\":{\"xyz\":[0,0,1],\"quat_wxyz\":[1,0,0,0]}}\n\n"
      "{\"t\":0.5,\"id\":\"b\",\"pose_camera\":{\"xyz\":[0,1,1]}}\n");
  const auto dets = scene::parse_detection_replay(good);
  ASSERT_EQ(dets.size(), 2u);
  EXPECT_EQ(dets[1].object_id, "b");
  scene::DetectionReplay replay(dets);
  EXPECT_EQ(replay.poll(0.1).size(), 1u);
  EXPECT_EQ(replay.poll(0.2).size(), 0u);
  const auto later = replay.poll(0.6);
  ASSERT_EQ(later.size(), 1u);
  EXPECT_EQ(later[0].timestamp, 0.6);
  EXPECT_TRUE(replay.exhausted());

  std::istringstream backwards(
      "{\"t\":1.0,\"id\":\"a\",\"pose_camera\":{}}\n{\"t\":0.5,\"id\":\"a\",\"pose_camera\":{}}\n");
  EXPECT_THROW(scene::parse_detection_replay(backwards), ConfigError);
  std::istringstream broken("{\"t\":1.0,\n");
  EXPECT_THROW(scene::parse_detection_replay(broken), ConfigError);
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

sim::SimWorld make_world() { return sim::SimWorld(kinematics::default_arm(), kinematics::default_home()); }

}  // namespace

TEST(Sim, ZeroVelocityOnlyAdvancesTime) {
  auto w = make_world();
  const Eigen::VectorXd q0 = w.joints().positions;
  const auto w2 = sim::step_sim(w, Eigen::VectorXd::Zero(7), 0.1);
  EXPECT_EQ(w2.joints().positions, q0);
  EXPECT_NEAR(w2.time(), 0.1, 1e-15);
}

TEST(Sim, EulerIntegration) {
  auto w = make_world();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(7);
  v[0] = 0.1;
  const double q0 = w.joints().positions[0];
  w.step(v, 0.1);
  EXPECT_NEAR(w.joints().positions[0], q0 + 0.01, 1e-15);
}

TEST(Sim, VelocityLimitClamp) {
  auto w = make_world();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(7);
  v[0] = 100.0;
  const double q0 = w.joints().positions[0];
  w.step(v, 0.01);
  EXPECT_NEAR(w.joints().positions[0] - q0, w.model().joint(0).velocity_limit * 0.01, 1e-15);
}

TEST(Sim, PositionLimitClamp) {
  auto w = make_world();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(7);
  v[0] = 2.0;
  for (int i = 0; i < 1000; ++i) w.step(v, 0.01);
  EXPECT_NEAR(w.joints().positions[0], w.model().joint(0).upper, 1e-15);
}

TEST(Sim, AttachedObjectMovesRigidlyWithEe) {
  auto w = make_world();
  const Pose6D ee0 = w.ee_pose();
  w.add_object({"box", "cube", ee0 * Pose6D::from_translation(0, 0, 0.02), Vector3(0.02, 0.02, 0.02), std::nullopt});
  w.attach("box");
  Eigen::VectorXd v = Eigen::VectorXd::Constant(7, 0.3);
  for (int i = 0; i < 50; ++i) w.step(v, 0.01);
  const Pose6D motion = w.ee_pose() * ee0.inverse();
  expect_pose_near(w.object("box").pose_world, motion * ee0 * Pose6D::from_translation(0, 0, 0.02), 1e-12);

  w.detach("box");
  const Pose6D frozen = w.object("box").pose_world;
  for (int i = 0; i < 50; ++i) w.step(-v, 0.01);
  expect_pose_near(w.object("box").pose_world, frozen, 0.0);
}

TEST(Sim, AttachBeyondToleranceFails) {
  auto w = make_world();
  const Pose6D ee = w.ee_pose();
  // box surface 50 mm from the ee point along world x
  w.add_object({"far", "cube", Pose6D::from_translation(ee.translation() + Vector3(0.07, 0, 0)), Vector3(0.02, 0.02, 0.02),
                std::nullopt});
  EXPECT_NEAR(w.grasp_separation("far"), 0.05, 1e-12);
  EXPECT_THROW(w.attach("far"), AttachError);
}

TEST(Sim, AttachToleranceCoversSmallAndLargeObjects) {
  for (double edge : {0.007, 0.2}) {
    auto w = make_world();
    const Pose6D ee = w.ee_pose();
    const double h = edge / 2;
    // ee 8 mm above the top face
    w.add_object({"o", "c", Pose6D::from_translation(ee.translation() - Vector3(0, 0, h + 0.008)), Vector3(h, h, h),
                  std::nullopt});
    EXPECT_NO_THROW(w.attach("o")) << "edge " << edge;
  }
}

TEST(Sim, ContactSpringLaw) {
  auto w = make_world();
  const Vector3 p = w.ee_pose().translation();
  EXPECT_TRUE(w.synth_contacts().empty());
  // top face 2 mm above the ee point
  w.add_object({"box", "c", Pose6D::from_translation(p - Vector3(0, 0, 0.048)), Vector3(0.1, 0.1, 0.05), std::nullopt});
  auto contacts = sim::synth_contacts(w);
  ASSERT_EQ(contacts.size(), 1u);
  EXPECT_LT((contacts[0].force - Vector3(0, 0, 1.0)).norm(), 1e-9);

  w.set_object_pose("box", Pose6D::from_translation(p - Vector3(0, 0, 0.046)));
  contacts = w.synth_contacts();
  ASSERT_EQ(contacts.size(), 1u);
  EXPECT_LT((contacts[0].force - Vector3(0, 0, 2.0)).norm(), 1e-9);
}

TEST(Sim, WorldFileRoundTrip) {
  std::vector<sim::SimObject> objs{{"a", "tray", Pose6D::rot_z(0.4), Vector3(0.1, 0.05, 0.01), std::nullopt}};
  std::map<std::string, sim::SimObject> m{{"a", objs[0]}};
  const auto back = sim::world_objects_from_json(sim::world_objects_to_json(m));
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].class_id, "tray");
  EXPECT_EQ(back[0].half_extents, objs[0].half_extents);
  expect_pose_near(back[0].pose_world, objs[0].pose_world, 1e-15);
}

TEST(Detector, ReportsCameraFramePosesAndHonorsOcclusion) {
  auto w = make_world();
  const Pose6D obj = Pose6D::from_translation(0.4, 0.1, 0.05);
  w.add_object({"a", "tray", obj, Vector3(0.05, 0.05, 0.01), std::nullopt});
  sim::DetectorConfig cfg;
  cfg.rate_hz = 10.0;
  cfg.occlusions.push_back({"a", 1.0, 2.0});
  sim::SimulatedDetector det(cfg);
  auto d = det.poll(w, 0.0);
  ASSERT_EQ(d.size(), 1u);
  expect_pose_near(w.camera_pose() * d[0].pose_camera, obj, 1e-12);
  EXPECT_TRUE(det.poll(w, 0.05).empty());  // not due yet
  EXPECT_TRUE(det.poll(w, 1.5).empty());   // occluded
  EXPECT_EQ(det.poll(w, 2.0).size(), 1u);
}

// ---------------------------------------------------------------------------
// Haptics

TEST(Haptics, ZeroForceZeroFrame) {
  const auto layout = haptics::default_layout();
  EXPECT_TRUE(haptics::render_force_cue(layout, Vector3::Zero(), 5.0).all_zero());
}

TEST(Haptics, FullForceAlongPreferredDirection) {
  const auto layout = haptics::default_layout();
  ASSERT_EQ(layout.size(), 16u);
  const auto& a = layout.actuators[3];
  const auto f = haptics::render_force_cue(layout, a.preferred_direction * 5.0, 5.0);
  EXPECT_NEAR(f.at(a.id), 1.0, 1e-15);
  for (const auto& b : layout.actuators) {
    if (std::abs(b.preferred_direction.dot(a.preferred_direction)) < 1e-12) {
      EXPECT_EQ(f.at(b.id), 0.0);
    }
  }
}

TEST(Haptics, SaturatesAtFmax) {
  const auto layout = haptics::default_layout();
  const Vector3 dir = Vector3(1, 2, -0.5).normalized();
  const auto f1 = haptics::render_force_cue(layout, dir * 5.0, 5.0);
  const auto f2 = haptics::render_force_cue(layout, dir * 10.0, 5.0);
  EXPECT_EQ(f1.intensities, f2.intensities);
}

TEST(Haptics, IntensitiesInUnitInterval) {
  const auto layout = haptics::default_layout();
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0, 4);
  for (int i = 0; i < 500; ++i) {
    const auto f = haptics::render_force_cue(layout, Vector3(n(rng), n(rng), n(rng)), 5.0);
    for (const auto& [id, v] : f.intensities) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Haptics, PatternPlayback) {
  const auto layout = haptics::default_layout();
  const auto lib = haptics::default_patterns();
  EXPECT_TRUE(haptics::play_pattern(lib, layout, "ramp", 0.0).all_zero());
  EXPECT_TRUE(haptics::play_pattern(lib, layout, "ramp", 10.0).all_zero());
  EXPECT_GT(haptics::play_pattern(lib, layout, "ramp", 0.45).at("palm_ul"), 0.8);
  const auto& hb = lib.get("heartbeat");
  const double d = hb.duration();
  for (double delta : {0.0, 0.01, 0.05, 0.09, 0.3}) {
    EXPECT_EQ(haptics::play_pattern(lib, layout, "heartbeat", d + delta).intensities,
              haptics::play_pattern(lib, layout, "heartbeat", delta).intensities);
  }
  EXPECT_THROW(haptics::play_pattern(lib, layout, "nope", 0.0), PatternError);
}

TEST(Haptics, CrosstalkLimits) {
  haptics::ActuatorLayout layout;
  layout.actuators.push_back({"a", {0.0, 0.0}, Vector3::UnitX(), haptics::Region::palm});
  layout.actuators.push_back({"b", {1.0, 0.0}, Vector3::UnitY(), haptics::Region::palm});
  layout.actuators.push_back({"c", {0.0, 0.0}, Vector3::UnitZ(), haptics::Region::palm});
  haptics::HapticFrame in = haptics::zero_frame(layout);
  in.intensities["a"] = 0.7;
  const auto tiny = haptics::isolate_crosstalk(layout, in, 1e-6);
  EXPECT_EQ(tiny.at("a"), 0.7);
  EXPECT_LT(tiny.at("b"), 1e-3);
  EXPECT_EQ(tiny.at("c"), 0.7);  // coincident: full coupling
}

TEST(Haptics, LayoutAndPatternJsonRoundTrip) {
  const auto layout = haptics::default_layout();
  const auto back = haptics::layout_from_json(haptics::layout_to_json(layout));
  ASSERT_EQ(back.size(), layout.size());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    EXPECT_EQ(back.actuators[i].id, layout.actuators[i].id);
    EXPECT_EQ(back.actuators[i].preferred_direction, layout.actuators[i].preferred_direction);
  }
  const auto lib = haptics::patterns_from_json(haptics::patterns_to_json(haptics::default_patterns()));
  EXPECT_TRUE(lib.contains("heartbeat"));
  EXPECT_TRUE(lib.get("heartbeat").looping);
  json bad = haptics::layout_to_json(layout);
  bad["actuators"][1]["id"] = bad["actuators"][0]["id"];
  EXPECT_THROW(haptics::layout_from_json(bad), ConfigError);
}
