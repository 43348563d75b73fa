#include <CLI11.hpp>

#include <csignal>
#include <atomic>
#include <chrono>
#include <fstream>
#include <iostream>
#include <thread>

#include "cobotpbd/gateway/server.hpp"
#include "cobotpbd/taskflow/run.hpp"

namespace {

using namespace cobotpbd;
using json = nlohmann::json;

std::atomic<bool> g_stop{false};

json read_json(const std::string& path) { return haptics::read_json_file(path); }

/// Engine config from --config, then the narrower file overrides.
json engine_config_json(const std::string& config, const std::string& model, const std::string& controller, double rate) {
  json cfg = config.empty() ? json::object() : read_json(config);
  if (!model.empty()) cfg["model"] = read_json(model);
  if (!controller.empty()) cfg["controller"] = read_json(controller);
  if (rate > 0.0) cfg["rate_hz"] = rate;
  return cfg;
}

void print_diagnostics(const std::vector<Diagnostic>& ds, bool as_json) {
  if (as_json) {
    json arr = json::array();
    for (const auto& d : ds) arr.push_back(diagnostic_to_json(d));
    std::cout << json{{"diagnostics", arr}, {"valid", !has_errors(ds)}}.dump(2) << '\n';
    return;
  }
  for (const auto& d : ds) std::cout << d.to_string() << '\n';
}

/// Scene as seen from the home configuration, for binding checks.
scene::SceneMemory home_scene(const taskflow::EngineConfig& cfg, const std::vector<scene::Detection>& dets) {
  scene::SceneMemory mem(cfg.visibility_timeout);
  const auto frames = kinematics::forward_kinematics(cfg.model, cfg.model.clamp_to_limits(cfg.home));
  mem.apply(dets, frames.camera, dets.empty() ? 0.0 : dets.back().timestamp);
  return mem;
}

int cmd_validate(const std::string& task_path, const std::string& scene_path, bool as_json) {
  std::vector<Diagnostic> ds;
  try {
    const auto task = taskflow::load_task(task_path);
    if (scene_path.empty()) {
      ds = taskflow::validate_task(task);
    } else {
      const taskflow::EngineConfig cfg;
      const auto mem = home_scene(cfg, scene::load_detection_replay(scene_path));
      ds = taskflow::validate_task(task, primitives::primitive_schemas(), &mem);
    }
  } catch (const taskflow::TaskParseError& e) {
    ds = e.diagnostics();
  }
  print_diagnostics(ds, as_json);
  if (!as_json) std::cout << (has_errors(ds) ? "invalid" : "valid") << " (" << ds.size() << " diagnostic(s))\n";
  return has_errors(ds) ? 1 : 0;
}

int cmd_run(const std::string& task_path, const std::string& scene_path, const std::string& world_path,
            const std::string& detector_path, const json& config, const std::string& record_path, bool as_json) {
  taskflow::RunSpec spec;
  spec.config = config;
  {
    std::ifstream in(task_path);
    if (!in) throw ConfigError("cannot open task file: " + task_path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      spec.task = taskflow::task_to_json(taskflow::parse_task(ss.str()));
    } catch (const taskflow::TaskParseError& e) {
      print_diagnostics(e.diagnostics(), as_json);
      return 1;
    }
  }
  if (!scene_path.empty()) spec.detections = scene::load_detection_replay(scene_path);
  if (!world_path.empty()) spec.world = sim::load_world_objects(world_path);
  if (!detector_path.empty()) spec.detector = sim::detector_config_from_json(read_json(detector_path));

  std::ofstream record;
  if (!record_path.empty()) {
    record.open(record_path);
    if (!record) throw ConfigError("cannot write record file: " + record_path);
  }
  const auto result = taskflow::execute_run(spec, record_path.empty() ? nullptr : &record);

  if (as_json) {
    std::cout << taskflow::task_result_to_json(result).dump(2) << '\n';
  } else {
    print_diagnostics(result.diagnostics, false);
    for (const auto& s : result.steps) {
      std::cout << "step " << s.id << " (" << primitives::to_string(s.kind) << "): " << primitives::to_string(s.outcome);
      if (!s.reason.empty()) std::cout << " [" << s.reason << "]";
      std::cout << "  t=" << s.start_time << ".." << s.end_time << " s\n";
    }
    std::cout << "task " << result.task << ": " << (result.success ? "succeeded" : "failed");
    if (!result.reason.empty()) std::cout << " (" << result.reason << ")";
    std::cout << " in " << result.duration << " s\n";
  }
  return result.success ? 0 : 2;
}

int cmd_replay(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open record file: " + path);
  const auto report = taskflow::replay_record(in);
  std::cout << "replayed " << report.ticks_compared << " tick(s): " << report.message << '\n';
  std::cout << "task " << report.result.task << ": " << (report.result.success ? "succeeded" : "failed") << '\n';
  return report.identical ? 0 : 3;
}

int cmd_serve(int port, int http_port, const std::string& host, double snapshot_hz, const json& config,
              const std::string& world_path, const std::string& scene_path, const std::string& detector_path) {
  taskflow::Engine engine(taskflow::engine_config_from_json(config));
  if (!world_path.empty()) {
    for (auto& o : sim::load_world_objects(world_path)) engine.add_object(std::move(o));
  }
  if (!scene_path.empty()) engine.set_detection_replay(scene::load_detection_replay(scene_path));
  if (!detector_path.empty()) {
    engine.set_simulated_detector(sim::detector_config_from_json(read_json(detector_path)));
  } else if (!world_path.empty() && scene_path.empty()) {
    engine.set_simulated_detector(sim::DetectorConfig{});
  }

  gateway::EngineService service(engine, gateway::ServiceConfig{snapshot_hz, true});
  gateway::TcpServer tcp(service.hub());
  gateway::HttpBridge http(service.hub());
  tcp.start(port, host);
  if (http_port >= 0) http.start(http_port, host);
  service.start();
  std::cout << "ndjson tcp on " << host << ":" << tcp.port();
  if (http_port >= 0) std::cout << ", browser channel on http://" << host << ":" << http.port();
  std::cout << ", snapshots at " << snapshot_hz << " Hz" << std::endl;

  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  http.stop();
  tcp.stop();
  service.stop();
  return 0;
}

int cmd_synth_detections(const std::string& world_path, const std::string& out_path, const json& config, double t) {
  const auto cfg = taskflow::engine_config_from_json(config);
  const auto frames = kinematics::forward_kinematics(cfg.model, cfg.model.clamp_to_limits(cfg.home));
  const kinematics::Pose6D cam_inv = frames.camera.inverse();
  std::ofstream out_file;
  std::ostream* out = &std::cout;
  if (!out_path.empty()) {
    out_file.open(out_path);
    if (!out_file) throw ConfigError("cannot write: " + out_path);
    out = &out_file;
  }
  for (const auto& o : sim::load_world_objects(world_path)) {
    *out << scene::detection_to_json({o.id, o.class_id, cam_inv * o.pose_world, t}).dump() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cobotpbd: cobot programming-by-demonstration engine"};
  app.require_subcommand(1);

  std::string config_path, model_path, controller_path;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Engine config JSON")->check(CLI::ExistingFile);
    sub->add_option("--model", model_path, "Robot model JSON")->check(CLI::ExistingFile);
    sub->add_option("--controller", controller_path, "Controller gains JSON")->check(CLI::ExistingFile);
  };

  bool as_json = false;
  std::string task_path, scene_path, world_path, detector_path, record_path, out_path;

  auto* validate = app.add_subcommand("validate", "Check a task file and print diagnostics");
  validate->add_option("task", task_path, "Task JSON")->required();
  validate->add_option("--scene", scene_path, "Detection replay used to check bindings")->check(CLI::ExistingFile);
  validate->add_flag("--json", as_json, "Machine-readable output");

  double rate = 0.0;
  auto* run = app.add_subcommand("run", "Execute a task headlessly in the simulator");
  run->add_option("task", task_path, "Task JSON")->required();
  run->add_option("--scene", scene_path, "Detection replay (JSON Lines)")->check(CLI::ExistingFile);
  run->add_option("--world", world_path, "Simulated objects JSON")->check(CLI::ExistingFile);
  run->add_option("--detector", detector_path, "Simulated detector config JSON")->check(CLI::ExistingFile);
  run->add_option("--rate", rate, "Control rate in Hz")->check(CLI::PositiveNumber);
  run->add_option("--record", record_path, "Write per-tick snapshots (JSON Lines)");
  run->add_flag("--json", as_json, "Machine-readable result");
  add_config(run);

  int port = 8765, http_port = 8080;
  double snapshot_hz = 60.0;
  std::string host = "127.0.0.1";
  auto* serve = app.add_subcommand("serve", "Run the engine in real time behind the gateway");
  serve->add_option("--port", port, "NDJSON TCP port")->capture_default_str();
  serve->add_option("--http-port", http_port, "Browser channel port (-1 disables)")->capture_default_str();
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--snapshot-hz", snapshot_hz, "State snapshot broadcast rate")->capture_default_str()->check(CLI::PositiveNumber);
  serve->add_option("--world", world_path, "Simulated objects JSON")->check(CLI::ExistingFile);
  serve->add_option("--scene", scene_path, "Detection replay (JSON Lines)")->check(CLI::ExistingFile);
  serve->add_option("--detector", detector_path, "Simulated detector config JSON")->check(CLI::ExistingFile);
  add_config(serve);

  std::string record_in;
  auto* replay = app.add_subcommand("replay", "Re-execute a record file and verify it reproduces exactly");
  replay->add_option("record", record_in, "Record file from run --record")->required()->check(CLI::ExistingFile);

  auto* schema = app.add_subcommand("schema", "Print the primitive parameter JSON schema");

  double det_time = 0.0;
  auto* synth = app.add_subcommand("synth-detections", "Detections of a world as seen from the home pose");
  synth->add_option("--world", world_path, "Simulated objects JSON")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", out_path, "Output file (default stdout)");
  synth->add_option("--t", det_time, "Timestamp of the detections")->capture_default_str();
  add_config(synth);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) return cmd_validate(task_path, scene_path, as_json);
    if (*run) {
      return cmd_run(task_path, scene_path, world_path, detector_path,
                     engine_config_json(config_path, model_path, controller_path, rate), record_path, as_json);
    }
    if (*serve) {
      return cmd_serve(port, http_port, host, snapshot_hz, engine_config_json(config_path, model_path, controller_path, 0.0),
                       world_path, scene_path, detector_path);
    }
    if (*replay) return cmd_replay(record_in);
    if (*schema) {
      std::cout << primitives::primitive_schema_document().dump(2) << '\n';
      return 0;
    }
    if (*synth) {
      return cmd_synth_detections(world_path, out_path, engine_config_json(config_path, model_path, controller_path, 0.0),
                                  det_time);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
