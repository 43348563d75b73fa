#pragma once

#include <json.hpp>

#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cobotpbd/taskflow/engine.hpp"

namespace cobotpbd::taskflow {

/// Everything needed to reproduce a headless run.
struct RunSpec {
  json config = json::object();  // engine config overrides
  json task;
  std::vector<scene::Detection> detections;
  std::vector<sim::SimObject> world;
  std::optional<sim::DetectorConfig> detector;
};

inline json run_spec_to_json(const RunSpec& s) {
  json dets = json::array();
  for (const auto& d : s.detections) dets.push_back(scene::detection_to_json(d));
  std::map<std::string, sim::SimObject> objects;
  for (const auto& o : s.world) objects[o.id] = o;
  json j{{"config", s.config}, {"task", s.task}, {"detections", dets}, {"world", sim::world_objects_to_json(objects)}};
  if (s.detector) j["detector"] = sim::detector_config_to_json(*s.detector);
  return j;
}

inline RunSpec run_spec_from_json(const json& j) {
  RunSpec s;
  try {
    s.config = j.value("config", json::object());
    s.task = j.at("task");
    for (const auto& d : j.value("detections", json::array())) s.detections.push_back(scene::detection_from_json(d));
    if (j.contains("world")) s.world = sim::world_objects_from_json(j["world"]);
    if (j.contains("detector")) s.detector = sim::detector_config_from_json(j["detector"]);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run header: ") + e.what());
  }
  return s;
}

/// Builds an engine for a run, ready to tick.
inline std::unique_ptr<Engine> make_engine(const RunSpec& spec) {
  auto engine = std::make_unique<Engine>(engine_config_from_json(spec.config));
  for (const auto& o : spec.world) engine->add_object(o);
  if (!spec.detections.empty()) engine->set_detection_replay(spec.detections);
  if (spec.detector) engine->set_simulated_detector(*spec.detector);
  return engine;
}

/// Runs the run described by a header document. The inputs are always taken
/// from the header so a recorded run and its replay consume identical values.
inline TaskResult execute_run_header(json header, std::ostream* record = nullptr) {
  const RunSpec spec = run_spec_from_json(header);
  const TaskDescription task = parse_task_json(spec.task);
  auto engine = make_engine(spec);
  if (record) {
    header["type"] = "header";
    header["format"] = 1;
    *record << header.dump() << '\n';
    engine->set_record_sink(record);
  }
  TaskResult result = engine->run_task(task);
  if (record) {
    json r = task_result_to_json(result);
    r["type"] = "result";
    *record << r.dump() << '\n';
  }
  return result;
}

/// Runs the task to completion. With a record sink, writes a header line
/// holding the inputs, one snapshot per tick, then a result line.
inline TaskResult execute_run(const RunSpec& spec, std::ostream* record = nullptr) {
  return execute_run_header(run_spec_to_json(spec), record);
}

struct ReplayReport {
  bool identical = false;
  std::size_t ticks_compared = 0;
  std::optional<std::size_t> first_mismatch_line;
  std::string message;
  TaskResult result;
};

/// Re-executes a recorded run from its header and compares every line.
inline ReplayReport replay_record(std::istream& in) {
  ReplayReport report;
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw ConfigError("record is empty");
  const json header = json::parse(lines.front(), nullptr, false);
  if (header.is_discarded() || !header.is_object() || header.value("type", "") != "header") {
    throw ConfigError("record does not start with a header line");
  }

  std::ostringstream regenerated;
  report.result = execute_run_header(header, &regenerated);

  std::istringstream again(regenerated.str());
  std::size_t index = 0;
  for (std::string line; std::getline(again, line); ++index) {
    if (index >= lines.size()) {
      report.first_mismatch_line = index + 1;
      report.message = "replay produced more lines than the record";
      return report;
    }
    if (index > 0 && line.find("\"type\":\"result\"") == std::string::npos) ++report.ticks_compared;
    if (line != lines[index]) {
      report.first_mismatch_line = index + 1;
      report.message = "line " + std::to_string(index + 1) + " differs";
      return report;
    }
  }
  if (index != lines.size()) {
    report.first_mismatch_line = index + 1;
    report.message = "record has more lines than the replay";
    return report;
  }
  report.identical = true;
  report.message = "identical";
  return report;
}

}  // namespace cobotpbd::taskflow
