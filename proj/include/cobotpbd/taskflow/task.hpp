#pragma once

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cobotpbd/diagnostics.hpp"
#include "cobotpbd/error.hpp"
#include "cobotpbd/primitives/primitives.hpp"
#include "cobotpbd/scene/scene_memory.hpp"

namespace cobotpbd::taskflow {

using json = nlohmann::json;
using primitives::PrimitiveKind;
using primitives::PrimitiveSpec;

/// A logical object name is bound either to a concrete id or to a class.
struct Binding {
  std::optional<std::string> id;
  std::optional<std::string> class_id;
};

struct TaskDescription {
  std::string name;
  int schema_version = 1;
  std::map<std::string, Binding> bindings;
  std::vector<PrimitiveSpec> steps;
};

class TaskParseError : public Error {
 public:
  explicit TaskParseError(std::vector<Diagnostic> diagnostics)
      : Error(summarize(diagnostics)), diagnostics_(std::move(diagnostics)) {}

  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  static std::string summarize(const std::vector<Diagnostic>& ds) {
    std::string s = "task parse failed";
    for (const auto& d : ds) s += "\n  " + d.to_string();
    return s;
  }

  std::vector<Diagnostic> diagnostics_;
};

namespace detail {

inline int line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

/// Logical names a step refers to, with the JSON pointer of each reference.
inline std::vector<std::pair<std::string, std::string>> referenced_names(const PrimitiveSpec& s, std::size_t index) {
  std::vector<std::pair<std::string, std::string>> out;
  const std::string base = "/steps/" + std::to_string(index);
  if (s.object) out.emplace_back(*s.object, base + "/object");
  if (const auto* p = std::get_if<primitives::PlaceParams>(&s.params)) {
    if (p->target_object) out.emplace_back(*p->target_object, base + "/params/target/object");
  }
  return out;
}

}  // namespace detail

/// Structural parse. Throws TaskParseError carrying every diagnostic found.
inline TaskDescription parse_task_json(const json& doc) {
  std::vector<Diagnostic> ds;
  auto err = [&](std::string code, std::string path, std::string msg) {
    ds.push_back({Severity::error, std::move(code), std::move(path), std::move(msg), 0});
  };
  TaskDescription task;
  if (!doc.is_object()) {
    err("invalid-type", "", "task must be a JSON object");
    throw TaskParseError(ds);
  }
  if (!doc.contains("name") || !doc["name"].is_string()) {
    err("missing-field", "/name", "task needs a string 'name'");
  } else {
    task.name = doc["name"].get<std::string>();
  }
  if (doc.contains("schema_version")) {
    if (!doc["schema_version"].is_number_integer() || doc["schema_version"].get<int>() != 1) {
      err("unsupported-version", "/schema_version", "only schema_version 1 is supported");
    }
  }
  if (doc.contains("bindings")) {
    if (!doc["bindings"].is_object()) {
      err("invalid-type", "/bindings", "bindings must be an object");
    } else {
      for (const auto& [name, b] : doc["bindings"].items()) {
        const std::string path = "/bindings/" + name;
        Binding binding;
        if (b.is_string()) {
          binding.id = b.get<std::string>();
        } else if (b.is_object() && (b.contains("id") || b.contains("class"))) {
          if (b.contains("id") && b["id"].is_string()) binding.id = b["id"].get<std::string>();
          if (b.contains("class") && b["class"].is_string()) binding.class_id = b["class"].get<std::string>();
          if (!binding.id && !binding.class_id) err("invalid-type", path, "binding id/class must be strings");
        } else {
          err("invalid-binding", path, "binding must be {\"id\": ...} or {\"class\": ...}");
        }
        task.bindings[name] = binding;
      }
    }
  }
  if (!doc.contains("steps") || !doc["steps"].is_array()) {
    err("missing-field", "/steps", "task needs a 'steps' array");
    throw TaskParseError(ds);
  }
  const auto schemas = primitives::primitive_schemas();
  std::size_t index = 0;
  for (const auto& sj : doc["steps"]) {
    const std::string base = "/steps/" + std::to_string(index++);
    if (!sj.is_object()) {
      err("invalid-type", base, "step must be an object");
      continue;
    }
    PrimitiveSpec spec;
    if (!sj.contains("id") || !sj["id"].is_string()) {
      err("missing-field", base + "/id", "step needs a string 'id'");
    } else {
      spec.id = sj["id"].get<std::string>();
    }
    const std::string label = spec.id.empty() ? base : "step '" + spec.id + "'";
    if (!sj.contains("kind") || !sj["kind"].is_string()) {
      err("missing-field", base + "/kind", label + " needs a string 'kind'");
      continue;
    }
    const std::string kind_name = sj["kind"].get<std::string>();
    const auto kind = primitives::kind_from_string(kind_name);
    if (!kind) {
      err("unknown-primitive", base + "/kind", label + ": unknown primitive kind '" + kind_name + "'");
      continue;
    }
    spec.kind = *kind;
    if (sj.contains("object")) {
      if (!sj["object"].is_string()) {
        err("invalid-type", base + "/object", label + ": object must be a logical name");
      } else {
        spec.object = sj["object"].get<std::string>();
      }
    }
    spec.raw_params = sj.value("params", json::object());
    auto pds = primitives::validate_params(schemas.at(*kind), spec.raw_params, base + "/params");
    for (auto& d : pds) d.message = label + ": " + d.message;
    const bool bad = has_errors(pds);
    ds.insert(ds.end(), pds.begin(), pds.end());
    if (!bad) {
      try {
        spec.params = primitives::params_from_json(*kind, spec.raw_params);
      } catch (const ConfigError& e) {
        err("invalid-parameter", base + "/params", label + ": " + e.what());
        continue;
      }
    }
    task.steps.push_back(std::move(spec));
  }
  if (has_errors(ds)) throw TaskParseError(ds);
  return task;
}

inline TaskDescription parse_task(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    Diagnostic d{Severity::error, "malformed-json", "", e.what(), detail::line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1)};
    throw TaskParseError({d});
  }
  return parse_task_json(doc);
}

inline TaskDescription load_task(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open task file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_task(ss.str());
}

inline json step_to_json(const PrimitiveSpec& s) {
  json j{{"id", s.id}, {"kind", primitives::to_string(s.kind)}, {"params", s.raw_params}};
  if (s.object) j["object"] = *s.object;
  return j;
}

inline json task_to_json(const TaskDescription& t) {
  json bindings = json::object();
  for (const auto& [name, b] : t.bindings) {
    json bj = json::object();
    if (b.id) bj["id"] = *b.id;
    if (b.class_id) bj["class"] = *b.class_id;
    bindings[name] = bj;
  }
  json steps = json::array();
  for (const auto& s : t.steps) steps.push_back(step_to_json(s));
  return {{"schema_version", t.schema_version}, {"name", t.name}, {"bindings", bindings}, {"steps", steps}};
}

/// Resolves logical names to scene object ids. Class bindings take the
/// lowest id of that class not already claimed by another name.
inline std::map<std::string, std::string> resolve_bindings(const TaskDescription& task, const scene::SceneMemory& scene) {
  std::map<std::string, std::string> out;
  std::set<std::string> claimed;
  for (const auto& [name, b] : task.bindings) {
    if (b.id) {
      out[name] = *b.id;
      claimed.insert(*b.id);
    }
  }
  for (const auto& [name, b] : task.bindings) {
    if (b.id || !b.class_id) continue;
    for (const auto& id : scene.ids_of_class(*b.class_id)) {
      if (!claimed.count(id)) {
        out[name] = id;
        claimed.insert(id);
        break;
      }
    }
  }
  return out;
}

/// Diagnostics for a parsed task. Errors block execution; warnings do not.
inline std::vector<Diagnostic> validate_task(const TaskDescription& task,
                                             const primitives::SchemaSet& schemas = primitives::primitive_schemas(),
                                             const scene::SceneMemory* scene = nullptr) {
  std::vector<Diagnostic> ds;
  auto add = [&](Severity sev, std::string code, std::string path, std::string msg) {
    ds.push_back({sev, std::move(code), std::move(path), std::move(msg), 0});
  };
  if (task.name.empty()) add(Severity::error, "missing-field", "/name", "task name is empty");

  std::set<std::string> ids;
  std::map<std::string, std::string> resolved;
  if (scene) resolved = resolve_bindings(task, *scene);

  for (const auto& [name, b] : task.bindings) {
    if (!scene) continue;
    const std::string path = "/bindings/" + name;
    if (!resolved.count(name)) {
      add(Severity::error, "unresolvable-binding", path,
          "no object of class '" + b.class_id.value_or("") + "' in scene for '" + name + "'");
    } else if (b.id && !scene->contains(*b.id)) {
      add(Severity::error, "unresolvable-binding", path, "object '" + *b.id + "' is not in the scene");
    }
  }

  bool perceived = false;
  for (std::size_t i = 0; i < task.steps.size(); ++i) {
    const PrimitiveSpec& s = task.steps[i];
    const std::string base = "/steps/" + std::to_string(i);
    const std::string label = "step '" + s.id + "'";
    if (s.id.empty()) add(Severity::error, "missing-field", base + "/id", "step id is empty");
    if (!ids.insert(s.id).second) add(Severity::error, "duplicate-step-id", base + "/id", label + ": duplicate id");

    auto pds = primitives::validate_params(schemas.at(s.kind), s.raw_params, base + "/params");
    for (auto& d : pds) d.message = label + ": " + d.message;
    ds.insert(ds.end(), pds.begin(), pds.end());

    const auto& schema = schemas.at(s.kind);
    if (schema.object == primitives::PrimitiveSchema::ObjectRef::required && !s.object) {
      add(Severity::error, "missing-object", base + "/object", label + ": " + primitives::to_string(s.kind) +
                                                                   " needs an object");
    }
    if (schema.object == primitives::PrimitiveSchema::ObjectRef::none && s.object) {
      add(Severity::error, "unexpected-object", base + "/object",
          label + ": " + primitives::to_string(s.kind) + " does not take an object");
    }
    if (s.kind == PrimitiveKind::lookat && !s.object && !s.raw_params.contains("point")) {
      add(Severity::error, "missing-parameter", base + "/params/point", label + ": lookat needs a point or an object");
    }

    for (const auto& [name, path] : detail::referenced_names(s, i)) {
      if (!task.bindings.count(name)) {
        add(Severity::error, "unbound-name", path, label + ": logical name '" + name + "' is not bound");
        continue;
      }
      const bool known = scene && resolved.count(name) && scene->contains(resolved.at(name));
      if (!perceived && !known) {
        add(Severity::warning, "never-perceived", path,
            label + ": acts on '" + name + "' before any perceive step");
      }
    }
    if (s.kind == PrimitiveKind::perceive) perceived = true;
  }
  return ds;
}

}  // namespace cobotpbd::taskflow
