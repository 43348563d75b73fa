#pragma once

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cobotpbd/diagnostics.hpp"
#include "cobotpbd/kinematics/pose_json.hpp"

namespace cobotpbd::primitives {

using json = nlohmann::json;

enum class PrimitiveKind { move, grasp, place, lookat, perceive };

inline const char* to_string(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::move: return "move";
    case PrimitiveKind::grasp: return "grasp";
    case PrimitiveKind::place: return "place";
    case PrimitiveKind::lookat: return "lookat";
    case PrimitiveKind::perceive: return "perceive";
  }
  return "move";
}

inline std::optional<PrimitiveKind> kind_from_string(const std::string& s) {
  if (s == "move") return PrimitiveKind::move;
  if (s == "grasp") return PrimitiveKind::grasp;
  if (s == "place") return PrimitiveKind::place;
  if (s == "lookat") return PrimitiveKind::lookat;
  if (s == "perceive") return PrimitiveKind::perceive;
  return std::nullopt;
}

inline const std::vector<PrimitiveKind>& all_kinds() {
  static const std::vector<PrimitiveKind> kinds{PrimitiveKind::move, PrimitiveKind::grasp, PrimitiveKind::place,
                                                PrimitiveKind::lookat, PrimitiveKind::perceive};
  return kinds;
}

enum class FieldType { pose, vec3, number, boolean, string, enumeration, place_target };

struct FieldSchema {
  std::string name;
  FieldType type = FieldType::number;
  bool required = false;
  std::string description;
  std::optional<double> minimum;
  std::optional<double> maximum;
  std::vector<std::string> choices;  // enumeration values
  json default_value;
};

/// Parameter schema of one primitive kind. Single source for both the
/// published JSON-schema document and task validation.
struct PrimitiveSchema {
  PrimitiveKind kind = PrimitiveKind::move;
  std::string description;
  std::vector<FieldSchema> fields;
  std::vector<std::vector<std::string>> exactly_one_of;  // field-name groups
  enum class ObjectRef { none, optional, required } object = ObjectRef::none;

  const FieldSchema* field(const std::string& name) const {
    for (const auto& f : fields) {
      if (f.name == name) return &f;
    }
    return nullptr;
  }
};

using SchemaSet = std::map<PrimitiveKind, PrimitiveSchema>;

namespace detail {

inline FieldSchema pose_field(std::string name, bool required, std::string desc) {
  FieldSchema f;
  f.name = std::move(name);
  f.type = FieldType::pose;
  f.required = required;
  f.description = std::move(desc);
  return f;
}

inline FieldSchema number_field(std::string name, std::optional<double> lo, std::optional<double> hi, double def,
                                std::string desc) {
  FieldSchema f;
  f.name = std::move(name);
  f.type = FieldType::number;
  f.minimum = lo;
  f.maximum = hi;
  f.default_value = def;
  f.description = std::move(desc);
  return f;
}

inline FieldSchema enum_field(std::string name, std::vector<std::string> choices, std::string def, std::string desc) {
  FieldSchema f;
  f.name = std::move(name);
  f.type = FieldType::enumeration;
  f.choices = std::move(choices);
  f.default_value = def;
  f.description = std::move(desc);
  return f;
}

inline void add_common(PrimitiveSchema& s) {
  s.fields.push_back(number_field("tolerance_m", 0.0, std::nullopt, 0.002, "waypoint position tolerance, m"));
  s.fields.push_back(number_field("tolerance_deg", 0.0, std::nullopt, 1.0, "waypoint orientation tolerance, deg"));
  s.fields.push_back(number_field("timeout_s", 0.0, std::nullopt, 30.0, "per-phase timeout, s"));
}

}  // namespace detail

inline SchemaSet primitive_schemas() {
  using detail::enum_field;
  using detail::number_field;
  using detail::pose_field;
  SchemaSet set;

  PrimitiveSchema move;
  move.kind = PrimitiveKind::move;
  move.description = "Servo the end effector to a pose (world frame, or object frame when an object is given).";
  move.object = PrimitiveSchema::ObjectRef::optional;
  move.fields.push_back(pose_field("pose", false, "end-effector target pose"));
  {
    FieldSchema named;
    named.name = "named";
    named.type = FieldType::enumeration;
    named.choices = {"home"};
    named.description = "named target configuration";
    move.fields.push_back(named);
  }
  move.fields.push_back(enum_field("speed_mode", {"auto", "slow", "fast"}, "auto", "gain mode policy"));
  move.exactly_one_of.push_back({"pose", "named"});
  detail::add_common(move);
  set[move.kind] = move;

  PrimitiveSchema grasp;
  grasp.kind = PrimitiveKind::grasp;
  grasp.description = "Object-centric grasp: pre-grasp, grasp, close gripper, post-grasp.";
  grasp.object = PrimitiveSchema::ObjectRef::required;
  grasp.fields.push_back(pose_field("pre_grasp", true, "ee pose in the object frame before closing"));
  grasp.fields.push_back(pose_field("grasp", true, "ee pose in the object frame at closure"));
  grasp.fields.push_back(pose_field("post_grasp", true, "ee pose in the object frame after closing"));
  {
    FieldSchema cls;
    cls.name = "object_class";
    cls.type = FieldType::string;
    cls.description = "object category these frames were taught for";
    grasp.fields.push_back(cls);
  }
  grasp.fields.push_back(enum_field("approach_speed_mode", {"slow", "fast"}, "slow", "gain mode on approach phases"));
  grasp.fields.push_back(number_field("gripper_width", 0.0, std::nullopt, 0.08, "opening width, m"));
  grasp.fields.push_back(number_field("grip_pressure", 0.0, 1.0, 0.5, "normalized grip pressure"));
  detail::add_common(grasp);
  set[grasp.kind] = grasp;

  PrimitiveSchema place;
  place.kind = PrimitiveKind::place;
  place.description = "Release the held object at a target: object-relative or absolute.";
  place.object = PrimitiveSchema::ObjectRef::none;
  {
    FieldSchema target;
    target.name = "target";
    target.type = FieldType::place_target;
    target.required = true;
    target.description = "{\"object\": name, \"pose\": ee pose in that object's frame} or {\"pose\": world ee pose}";
    place.fields.push_back(target);
  }
  place.fields.push_back(pose_field("pre_place", false, "ee pose in the target frame before release"));
  place.fields.push_back(pose_field("post_place", false, "ee pose in the target frame after release"));
  place.fields.push_back(enum_field("approach_speed_mode", {"slow", "fast"}, "slow", "gain mode on approach phases"));
  detail::add_common(place);
  set[place.kind] = place;

  PrimitiveSchema lookat;
  lookat.kind = PrimitiveKind::lookat;
  lookat.description = "Orient the in-hand camera toward a point (or the referenced object's origin).";
  lookat.object = PrimitiveSchema::ObjectRef::optional;
  {
    FieldSchema point;
    point.name = "point";
    point.type = FieldType::vec3;
    point.description = "world point to look at";
    lookat.fields.push_back(point);
    FieldSchema up;
    up.name = "world_up";
    up.type = FieldType::vec3;
    up.description = "roll reference";
    up.default_value = json::array({0.0, 0.0, 1.0});
    lookat.fields.push_back(up);
  }
  detail::add_common(lookat);
  set[lookat.kind] = lookat;

  PrimitiveSchema perceive;
  perceive.kind = PrimitiveKind::perceive;
  perceive.description = "Request a detection cycle and wait for fresh detections.";
  perceive.object = PrimitiveSchema::ObjectRef::none;
  perceive.fields.push_back(number_field("min_objects", 0.0, std::nullopt, 1.0, "objects required in memory"));
  perceive.fields.push_back(number_field("timeout_s", 0.0, std::nullopt, 30.0, "wait timeout, s"));
  set[perceive.kind] = perceive;

  return set;
}

namespace detail {

inline json field_to_json_schema(const FieldSchema& f) {
  json j;
  switch (f.type) {
    case FieldType::pose: j = {{"$ref", "#/$defs/pose"}}; break;
    case FieldType::vec3: j = {{"$ref", "#/$defs/vec3"}}; break;
    case FieldType::number:
      j = {{"type", "number"}};
      if (f.minimum) j["minimum"] = *f.minimum;
      if (f.maximum) j["maximum"] = *f.maximum;
      break;
    case FieldType::boolean: j = {{"type", "boolean"}}; break;
    case FieldType::string: j = {{"type", "string"}}; break;
    case FieldType::enumeration: j = {{"type", "string"}, {"enum", f.choices}}; break;
    case FieldType::place_target: j = {{"$ref", "#/$defs/place_target"}}; break;
  }
  if (!f.description.empty()) j["description"] = f.description;
  if (!f.default_value.is_null()) j["default"] = f.default_value;
  return j;
}

}  // namespace detail

/// JSON-schema (2020-12) document describing every primitive's parameters.
inline json primitive_schema_document(const SchemaSet& set = primitive_schemas()) {
  json defs;
  defs["vec3"] = {{"type", "array"}, {"items", {{"type", "number"}}}, {"minItems", 3}, {"maxItems", 3}};
  defs["pose"] = {{"type", "object"},
                  {"properties",
                   {{"xyz", {{"$ref", "#/$defs/vec3"}}},
                    {"quat_wxyz", {{"type", "array"}, {"items", {{"type", "number"}}}, {"minItems", 4}, {"maxItems", 4}}}}},
                  {"additionalProperties", false}};
  defs["place_target"] = {{"type", "object"},
                          {"properties", {{"object", {{"type", "string"}}}, {"pose", {{"$ref", "#/$defs/pose"}}}}},
                          {"required", json::array({"pose"})},
                          {"additionalProperties", false}};
  json kinds;
  for (const auto& [kind, s] : set) {
    json props = json::object();
    json required = json::array();
    for (const auto& f : s.fields) {
      props[f.name] = detail::field_to_json_schema(f);
      if (f.required) required.push_back(f.name);
    }
    json k{{"type", "object"}, {"description", s.description}, {"properties", props}, {"required", required},
           {"additionalProperties", false}};
    if (!s.exactly_one_of.empty()) {
      json all = json::array();
      for (const auto& group : s.exactly_one_of) {
        json one = json::array();
        for (const auto& name : group) one.push_back({{"required", json::array({name})}});
        all.push_back({{"oneOf", one}});
      }
      k["allOf"] = all;
    }
    const char* obj = s.object == PrimitiveSchema::ObjectRef::required   ? "required"
                      : s.object == PrimitiveSchema::ObjectRef::optional ? "optional"
                                                                          : "none";
    k["x-object-reference"] = obj;
    kinds[to_string(kind)] = k;
  }
  return {{"$schema", "https://json-schema.org/draft/2020-12/schema"},
          {"$id", "cobotpbd/primitives.schema.json"},
          {"title", "robot-action primitive parameters"},
          {"schema_version", 1},
          {"$defs", defs},
          {"primitives", kinds}};
}

/// Checks a params object against a kind's schema. `base` prefixes paths.
inline std::vector<Diagnostic> validate_params(const PrimitiveSchema& schema, const json& params,
                                               const std::string& base) {
  std::vector<Diagnostic> out;
  auto err = [&](std::string code, std::string path, std::string msg) {
    out.push_back({Severity::error, std::move(code), std::move(path), std::move(msg), 0});
  };
  if (!params.is_object()) {
    err("invalid-type", base, "params must be an object");
    return out;
  }
  for (const auto& f : schema.fields) {
    if (f.required && !params.contains(f.name)) {
      err("missing-parameter", base + "/" + f.name,
          std::string(to_string(schema.kind)) + " requires parameter '" + f.name + "'");
    }
  }
  for (const auto& group : schema.exactly_one_of) {
    int present = 0;
    std::string names;
    for (const auto& n : group) {
      present += params.contains(n) ? 1 : 0;
      names += (names.empty() ? "" : "|") + n;
    }
    if (present != 1) {
      err(present == 0 ? "missing-parameter" : "conflicting-parameters", base,
          std::string(to_string(schema.kind)) + " needs exactly one of " + names);
    }
  }
  for (const auto& [key, value] : params.items()) {
    const std::string path = base + "/" + key;
    const FieldSchema* f = schema.field(key);
    if (!f) {
      err("unknown-parameter", path, "'" + key + "' is not a " + to_string(schema.kind) + " parameter");
      continue;
    }
    switch (f->type) {
      case FieldType::pose:
        if (!kinematics::is_pose_json(value)) err("invalid-type", path, "expected a pose {xyz, quat_wxyz}");
        break;
      case FieldType::vec3:
        try {
          (void)kinematics::vec3_from_json(value);
        } catch (const std::exception&) {
          err("invalid-type", path, "expected an array of 3 numbers");
        }
        break;
      case FieldType::number:
        if (!value.is_number()) {
          err("invalid-type", path, "expected a number");
        } else {
          const double v = value.get<double>();
          if ((f->minimum && v < *f->minimum) || (f->maximum && v > *f->maximum)) {
            err("out-of-range", path, "value " + value.dump() + " outside allowed range");
          }
        }
        break;
      case FieldType::boolean:
        if (!value.is_boolean()) err("invalid-type", path, "expected a boolean");
        break;
      case FieldType::string:
        if (!value.is_string()) err("invalid-type", path, "expected a string");
        break;
      case FieldType::enumeration:
        if (!value.is_string() ||
            std::find(f->choices.begin(), f->choices.end(), value.get<std::string>()) == f->choices.end()) {
          std::string c;
          for (const auto& s : f->choices) c += (c.empty() ? "" : "|") + s;
          err("invalid-value", path, "expected one of " + c);
        }
        break;
      case FieldType::place_target:
        if (!value.is_object() || !value.contains("pose")) {
          err("missing-parameter", path + "/pose", "place target needs a pose");
        } else {
          if (!kinematics::is_pose_json(value["pose"])) err("invalid-type", path + "/pose", "expected a pose");
          if (value.contains("object") && !value["object"].is_string()) {
            err("invalid-type", path + "/object", "expected an object name");
          }
          for (const auto& [k, v] : value.items()) {
            if (k != "pose" && k != "object") err("unknown-parameter", path + "/" + k, "unexpected key '" + k + "'");
          }
        }
        break;
    }
  }
  return out;
}

}  // namespace cobotpbd::primitives
