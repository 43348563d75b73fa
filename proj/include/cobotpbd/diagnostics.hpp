#pragma once

#include <json.hpp>

#include <algorithm>
#include <string>
#include <vector>

namespace cobotpbd {

enum class Severity { warning, error };

/// One validation finding. `path` is a JSON pointer into the offending document.
struct Diagnostic {
  Severity severity = Severity::error;
  std::string code;
  std::string path;
  std::string message;
  int line = 0;  // 1-based source line, 0 when unknown

  bool is_error() const { return severity == Severity::error; }

  std::string to_string() const {
    std::string s = severity == Severity::error ? "error" : "warning";
    if (line > 0) s += " (line " + std::to_string(line) + ")";
    if (!path.empty()) s += " at " + path;
    return s + ": [" + code + "] " + message;
  }
};

inline bool has_errors(const std::vector<Diagnostic>& ds) {
  return std::any_of(ds.begin(), ds.end(), [](const Diagnostic& d) { return d.is_error(); });
}

inline nlohmann::json diagnostic_to_json(const Diagnostic& d) {
  nlohmann::json j{{"severity", d.severity == Severity::error ? "error" : "warning"},
                   {"code", d.code},
                   {"path", d.path},
                   {"message", d.message}};
  if (d.line > 0) j["line"] = d.line;
  return j;
}

inline Diagnostic diagnostic_from_json(const nlohmann::json& j) {
  Diagnostic d;
  d.severity = j.value("severity", "error") == "warning" ? Severity::warning : Severity::error;
  d.code = j.value("code", "");
  d.path = j.value("path", "");
  d.message = j.value("message", "");
  d.line = j.value("line", 0);
  return d;
}

}  // namespace cobotpbd
