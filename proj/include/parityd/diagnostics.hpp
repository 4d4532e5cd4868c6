#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace parityd {

enum class Severity { Warning, Error };

constexpr std::string_view to_string(Severity s) {
  return s == Severity::Warning ? "warning" : "error";
}

/// A data-quality finding. Diagnostics never abort an audit; they are carried
/// into reports and upload responses.
struct Diagnostic {
  Severity severity = Severity::Warning;
  std::string code;
  std::string attribute;
  std::string group;
  std::string metric;
  std::string message;

  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

using Diagnostics = std::vector<Diagnostic>;

inline bool has_errors(const Diagnostics& diags) {
  for (const auto& d : diags) {
    if (d.severity == Severity::Error) return true;
  }
  return false;
}

}  // namespace parityd
