#pragma once

#include <array>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "parityd/error.hpp"

namespace parityd {

/// The six rates a disparity can be computed over. Prevalence is reported per
/// group but never compared, since it does not depend on the model.
enum class Metric { PPrev, PPR, FDR, FOR, FPR, FNR };

inline constexpr std::array<Metric, 6> kAllMetrics = {Metric::PPrev, Metric::PPR, Metric::FDR,
                                                      Metric::FOR,   Metric::FPR, Metric::FNR};

constexpr std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::PPrev: return "PPrev";
    case Metric::PPR: return "PPR";
    case Metric::FDR: return "FDR";
    case Metric::FOR: return "FOR";
    case Metric::FPR: return "FPR";
    case Metric::FNR: return "FNR";
  }
  return "?";
}

/// Case-insensitive lookup of a metric name.
inline std::optional<Metric> parse_metric(std::string_view name) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
  };
  const auto key = lower(name);
  for (auto m : kAllMetrics) {
    if (lower(to_string(m)) == key) return m;
  }
  return std::nullopt;
}

/// Sorts into canonical order and drops duplicates.
inline std::vector<Metric> canonical_metric_set(std::vector<Metric> metrics) {
  std::vector<Metric> out;
  for (auto m : kAllMetrics) {
    for (auto x : metrics) {
      if (x == m) {
        out.push_back(m);
        break;
      }
    }
  }
  return out;
}

inline std::vector<Metric> parse_metric_list(const std::vector<std::string>& names) {
  std::vector<Metric> out;
  for (const auto& n : names) {
    auto m = parse_metric(n);
    if (!m) throw Error(ErrorCode::InvalidConfig, "unknown metric '" + n + "'", n);
    out.push_back(*m);
  }
  if (out.empty()) throw Error(ErrorCode::InvalidConfig, "metric set is empty");
  return canonical_metric_set(std::move(out));
}

inline std::string join_metrics(const std::vector<Metric>& metrics, std::string_view sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    if (i) out += sep;
    out += to_string(metrics[i]);
  }
  return out;
}

}  // namespace parityd
