#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "parityd/core_metrics.hpp"
#include "parityd/error.hpp"
#include "parityd/metric.hpp"

namespace parityd {

struct MajorityReference {
  friend bool operator==(const MajorityReference&, const MajorityReference&) = default;
};
struct MinMetricReference {
  friend bool operator==(const MinMetricReference&, const MinMetricReference&) = default;
};
struct FixedReference {
  std::map<std::string, std::string> groups;  // attribute -> group value
  friend bool operator==(const FixedReference&, const FixedReference&) = default;
};

using ReferenceStrategy = std::variant<MajorityReference, MinMetricReference, FixedReference>;

/// Reference group for one attribute and metric.
///   Majority:  largest group, ties to the smaller group value.
///   MinMetric: smallest defined value of `metric`, ties to the smaller group value.
///   Fixed:     the configured group.
inline std::string select_reference(const AttributeCrosstab& tab, const std::vector<GroupMetrics>& metrics,
                                    const ReferenceStrategy& strategy, Metric metric) {
  if (tab.groups.empty()) throw Error(ErrorCode::InvalidConfig, "attribute '" + tab.attribute + "' has no groups");

  if (std::holds_alternative<MajorityReference>(strategy)) {
    const GroupCounts* best = &tab.groups.front();
    for (const auto& g : tab.groups) {
      if (g.size > best->size || (g.size == best->size && g.group_value < best->group_value)) best = &g;
    }
    return best->group_value;
  }

  if (auto* fixed = std::get_if<FixedReference>(&strategy)) {
    auto it = fixed->groups.find(tab.attribute);
    if (it == fixed->groups.end()) {
      throw Error(ErrorCode::InvalidConfig, "fixed reference has no group for attribute '" + tab.attribute + "'",
                  tab.attribute);
    }
    if (!tab.find(it->second)) {
      throw Error(ErrorCode::FixedGroupAbsent,
                  "reference group '" + it->second + "' not present in attribute '" + tab.attribute + "'",
                  tab.attribute + "=" + it->second);
    }
    return it->second;
  }

  const GroupMetrics* best = nullptr;
  for (const auto& gm : metrics) {
    if (gm.attribute != tab.attribute) continue;
    auto v = gm.get(metric);
    if (!v) continue;
    if (!best || *v < *best->get(metric) || (*v == *best->get(metric) && gm.group_value < best->group_value)) {
      best = &gm;
    }
  }
  if (!best) {
    throw Error(ErrorCode::NoDefinedMetric,
                std::string(to_string(metric)) + " is undefined for every group of '" + tab.attribute + "'",
                tab.attribute);
  }
  return best->group_value;
}

/// A disparity ratio: a finite value, +infinity (x/0 with x > 0), or
/// indeterminate (either rate undefined).
struct Ratio {
  enum class Kind { Defined, PositiveInfinity, Indeterminate };
  Kind kind = Kind::Indeterminate;
  double value = 0.0;

  static Ratio defined(double v) { return {Kind::Defined, v}; }
  static Ratio infinite() { return {Kind::PositiveInfinity, std::numeric_limits<double>::infinity()}; }
  static Ratio indeterminate() { return {Kind::Indeterminate, 0.0}; }

  bool is_defined() const { return kind == Kind::Defined; }

  friend bool operator==(const Ratio&, const Ratio&) = default;
};

constexpr std::string_view to_string(Ratio::Kind k) {
  switch (k) {
    case Ratio::Kind::Defined: return "defined";
    case Ratio::Kind::PositiveInfinity: return "positive_infinity";
    case Ratio::Kind::Indeterminate: return "indeterminate";
  }
  return "?";
}

/// group / reference, with 0/0 read as equal rates.
inline Ratio disparity_ratio(std::optional<double> group_rate, std::optional<double> ref_rate) {
  if (!group_rate || !ref_rate) return Ratio::indeterminate();
  if (*ref_rate > 0.0) return Ratio::defined(*group_rate / *ref_rate);
  if (*group_rate == 0.0) return Ratio::defined(1.0);
  return Ratio::infinite();
}

enum class Verdict { Pass, Fail, Indeterminate, Reference };

constexpr std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::Indeterminate: return "indeterminate";
    case Verdict::Reference: return "reference";
  }
  return "?";
}

enum class IndeterminatePolicy { TreatAsFail, TreatAsPass, ReportOnly };

constexpr std::string_view to_string(IndeterminatePolicy p) {
  switch (p) {
    case IndeterminatePolicy::TreatAsFail: return "treat_as_fail";
    case IndeterminatePolicy::TreatAsPass: return "treat_as_pass";
    case IndeterminatePolicy::ReportOnly: return "report_only";
  }
  return "?";
}

inline std::optional<IndeterminatePolicy> parse_indeterminate_policy(std::string_view s) {
  for (auto p : {IndeterminatePolicy::TreatAsFail, IndeterminatePolicy::TreatAsPass, IndeterminatePolicy::ReportOnly}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

struct ParityConfig {
  double tau = 0.8;
  std::vector<Metric> metrics{kAllMetrics.begin(), kAllMetrics.end()};
  IndeterminatePolicy indeterminate_policy = IndeterminatePolicy::ReportOnly;

  void check() const {
    if (!(tau > 0.0 && tau <= 1.0)) throw Error(ErrorCode::InvalidConfig, "tau must lie in (0, 1]");
    if (metrics.empty()) throw Error(ErrorCode::InvalidConfig, "metric set is empty");
  }

  friend bool operator==(const ParityConfig&, const ParityConfig&) = default;
};

/// The band test tau <= ratio <= 1/tau, inclusive at both ends.
inline Verdict parity_test(const Ratio& ratio, double tau,
                           IndeterminatePolicy policy = IndeterminatePolicy::ReportOnly) {
  switch (ratio.kind) {
    case Ratio::Kind::PositiveInfinity: return Verdict::Fail;
    case Ratio::Kind::Indeterminate:
      switch (policy) {
        case IndeterminatePolicy::TreatAsFail: return Verdict::Fail;
        case IndeterminatePolicy::TreatAsPass: return Verdict::Pass;
        case IndeterminatePolicy::ReportOnly: return Verdict::Indeterminate;
      }
      return Verdict::Indeterminate;
    case Ratio::Kind::Defined: break;
  }
  return (tau <= ratio.value && ratio.value <= 1.0 / tau) ? Verdict::Pass : Verdict::Fail;
}

inline Verdict parity_test(double ratio, double tau) { return parity_test(Ratio::defined(ratio), tau); }

/// Which side of 1 a ratio falls on; lets reports separate favorable from
/// unfavorable deviation.
enum class Direction { Equal, Above, Below, None };

constexpr std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::Equal: return "equal";
    case Direction::Above: return "above";
    case Direction::Below: return "below";
    case Direction::None: return "none";
  }
  return "?";
}

inline Direction direction_of(const Ratio& r) {
  if (r.kind == Ratio::Kind::PositiveInfinity) return Direction::Above;
  if (r.kind == Ratio::Kind::Indeterminate) return Direction::None;
  if (r.value > 1.0) return Direction::Above;
  if (r.value < 1.0) return Direction::Below;
  return Direction::Equal;
}

struct DisparityRow {
  std::string attribute;
  std::string group_value;
  Metric metric = Metric::PPrev;
  std::optional<double> group_rate;
  std::string ref_group;
  std::optional<double> ref_rate;
  Ratio ratio;
  Verdict verdict = Verdict::Indeterminate;
  Direction direction = Direction::None;

  friend bool operator==(const DisparityRow&, const DisparityRow&) = default;
};

using ReferenceMap = std::map<Metric, std::string>;

/// One row per (group, metric), groups in table order, metrics in config order.
inline std::vector<DisparityRow> compute_disparities(const std::vector<GroupMetrics>& table,
                                                     const ReferenceMap& references, const ParityConfig& config) {
  config.check();
  std::vector<DisparityRow> rows;
  for (const auto& gm : table) {
    for (auto metric : config.metrics) {
      auto ref_it = references.find(metric);
      if (ref_it == references.end()) {
        throw Error(ErrorCode::InvalidConfig, "no reference group for " + std::string(to_string(metric)));
      }
      const GroupMetrics* ref = nullptr;
      for (const auto& cand : table) {
        if (cand.attribute == gm.attribute && cand.group_value == ref_it->second) ref = &cand;
      }
      if (!ref) {
        throw Error(ErrorCode::FixedGroupAbsent, "reference group '" + ref_it->second + "' is not in the table",
                    ref_it->second);
      }

      DisparityRow row;
      row.attribute = gm.attribute;
      row.group_value = gm.group_value;
      row.metric = metric;
      row.group_rate = gm.get(metric);
      row.ref_group = ref->group_value;
      row.ref_rate = ref->get(metric);
      if (gm.group_value == ref->group_value) {
        row.ratio = Ratio::defined(1.0);
        row.verdict = Verdict::Reference;
      } else {
        row.ratio = disparity_ratio(row.group_rate, row.ref_rate);
        row.verdict = parity_test(row.ratio, config.tau, config.indeterminate_policy);
      }
      row.direction = direction_of(row.ratio);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

/// Pass / Fail / Indeterminate roll-up.
enum class TriState { Pass, Fail, Indeterminate };

constexpr std::string_view to_string(TriState t) {
  switch (t) {
    case TriState::Pass: return "pass";
    case TriState::Fail: return "fail";
    case TriState::Indeterminate: return "indeterminate";
  }
  return "?";
}

inline TriState both(TriState a, TriState b) {
  if (a == TriState::Fail || b == TriState::Fail) return TriState::Fail;
  if (a == TriState::Pass && b == TriState::Pass) return TriState::Pass;
  return TriState::Indeterminate;
}

struct AttributeParitySummary {
  std::string attribute;
  TriState statistical_parity = TriState::Indeterminate;  // PPR
  TriState impact_parity = TriState::Indeterminate;       // PPrev
  TriState type1_parity = TriState::Indeterminate;        // FDR, FPR
  TriState type2_parity = TriState::Indeterminate;        // FOR, FNR
  TriState unsupervised = TriState::Indeterminate;
  TriState supervised = TriState::Indeterminate;
  TriState overall_for_selected_metrics = TriState::Indeterminate;

  friend bool operator==(const AttributeParitySummary&, const AttributeParitySummary&) = default;
};

/// All-pass rule over the rows of `constituents`. Any Fail wins; otherwise a
/// constituent absent from the audited metrics, or any Indeterminate row,
/// leaves the composite Indeterminate.
inline TriState composite(const std::vector<DisparityRow>& rows, const std::vector<Metric>& audited,
                          const std::vector<Metric>& constituents) {
  bool any_fail = false, any_open = false;
  for (auto m : constituents) {
    if (std::find(audited.begin(), audited.end(), m) == audited.end()) any_open = true;
  }
  for (const auto& r : rows) {
    if (std::find(constituents.begin(), constituents.end(), r.metric) == constituents.end()) continue;
    if (r.verdict == Verdict::Fail) any_fail = true;
    if (r.verdict == Verdict::Indeterminate) any_open = true;
  }
  if (any_fail) return TriState::Fail;
  return any_open ? TriState::Indeterminate : TriState::Pass;
}

inline AttributeParitySummary summarize_attribute(const std::vector<DisparityRow>& rows, const ParityConfig& config) {
  AttributeParitySummary s;
  if (!rows.empty()) s.attribute = rows.front().attribute;
  const auto& audited = config.metrics;
  s.statistical_parity = composite(rows, audited, {Metric::PPR});
  s.impact_parity = composite(rows, audited, {Metric::PPrev});
  s.type1_parity = composite(rows, audited, {Metric::FDR, Metric::FPR});
  s.type2_parity = composite(rows, audited, {Metric::FOR, Metric::FNR});
  s.unsupervised = both(s.statistical_parity, s.impact_parity);
  s.supervised = both(s.type1_parity, s.type2_parity);
  s.overall_for_selected_metrics = composite(rows, audited, audited);
  return s;
}

}  // namespace parityd
