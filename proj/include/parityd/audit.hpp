#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "parityd/core_metrics.hpp"
#include "parityd/diagnostics.hpp"
#include "parityd/disparity.hpp"
#include "parityd/fairness_tree.hpp"
#include "parityd/fingerprint.hpp"
#include "parityd/ingest.hpp"

namespace parityd {

inline constexpr std::string_view kToolName = "parityd";
inline constexpr std::string_view kToolVersion = "0.1.0";

struct AuditConfig {
  ThresholdPolicy threshold;
  ReferenceStrategy reference = MajorityReference{};
  ParityConfig parity;
  /// Answer ids through the fairness tree; when set, parity.metrics came from its leaf.
  std::vector<std::string> tree_path;
  /// Attributes to audit; empty means every schema attribute.
  std::vector<std::string> attributes;
  std::size_t min_group_size = 1;

  friend bool operator==(const AuditConfig&, const AuditConfig&) = default;
};

struct AttributeAudit {
  AttributeCrosstab crosstab;
  std::vector<GroupMetrics> metrics;
  ReferenceMap references;
  std::vector<DisparityRow> rows;
  AttributeParitySummary summary;
};

struct AuditResult {
  AuditConfig config;
  DatasetSchema schema;
  DatasetFingerprint fingerprint;
  std::optional<double> cutoff_score;
  std::size_t num_positive = 0;
  std::string tree_rationale;
  Diagnostics diagnostics;
  std::vector<AttributeAudit> attributes;
  TriState overall = TriState::Indeterminate;
};

inline TriState overall_verdict(const std::vector<AttributeAudit>& attrs) {
  bool any_open = false;
  for (const auto& a : attrs) {
    if (a.summary.overall_for_selected_metrics == TriState::Fail) return TriState::Fail;
    if (a.summary.overall_for_selected_metrics == TriState::Indeterminate) any_open = true;
  }
  return any_open ? TriState::Indeterminate : TriState::Pass;
}

/// Full pipeline: validate, binarize, crosstab, rates, references,
/// disparities and roll-ups for every audited attribute.
inline AuditResult run_audit(const Dataset& ds, AuditConfig config,
                             const FairnessTree& tree = FairnessTree::builtin()) {
  config.parity.check();
  config.threshold.check();
  AuditResult result;

  if (!config.tree_path.empty()) {
    auto state = tree.replay(config.tree_path);
    config.parity.metrics = FairnessTree::recommended_metrics(state);
    result.tree_rationale = state.terminal().rationale;
  }
  config.parity.metrics = canonical_metric_set(config.parity.metrics);
  if (config.attributes.empty()) config.attributes = ds.schema.attribute_columns;
  for (const auto& a : config.attributes) {
    const auto& cols = ds.schema.attribute_columns;
    if (std::find(cols.begin(), cols.end(), a) == cols.end()) {
      throw Error(ErrorCode::UnknownAttribute, "unknown attribute '" + a + "'", a);
    }
  }
  if (auto* fixed = std::get_if<FixedReference>(&config.reference)) {
    for (const auto& a : config.attributes) {
      if (!fixed->groups.count(a)) {
        throw Error(ErrorCode::InvalidConfig, "fixed reference has no group for attribute '" + a + "'", a);
      }
    }
  }

  result.schema = ds.schema;
  result.fingerprint = fingerprint(ds);
  result.diagnostics = validate(ds, ValidateOptions{config.min_group_size});

  const auto decisions = binarize(ds, config.threshold);
  result.cutoff_score = decisions.cutoff_score;
  result.num_positive = decisions.num_positive;
  result.diagnostics.insert(result.diagnostics.end(), decisions.warnings.begin(), decisions.warnings.end());

  for (const auto& attr : config.attributes) {
    AttributeAudit audit;
    audit.crosstab = crosstab(ds, decisions, attr);
    audit.metrics = compute_group_metrics(audit.crosstab);
    for (auto m : config.parity.metrics) {
      try {
        audit.references[m] = select_reference(audit.crosstab, audit.metrics, config.reference, m);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoDefinedMetric) throw;
        audit.references[m] = select_reference(audit.crosstab, audit.metrics, MajorityReference{}, m);
        result.diagnostics.push_back({Severity::Warning, "NoDefinedMetric", attr, audit.references[m],
                                      std::string(to_string(m)),
                                      std::string(to_string(m)) +
                                          " is undefined for every group; the largest group is used as reference"});
      }
    }
    audit.rows = compute_disparities(audit.metrics, audit.references, config.parity);
    audit.summary = summarize_attribute(audit.rows, config.parity);
    audit.summary.attribute = attr;
    result.attributes.push_back(std::move(audit));
  }
  result.overall = overall_verdict(result.attributes);
  result.config = std::move(config);
  return result;
}

// ---------------------------------------------------------------------------
// JSON form of the audit configuration. Used as the service request body and
// echoed verbatim (fully resolved) in every report.

inline nlohmann::json threshold_to_json(const ThresholdPolicy& p) {
  nlohmann::json j;
  std::visit(
      [&](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, PreBinarized>) {
          j["kind"] = "pre_binarized";
        } else if constexpr (std::is_same_v<T, TopK>) {
          j["kind"] = "top_k";
          j["k"] = k.k;
          j["ties"] = to_string(p.tie_mode);
        } else if constexpr (std::is_same_v<T, TopPercent>) {
          j["kind"] = "top_percent";
          j["p"] = k.p;
          j["ties"] = to_string(p.tie_mode);
        } else {
          j["kind"] = "cutoff";
          j["c"] = k.c;
        }
      },
      p.kind);
  return j;
}

inline ThresholdPolicy threshold_from_json(const nlohmann::json& j) {
  ThresholdPolicy p;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "pre_binarized") {
    p.kind = PreBinarized{};
  } else if (kind == "top_k") {
    const auto k = j.at("k").get<long long>();
    if (k < 1) throw Error(ErrorCode::InvalidPolicy, "top-k requires k >= 1");
    p.kind = TopK{static_cast<std::size_t>(k)};
  } else if (kind == "top_percent") {
    p.kind = TopPercent{j.at("p").get<double>()};
  } else if (kind == "cutoff") {
    p.kind = ScoreCutoff{j.at("c").get<double>()};
  } else {
    throw Error(ErrorCode::InvalidConfig, "unknown threshold kind '" + kind + "'", kind);
  }
  if (j.contains("ties")) {
    const auto t = j.at("ties").get<std::string>();
    if (t == "exact") {
      p.tie_mode = TieMode::ExactK;
    } else if (t == "all") {
      p.tie_mode = TieMode::IncludeAllTies;
    } else {
      throw Error(ErrorCode::InvalidConfig, "ties must be 'exact' or 'all'", t);
    }
  }
  p.check();
  return p;
}

inline nlohmann::json reference_to_json(const ReferenceStrategy& r) {
  nlohmann::json j;
  if (std::holds_alternative<MajorityReference>(r)) {
    j["kind"] = "majority";
  } else if (std::holds_alternative<MinMetricReference>(r)) {
    j["kind"] = "min_metric";
  } else {
    j["kind"] = "fixed";
    j["groups"] = std::get<FixedReference>(r).groups;
  }
  return j;
}

inline ReferenceStrategy reference_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "majority") return MajorityReference{};
  if (kind == "min_metric") return MinMetricReference{};
  if (kind == "fixed") return FixedReference{j.at("groups").get<std::map<std::string, std::string>>()};
  throw Error(ErrorCode::InvalidConfig, "unknown reference kind '" + kind + "'", kind);
}

inline nlohmann::json config_to_json(const AuditConfig& c) {
  nlohmann::json j;
  j["threshold"] = threshold_to_json(c.threshold);
  j["reference"] = reference_to_json(c.reference);
  j["tau"] = c.parity.tau;
  std::vector<std::string> metrics;
  for (auto m : c.parity.metrics) metrics.emplace_back(to_string(m));
  j["metrics"] = metrics;
  j["indeterminate_policy"] = to_string(c.parity.indeterminate_policy);
  j["tree_path"] = c.tree_path;
  j["attributes"] = c.attributes;
  j["min_group_size"] = c.min_group_size;
  return j;
}

/// Reads a request body. Absent fields take defaults; an absent threshold
/// means pre-binarized decisions when the dataset carries a decision column.
inline AuditConfig config_from_json(const nlohmann::json& j, const Dataset& ds) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "audit config must be a JSON object");
  AuditConfig c;
  try {
    if (j.contains("threshold")) {
      c.threshold = threshold_from_json(j.at("threshold"));
    } else if (ds.has_decisions()) {
      c.threshold.kind = PreBinarized{};
    } else {
      throw Error(ErrorCode::InvalidConfig, "dataset has no decision column; a threshold policy is required");
    }
    if (j.contains("reference")) c.reference = reference_from_json(j.at("reference"));
    if (j.contains("tau")) c.parity.tau = j.at("tau").get<double>();
    const bool has_metrics = j.contains("metrics") && !j.at("metrics").empty();
    const bool has_path = j.contains("tree_path") && !j.at("tree_path").empty();
    if (has_metrics && has_path) {
      throw Error(ErrorCode::InvalidConfig, "give either metrics or tree_path, not both");
    }
    if (has_metrics) c.parity.metrics = parse_metric_list(j.at("metrics").get<std::vector<std::string>>());
    if (has_path) c.tree_path = j.at("tree_path").get<std::vector<std::string>>();
    if (j.contains("indeterminate_policy")) {
      const auto s = j.at("indeterminate_policy").get<std::string>();
      auto p = parse_indeterminate_policy(s);
      if (!p) throw Error(ErrorCode::InvalidConfig, "unknown indeterminate_policy '" + s + "'", s);
      c.parity.indeterminate_policy = *p;
    }
    if (j.contains("attributes")) c.attributes = j.at("attributes").get<std::vector<std::string>>();
    if (j.contains("min_group_size")) c.min_group_size = j.at("min_group_size").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("malformed audit config: ") + e.what());
  }
  return c;
}

inline nlohmann::json schema_to_json(const DatasetSchema& s) {
  nlohmann::json j;
  j["score_column"] = s.score_column ? nlohmann::json(*s.score_column) : nlohmann::json(nullptr);
  j["label_column"] = s.label_column;
  j["decision_column"] = s.decision_column ? nlohmann::json(*s.decision_column) : nlohmann::json(nullptr);
  j["entity_id_column"] = s.entity_id_column ? nlohmann::json(*s.entity_id_column) : nlohmann::json(nullptr);
  j["attribute_columns"] = s.attribute_columns;
  return j;
}

inline DatasetSchema schema_from_json(const nlohmann::json& j) {
  DatasetSchema s;
  auto opt = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
  };
  try {
    s.score_column = opt("score_column");
    s.label_column = j.at("label_column").get<std::string>();
    s.decision_column = opt("decision_column");
    s.entity_id_column = opt("entity_id_column");
    s.attribute_columns = j.at("attribute_columns").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidSchema, std::string("malformed schema: ") + e.what());
  }
  s.check();
  return s;
}

}  // namespace parityd
