#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "parityd/audit.hpp"
#include "parityd/csv.hpp"

namespace parityd {

/// Bumped whenever the JSON layout changes; pinned by golden files.
inline constexpr std::string_view kReportVersion = "1";

enum class ReportFormat { Json, Markdown, Csv };

inline std::optional<ReportFormat> parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "markdown" || s == "md") return ReportFormat::Markdown;
  if (s == "csv") return ReportFormat::Csv;
  return std::nullopt;
}

enum class BarColor { Green, Red, Gray, Reference };

constexpr std::string_view to_string(BarColor c) {
  switch (c) {
    case BarColor::Green: return "green";
    case BarColor::Red: return "red";
    case BarColor::Gray: return "gray";
    case BarColor::Reference: return "reference";
  }
  return "?";
}

constexpr BarColor color_of(Verdict v) {
  switch (v) {
    case Verdict::Pass: return BarColor::Green;
    case Verdict::Fail: return BarColor::Red;
    case Verdict::Indeterminate: return BarColor::Gray;
    case Verdict::Reference: return BarColor::Reference;
  }
  return BarColor::Gray;
}

struct ChartBar {
  std::string group_value;
  std::optional<double> value;  // disparity ratio; absent when infinite or indeterminate
  std::optional<double> rate;
  BarColor color = BarColor::Gray;
};

struct ChartSeries {
  std::string attribute;
  Metric metric = Metric::PPrev;
  std::vector<ChartBar> bars;
};

/// One series per (attribute, audited metric); bars follow crosstab group order.
inline std::vector<ChartSeries> chart_data(const AuditResult& r) {
  std::vector<ChartSeries> out;
  for (const auto& a : r.attributes) {
    for (auto m : r.config.parity.metrics) {
      ChartSeries s{a.crosstab.attribute, m, {}};
      for (const auto& g : a.crosstab.groups) {
        for (const auto& row : a.rows) {
          if (row.metric != m || row.group_value != g.group_value) continue;
          ChartBar bar{row.group_value, std::nullopt, row.group_rate, color_of(row.verdict)};
          if (row.ratio.is_defined()) bar.value = row.ratio.value;
          s.bars.push_back(std::move(bar));
        }
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace detail {

inline nlohmann::json opt_number(std::optional<double> v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline std::optional<double> opt_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

inline nlohmann::json metric_value(std::optional<double> v, std::string_view reason) {
  nlohmann::json j;
  j["value"] = opt_number(v);
  if (!v) j["reason"] = reason;
  return j;
}

inline nlohmann::json diagnostic_to_json(const Diagnostic& d) {
  return {{"severity", to_string(d.severity)}, {"code", d.code},       {"attribute", d.attribute},
          {"group", d.group},                  {"metric", d.metric},   {"message", d.message}};
}

template <typename E, std::size_t N>
E enum_from(const nlohmann::json& j, const E (&values)[N]) {
  const auto s = j.get<std::string>();
  for (auto v : values) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorCode::InvalidConfig, "unexpected value '" + s + "' in report");
}

}  // namespace detail

/// Machine-readable report. Keys are emitted in sorted order so the text is
/// byte-stable; pass std::nullopt as timestamp for fully reproducible output.
inline nlohmann::json report_to_json(const AuditResult& r, const std::optional<std::string>& timestamp) {
  using nlohmann::json;
  json j;
  j["report_version"] = kReportVersion;
  j["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  if (timestamp) j["timestamp"] = *timestamp;
  j["dataset"] = {{"row_count", r.fingerprint.row_count},
                  {"content_hash", r.fingerprint.content_hash},
                  {"schema", schema_to_json(r.schema)}};
  j["config"] = config_to_json(r.config);
  j["tree_rationale"] = r.tree_rationale.empty() ? json(nullptr) : json(r.tree_rationale);
  j["binarization"] = {{"cutoff_score", detail::opt_number(r.cutoff_score)}, {"num_positive", r.num_positive}};

  json diags = json::array();
  for (const auto& d : r.diagnostics) diags.push_back(detail::diagnostic_to_json(d));
  j["diagnostics"] = diags;

  json attrs = json::array();
  for (const auto& a : r.attributes) {
    json ja;
    ja["attribute"] = a.crosstab.attribute;
    ja["total_predicted_positive"] = a.crosstab.total_predicted_positive;
    json refs = json::object();
    for (const auto& [m, g] : a.references) refs[std::string(to_string(m))] = g;
    ja["references"] = refs;

    json groups = json::array();
    for (std::size_t i = 0; i < a.crosstab.groups.size(); ++i) {
      const auto& c = a.crosstab.groups[i];
      const auto& m = a.metrics[i];
      json jg;
      jg["group"] = c.group_value;
      jg["counts"] = {{"size", c.size}, {"pp", c.pp}, {"pn", c.pn}, {"tp", c.tp}, {"fp", c.fp},
                      {"tn", c.tn},     {"fn", c.fn}, {"lp", c.lp}, {"ln", c.ln}};
      jg["metrics"] = {{"prev", detail::metric_value(m.prev, "denominator group size=0")},
                       {"pprev", detail::metric_value(m.pprev, undefined_reason(Metric::PPrev))},
                       {"ppr", detail::metric_value(m.ppr, undefined_reason(Metric::PPR))},
                       {"fdr", detail::metric_value(m.fdr, undefined_reason(Metric::FDR))},
                       {"for", detail::metric_value(m.for_, undefined_reason(Metric::FOR))},
                       {"fpr", detail::metric_value(m.fpr, undefined_reason(Metric::FPR))},
                       {"fnr", detail::metric_value(m.fnr, undefined_reason(Metric::FNR))}};
      groups.push_back(jg);
    }
    ja["groups"] = groups;

    json rows = json::array();
    for (const auto& row : a.rows) {
      json jr;
      jr["group"] = row.group_value;
      jr["metric"] = to_string(row.metric);
      jr["group_rate"] = detail::opt_number(row.group_rate);
      jr["ref_group"] = row.ref_group;
      jr["ref_rate"] = detail::opt_number(row.ref_rate);
      jr["ratio"] = row.ratio.is_defined() ? json(row.ratio.value) : json(nullptr);
      jr["ratio_kind"] = to_string(row.ratio.kind);
      jr["verdict"] = to_string(row.verdict);
      jr["direction"] = to_string(row.direction);
      if (row.ratio.kind == Ratio::Kind::Indeterminate) {
        jr["reason"] = !row.group_rate ? "group rate undefined (" + undefined_reason(row.metric) + ")"
                                       : "reference rate undefined (" + undefined_reason(row.metric) + ")";
      }
      rows.push_back(jr);
    }
    ja["disparities"] = rows;

    const auto& s = a.summary;
    ja["parity"] = {{"statistical_parity", to_string(s.statistical_parity)},
                    {"impact_parity", to_string(s.impact_parity)},
                    {"type1_parity", to_string(s.type1_parity)},
                    {"type2_parity", to_string(s.type2_parity)},
                    {"unsupervised", to_string(s.unsupervised)},
                    {"supervised", to_string(s.supervised)},
                    {"overall_for_selected_metrics", to_string(s.overall_for_selected_metrics)}};
    attrs.push_back(ja);
  }
  j["attributes"] = attrs;

  json charts = json::array();
  for (const auto& s : chart_data(r)) {
    json bars = json::array();
    for (const auto& b : s.bars) {
      bars.push_back({{"group", b.group_value},
                      {"value", detail::opt_number(b.value)},
                      {"rate", detail::opt_number(b.rate)},
                      {"color", to_string(b.color)}});
    }
    charts.push_back({{"attribute", s.attribute}, {"metric", to_string(s.metric)}, {"bars", bars}});
  }
  j["charts"] = charts;
  j["overall_verdict"] = to_string(r.overall);
  return j;
}

inline std::string dump_report_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

/// Rebuilds an AuditResult from its JSON form. Charts and reasons are derived
/// data and are regenerated rather than read.
inline AuditResult report_from_json(const nlohmann::json& j) {
  using nlohmann::json;
  if (j.at("report_version").get<std::string>() != kReportVersion) {
    throw Error(ErrorCode::InvalidConfig, "unsupported report_version");
  }
  AuditResult r;
  const auto& jd = j.at("dataset");
  r.fingerprint = {jd.at("row_count").get<std::size_t>(), jd.at("content_hash").get<std::string>()};
  r.schema = schema_from_json(jd.at("schema"));

  const auto& jc = j.at("config");
  r.config.threshold = threshold_from_json(jc.at("threshold"));
  r.config.reference = reference_from_json(jc.at("reference"));
  r.config.parity.tau = jc.at("tau").get<double>();
  r.config.parity.metrics = parse_metric_list(jc.at("metrics").get<std::vector<std::string>>());
  r.config.parity.indeterminate_policy =
      detail::enum_from(jc.at("indeterminate_policy"),
                        {IndeterminatePolicy::TreatAsFail, IndeterminatePolicy::TreatAsPass, IndeterminatePolicy::ReportOnly});
  r.config.tree_path = jc.at("tree_path").get<std::vector<std::string>>();
  r.config.attributes = jc.at("attributes").get<std::vector<std::string>>();
  r.config.min_group_size = jc.at("min_group_size").get<std::size_t>();
  if (!j.at("tree_rationale").is_null()) r.tree_rationale = j.at("tree_rationale").get<std::string>();

  r.cutoff_score = detail::opt_from(j.at("binarization").at("cutoff_score"));
  r.num_positive = j.at("binarization").at("num_positive").get<std::size_t>();

  for (const auto& d : j.at("diagnostics")) {
    r.diagnostics.push_back({detail::enum_from(d.at("severity"), {Severity::Warning, Severity::Error}),
                             d.at("code").get<std::string>(), d.at("attribute").get<std::string>(),
                             d.at("group").get<std::string>(), d.at("metric").get<std::string>(),
                             d.at("message").get<std::string>()});
  }

  const TriState tri[] = {TriState::Pass, TriState::Fail, TriState::Indeterminate};
  for (const auto& ja : j.at("attributes")) {
    AttributeAudit a;
    const auto attr = ja.at("attribute").get<std::string>();
    a.crosstab.attribute = attr;
    a.crosstab.total_predicted_positive = ja.at("total_predicted_positive").get<std::size_t>();
    for (const auto& [m, g] : ja.at("references").items()) a.references[*parse_metric(m)] = g.get<std::string>();
    for (const auto& jg : ja.at("groups")) {
      const auto& c = jg.at("counts");
      GroupCounts gc;
      gc.attribute = attr;
      gc.group_value = jg.at("group").get<std::string>();
      gc.size = c.at("size");
      gc.pp = c.at("pp");
      gc.pn = c.at("pn");
      gc.tp = c.at("tp");
      gc.fp = c.at("fp");
      gc.tn = c.at("tn");
      gc.fn = c.at("fn");
      gc.lp = c.at("lp");
      gc.ln = c.at("ln");
      a.crosstab.groups.push_back(gc);
      const auto& jm = jg.at("metrics");
      GroupMetrics gm;
      gm.attribute = attr;
      gm.group_value = gc.group_value;
      gm.prev = detail::opt_from(jm.at("prev").at("value"));
      gm.pprev = detail::opt_from(jm.at("pprev").at("value"));
      gm.ppr = detail::opt_from(jm.at("ppr").at("value"));
      gm.fdr = detail::opt_from(jm.at("fdr").at("value"));
      gm.for_ = detail::opt_from(jm.at("for").at("value"));
      gm.fpr = detail::opt_from(jm.at("fpr").at("value"));
      gm.fnr = detail::opt_from(jm.at("fnr").at("value"));
      a.metrics.push_back(gm);
    }
    for (const auto& jr : ja.at("disparities")) {
      DisparityRow row;
      row.attribute = attr;
      row.group_value = jr.at("group").get<std::string>();
      row.metric = *parse_metric(jr.at("metric").get<std::string>());
      row.group_rate = detail::opt_from(jr.at("group_rate"));
      row.ref_group = jr.at("ref_group").get<std::string>();
      row.ref_rate = detail::opt_from(jr.at("ref_rate"));
      const auto kind = detail::enum_from(
          jr.at("ratio_kind"), {Ratio::Kind::Defined, Ratio::Kind::PositiveInfinity, Ratio::Kind::Indeterminate});
      row.ratio = kind == Ratio::Kind::Defined           ? Ratio::defined(jr.at("ratio").get<double>())
                  : kind == Ratio::Kind::PositiveInfinity ? Ratio::infinite()
                                                          : Ratio::indeterminate();
      row.verdict = detail::enum_from(jr.at("verdict"),
                                      {Verdict::Pass, Verdict::Fail, Verdict::Indeterminate, Verdict::Reference});
      row.direction =
          detail::enum_from(jr.at("direction"), {Direction::Equal, Direction::Above, Direction::Below, Direction::None});
      a.rows.push_back(row);
    }
    const auto& jp = ja.at("parity");
    a.summary.attribute = attr;
    a.summary.statistical_parity = detail::enum_from(jp.at("statistical_parity"), tri);
    a.summary.impact_parity = detail::enum_from(jp.at("impact_parity"), tri);
    a.summary.type1_parity = detail::enum_from(jp.at("type1_parity"), tri);
    a.summary.type2_parity = detail::enum_from(jp.at("type2_parity"), tri);
    a.summary.unsupervised = detail::enum_from(jp.at("unsupervised"), tri);
    a.summary.supervised = detail::enum_from(jp.at("supervised"), tri);
    a.summary.overall_for_selected_metrics = detail::enum_from(jp.at("overall_for_selected_metrics"), tri);
    r.attributes.push_back(std::move(a));
  }
  r.overall = detail::enum_from(j.at("overall_verdict"), tri);
  return r;
}

namespace detail {

inline std::string fixed4(std::optional<double> v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

inline std::string ratio_text(const Ratio& r) {
  switch (r.kind) {
    case Ratio::Kind::Defined: return fixed4(r.value);
    case Ratio::Kind::PositiveInfinity: return "inf";
    case Ratio::Kind::Indeterminate: return "n/a";
  }
  return "?";
}

inline std::string verdict_cell(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "PASS";
    case Verdict::Fail: return "FAIL";
    case Verdict::Indeterminate: return "N/A";
    case Verdict::Reference: return "REF";
  }
  return "?";
}

inline std::string tri_cell(TriState t) {
  switch (t) {
    case TriState::Pass: return "PASS";
    case TriState::Fail: return "FAIL";
    case TriState::Indeterminate: return "N/A";
  }
  return "?";
}

inline std::string md_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '|' || c == '\\' || c == '`') out.push_back('\\');
    out.push_back(c == '\n' ? ' ' : c);
  }
  return out;
}

inline std::string policy_text(const ThresholdPolicy& p) {
  return std::visit(
      [&](const auto& k) -> std::string {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, PreBinarized>) {
          return "pre-binarized decisions";
        } else if constexpr (std::is_same_v<T, TopK>) {
          return "top " + std::to_string(k.k) + " by score (ties: " + std::string(to_string(p.tie_mode)) + ")";
        } else if constexpr (std::is_same_v<T, TopPercent>) {
          return "top " + format_double(k.p * 100.0) + "% by score (ties: " + std::string(to_string(p.tie_mode)) + ")";
        } else {
          return "score >= " + format_double(k.c);
        }
      },
      p.kind);
}

inline std::string reference_text(const ReferenceStrategy& r) {
  if (std::holds_alternative<MajorityReference>(r)) return "largest group";
  if (std::holds_alternative<MinMetricReference>(r)) return "group with the lowest value of each metric";
  std::string out = "fixed (";
  bool first = true;
  for (const auto& [a, g] : std::get<FixedReference>(r).groups) {
    out += (first ? "" : ", ") + a + "=" + g;
    first = false;
  }
  return out + ")";
}

}  // namespace detail

/// Human-readable report: a header block, then one section per attribute with
/// a group metric table, a disparity table and the parity roll-up.
inline std::string report_to_markdown(const AuditResult& r) {
  using detail::fixed4;
  using detail::md_escape;
  std::string md;
  md += "# Fairness audit report\n\n";
  md += "- Rows: " + std::to_string(r.fingerprint.row_count) + "\n";
  md += "- Content hash: `" + r.fingerprint.content_hash + "`\n";
  md += "- Decision rule: " + detail::policy_text(r.config.threshold) + "\n";
  md += "- Predicted positive (K): " + std::to_string(r.num_positive);
  if (r.cutoff_score) md += ", cutoff score " + format_double(*r.cutoff_score);
  md += "\n";
  md += "- Reference groups: " + md_escape(detail::reference_text(r.config.reference)) + "\n";
  md += "- Tau: " + format_double(r.config.parity.tau) + " (fair band " + fixed4(r.config.parity.tau) + " to " +
        fixed4(1.0 / r.config.parity.tau) + ")\n";
  md += "- Metrics: " + join_metrics(r.config.parity.metrics, ", ") + "\n";
  if (!r.config.tree_path.empty()) {
    std::string path;
    for (const auto& a : r.config.tree_path) path += (path.empty() ? "" : " > ") + a;
    md += "- Fairness tree path: " + path + "\n";
    md += "- Rationale: " + r.tree_rationale + "\n";
  }
  md += "- Overall verdict: **" + detail::tri_cell(r.overall) + "**\n";

  if (!r.diagnostics.empty()) {
    md += "\n## Diagnostics\n\n";
    for (const auto& d : r.diagnostics) {
      md += "- " + std::string(to_string(d.severity)) + " " + d.code;
      if (!d.attribute.empty()) md += " [" + md_escape(d.attribute) + (d.group.empty() ? "" : "=" + md_escape(d.group)) + "]";
      md += ": " + md_escape(d.message) + "\n";
    }
  }

  for (const auto& a : r.attributes) {
    md += "\n## Attribute: " + md_escape(a.crosstab.attribute) + "\n\n";
    md += "### Group metrics\n\n";
    md += "| Group | Size | PP | PN | TP | FP | TN | FN | LP | LN | Prev | PPrev | PPR | FDR | FOR | FPR | FNR |\n";
    md += "|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n";
    for (std::size_t i = 0; i < a.crosstab.groups.size(); ++i) {
      const auto& c = a.crosstab.groups[i];
      const auto& m = a.metrics[i];
      md += "| " + md_escape(c.group_value);
      for (auto n : {c.size, c.pp, c.pn, c.tp, c.fp, c.tn, c.fn, c.lp, c.ln}) md += " | " + std::to_string(n);
      for (auto v : {m.prev, m.pprev, m.ppr, m.fdr, m.for_, m.fpr, m.fnr}) md += " | " + fixed4(v);
      md += " |\n";
    }
    md += "\n### Disparities\n\n";
    md += "| Group | Metric | Rate | Reference | Ref. rate | Ratio | Verdict |\n";
    md += "|---|---|---:|---|---:|---:|---|\n";
    for (const auto& row : a.rows) {
      md += "| " + md_escape(row.group_value) + " | " + std::string(to_string(row.metric)) + " | " +
            fixed4(row.group_rate) + " | " + md_escape(row.ref_group) + " | " + fixed4(row.ref_rate) + " | " +
            detail::ratio_text(row.ratio) + " | " + detail::verdict_cell(row.verdict) + " |\n";
    }
    const auto& s = a.summary;
    md += "\n### Parity\n\n";
    md += "| Statistical (PPR) | Impact (PPrev) | Type I (FDR, FPR) | Type II (FOR, FNR) | Unsupervised | Supervised | "
          "Selected metrics |\n";
    md += "|---|---|---|---|---|---|---|\n";
    md += "| " + detail::tri_cell(s.statistical_parity) + " | " + detail::tri_cell(s.impact_parity) + " | " +
          detail::tri_cell(s.type1_parity) + " | " + detail::tri_cell(s.type2_parity) + " | " +
          detail::tri_cell(s.unsupervised) + " | " + detail::tri_cell(s.supervised) + " | " +
          detail::tri_cell(s.overall_for_selected_metrics) + " |\n";
  }
  return md;
}

/// Flat disparity export, one line per row.
inline std::string report_to_csv(const AuditResult& r) {
  std::string out = "attribute,group,metric,rate,ref_group,ref_rate,ratio,verdict\n";
  auto num = [](std::optional<double> v) { return v ? format_double(*v) : std::string(); };
  for (const auto& a : r.attributes) {
    for (const auto& row : a.rows) {
      std::string ratio;
      if (row.ratio.kind == Ratio::Kind::Defined) ratio = format_double(row.ratio.value);
      if (row.ratio.kind == Ratio::Kind::PositiveInfinity) ratio = "inf";
      csv::append_row(out,
                      {row.attribute, row.group_value, std::string(to_string(row.metric)), num(row.group_rate),
                       row.ref_group, num(row.ref_rate), ratio, std::string(to_string(row.verdict))},
                      ',');
    }
  }
  return out;
}

inline std::string build_report(const AuditResult& r, ReportFormat format,
                                const std::optional<std::string>& timestamp = std::nullopt) {
  switch (format) {
    case ReportFormat::Json: return dump_report_json(report_to_json(r, timestamp));
    case ReportFormat::Markdown: return report_to_markdown(r);
    case ReportFormat::Csv: return report_to_csv(r);
  }
  return {};
}

}  // namespace parityd
