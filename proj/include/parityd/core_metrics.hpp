#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "parityd/diagnostics.hpp"
#include "parityd/error.hpp"
#include "parityd/ingest.hpp"
#include "parityd/metric.hpp"

namespace parityd {

enum class TieMode { ExactK, IncludeAllTies };

constexpr std::string_view to_string(TieMode t) { return t == TieMode::ExactK ? "exact" : "all"; }

struct PreBinarized {
  friend bool operator==(const PreBinarized&, const PreBinarized&) = default;
};
struct TopK {
  std::size_t k = 1;
  friend bool operator==(const TopK&, const TopK&) = default;
};
struct TopPercent {
  double p = 1.0;
  friend bool operator==(const TopPercent&, const TopPercent&) = default;
};
struct ScoreCutoff {
  double c = 0.0;
  friend bool operator==(const ScoreCutoff&, const ScoreCutoff&) = default;
};

/// How scores become binary decisions. tie_mode only affects TopK/TopPercent.
struct ThresholdPolicy {
  std::variant<PreBinarized, TopK, TopPercent, ScoreCutoff> kind = PreBinarized{};
  TieMode tie_mode = TieMode::ExactK;

  void check() const {
    if (auto* t = std::get_if<TopK>(&kind); t && t->k < 1) {
      throw Error(ErrorCode::InvalidPolicy, "top-k requires k >= 1");
    }
    if (auto* t = std::get_if<TopPercent>(&kind); t && !(t->p > 0.0 && t->p <= 1.0)) {
      throw Error(ErrorCode::InvalidPolicy, "top-percent requires 0 < p <= 1");
    }
    if (auto* t = std::get_if<ScoreCutoff>(&kind); t && !std::isfinite(t->c)) {
      throw Error(ErrorCode::InvalidPolicy, "score cutoff must be finite");
    }
  }

  friend bool operator==(const ThresholdPolicy&, const ThresholdPolicy&) = default;
};

struct BinarizationResult {
  std::vector<std::uint8_t> decisions;
  std::optional<double> cutoff_score;
  std::size_t num_positive = 0;
  Diagnostics warnings;
};

/// ceil(p * n), treating products within rounding error of an integer as that
/// integer (0.07 * 100 must give 7, not 8).
inline std::size_t top_percent_count(double p, std::size_t n) {
  const double x = p * static_cast<double>(n);
  const double nearest = std::round(x);
  if (std::abs(x - nearest) <= 1e-9 * std::max(1.0, x)) return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::ceil(x));
}

namespace detail {

inline BinarizationResult rank_threshold(const Dataset& ds, std::size_t k, TieMode ties) {
  const std::size_t n = ds.records.size();
  BinarizationResult out;
  out.decisions.assign(n, 0);
  if (n == 0) return out;
  if (k > n) {
    out.warnings.push_back({Severity::Warning, "KExceedsRows", "", "", "",
                            "k=" + std::to_string(k) + " exceeds " + std::to_string(n) +
                                " rows; every row is flagged positive"});
    k = n;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = ds.records[a];
    const auto& rb = ds.records[b];
    if (*ra.score != *rb.score) return *ra.score > *rb.score;
    return ra.entity_id < rb.entity_id;
  });
  const double kth = *ds.records[order[k - 1]].score;
  out.cutoff_score = kth;
  for (std::size_t i = 0; i < k; ++i) out.decisions[order[i]] = 1;
  if (ties == TieMode::IncludeAllTies) {
    for (std::size_t i = k; i < n && *ds.records[order[i]].score == kth; ++i) out.decisions[order[i]] = 1;
  }
  return out;
}

}  // namespace detail

/// Turns the dataset into one binary decision per record, aligned to record
/// order. Rank policies sort by (score desc, entity_id asc).
inline BinarizationResult binarize(const Dataset& ds, const ThresholdPolicy& policy) {
  policy.check();
  const bool wants_scores = !std::holds_alternative<PreBinarized>(policy.kind);
  if (wants_scores && !ds.has_scores()) {
    throw Error(ErrorCode::PolicyDatasetMismatch, "threshold policy needs a score column");
  }
  if (!wants_scores && !ds.has_decisions()) {
    throw Error(ErrorCode::PolicyDatasetMismatch, "pre-binarized policy needs a decision column");
  }

  BinarizationResult out;
  if (std::holds_alternative<PreBinarized>(policy.kind)) {
    out.decisions.reserve(ds.records.size());
    for (const auto& r : ds.records) out.decisions.push_back(static_cast<std::uint8_t>(*r.decision));
  } else if (auto* topk = std::get_if<TopK>(&policy.kind)) {
    out = detail::rank_threshold(ds, topk->k, policy.tie_mode);
  } else if (auto* pct = std::get_if<TopPercent>(&policy.kind)) {
    out = detail::rank_threshold(ds, top_percent_count(pct->p, ds.records.size()), policy.tie_mode);
  } else {
    const double c = std::get<ScoreCutoff>(policy.kind).c;
    out.cutoff_score = c;
    out.decisions.reserve(ds.records.size());
    for (const auto& r : ds.records) out.decisions.push_back(*r.score >= c ? 1 : 0);
  }
  out.num_positive = static_cast<std::size_t>(std::count(out.decisions.begin(), out.decisions.end(), 1));
  return out;
}

struct GroupCounts {
  std::string attribute;
  std::string group_value;
  std::size_t size = 0;
  std::size_t pp = 0, pn = 0;
  std::size_t fp = 0, fn = 0, tp = 0, tn = 0;
  std::size_t lp = 0, ln = 0;

  /// The confusion-partition identities.
  bool consistent() const {
    return pp + pn == size && lp + ln == size && tp + fp == pp && tn + fn == pn && tp + fn == lp &&
           tn + fp == ln;
  }

  friend bool operator==(const GroupCounts&, const GroupCounts&) = default;
};

struct AttributeCrosstab {
  std::string attribute;
  std::vector<GroupCounts> groups;
  std::size_t total_predicted_positive = 0;

  const GroupCounts* find(std::string_view group) const {
    for (const auto& g : groups) {
      if (g.group_value == group) return &g;
    }
    return nullptr;
  }
};

/// Confusion counts per distinct value of `attribute`, ordered by descending
/// size then ascending value.
inline AttributeCrosstab crosstab(const Dataset& ds, const BinarizationResult& decisions,
                                  const std::string& attribute) {
  const auto& attrs = ds.schema.attribute_columns;
  if (std::find(attrs.begin(), attrs.end(), attribute) == attrs.end()) {
    throw Error(ErrorCode::UnknownAttribute, "unknown attribute '" + attribute + "'", attribute);
  }
  if (decisions.decisions.size() != ds.records.size()) {
    throw Error(ErrorCode::PolicyDatasetMismatch, "decision vector is not aligned to the dataset");
  }

  std::map<std::string, GroupCounts> by_value;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& rec = ds.records[i];
    const auto& value = rec.attributes.at(attribute);
    auto [it, inserted] = by_value.try_emplace(value);
    auto& g = it->second;
    if (inserted) {
      g.attribute = attribute;
      g.group_value = value;
    }
    const bool predicted = decisions.decisions[i] != 0;
    const bool positive = rec.label != 0;
    ++g.size;
    (predicted ? g.pp : g.pn)++;
    (positive ? g.lp : g.ln)++;
    if (predicted && positive) ++g.tp;
    if (predicted && !positive) ++g.fp;
    if (!predicted && positive) ++g.fn;
    if (!predicted && !positive) ++g.tn;
  }

  AttributeCrosstab out;
  out.attribute = attribute;
  for (auto& [_, g] : by_value) {
    out.total_predicted_positive += g.pp;
    out.groups.push_back(std::move(g));
  }
  std::stable_sort(out.groups.begin(), out.groups.end(),
                   [](const GroupCounts& a, const GroupCounts& b) { return a.size > b.size; });
  return out;
}

struct GroupMetrics {
  std::string attribute;
  std::string group_value;
  std::optional<double> prev, pprev, ppr, fdr, for_, fpr, fnr;

  std::optional<double> get(Metric m) const {
    switch (m) {
      case Metric::PPrev: return pprev;
      case Metric::PPR: return ppr;
      case Metric::FDR: return fdr;
      case Metric::FOR: return for_;
      case Metric::FPR: return fpr;
      case Metric::FNR: return fnr;
    }
    return std::nullopt;
  }

  friend bool operator==(const GroupMetrics&, const GroupMetrics&) = default;
};

namespace detail {

inline std::optional<double> ratio_of(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace detail

/// Rates from counts; a zero denominator leaves the rate undefined.
inline GroupMetrics compute_group_metrics(const GroupCounts& c, std::size_t k_total) {
  GroupMetrics m;
  m.attribute = c.attribute;
  m.group_value = c.group_value;
  m.prev = detail::ratio_of(c.lp, c.size);
  m.pprev = detail::ratio_of(c.pp, c.size);
  m.ppr = detail::ratio_of(c.pp, k_total);
  m.fdr = detail::ratio_of(c.fp, c.pp);
  m.for_ = detail::ratio_of(c.fn, c.pn);
  m.fpr = detail::ratio_of(c.fp, c.ln);
  m.fnr = detail::ratio_of(c.fn, c.lp);
  return m;
}

inline std::vector<GroupMetrics> compute_group_metrics(const AttributeCrosstab& tab) {
  std::vector<GroupMetrics> out;
  out.reserve(tab.groups.size());
  for (const auto& g : tab.groups) out.push_back(compute_group_metrics(g, tab.total_predicted_positive));
  return out;
}

/// Why a metric is undefined for a group, e.g. "denominator LN=0".
inline std::string undefined_reason(Metric m) {
  switch (m) {
    case Metric::PPrev: return "denominator group size=0";
    case Metric::PPR: return "denominator K=0";
    case Metric::FDR: return "denominator PP=0";
    case Metric::FOR: return "denominator PN=0";
    case Metric::FPR: return "denominator LN=0";
    case Metric::FNR: return "denominator LP=0";
  }
  return "undefined";
}

}  // namespace parityd
