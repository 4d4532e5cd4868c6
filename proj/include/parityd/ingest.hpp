#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "parityd/csv.hpp"
#include "parityd/diagnostics.hpp"
#include "parityd/error.hpp"

namespace parityd {

/// Value given to attribute cells that are empty in the input.
inline constexpr std::string_view kUnknownGroup = "UNKNOWN";

/// Column bindings for one input file. Never inferred from header names.
struct DatasetSchema {
  std::optional<std::string> score_column;
  std::string label_column;
  std::optional<std::string> decision_column;
  std::optional<std::string> entity_id_column;
  std::vector<std::string> attribute_columns;

  /// Throws InvalidSchema when the bindings overlap or are incomplete.
  void check() const {
    if (label_column.empty()) throw Error(ErrorCode::InvalidSchema, "label column is required");
    if (!score_column && !decision_column) {
      throw Error(ErrorCode::InvalidSchema, "either a score column or a decision column is required");
    }
    if (attribute_columns.empty()) {
      throw Error(ErrorCode::InvalidSchema, "at least one attribute column is required");
    }
    std::set<std::string> seen;
    auto claim = [&](const std::string& name, std::string_view role) {
      if (!seen.insert(name).second) {
        throw Error(ErrorCode::InvalidSchema,
                    "column '" + name + "' is bound twice (as " + std::string(role) + ")", name);
      }
    };
    claim(label_column, "label");
    if (score_column) claim(*score_column, "score");
    if (decision_column) claim(*decision_column, "decision");
    if (entity_id_column) claim(*entity_id_column, "entity id");
    for (const auto& a : attribute_columns) claim(a, "attribute");
  }

  friend bool operator==(const DatasetSchema&, const DatasetSchema&) = default;
};

struct EntityRecord {
  std::string entity_id;
  std::optional<double> score;
  std::optional<int> decision;
  int label = 0;
  std::map<std::string, std::string> attributes;

  friend bool operator==(const EntityRecord&, const EntityRecord&) = default;
};

struct Dataset {
  DatasetSchema schema;
  std::vector<EntityRecord> records;
  std::size_t row_count = 0;

  bool has_scores() const { return schema.score_column.has_value(); }
  bool has_decisions() const { return schema.decision_column.has_value(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct ParseOptions {
  char delimiter = ',';
  std::vector<std::string> truthy = {"1", "true", "t", "yes"};
  std::vector<std::string> falsy = {"0", "false", "f", "no"};
  /// Attributes with more distinct values than this are rejected as unbucketed.
  std::size_t max_distinct_values = 50;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

inline std::optional<int> parse_binary(std::string_view cell, const ParseOptions& opts) {
  cell = trim(cell);
  for (const auto& t : opts.truthy) {
    if (iequals(cell, t)) return 1;
  }
  for (const auto& f : opts.falsy) {
    if (iequals(cell, f)) return 0;
  }
  return std::nullopt;
}

inline std::optional<double> parse_score(std::string_view cell) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

inline std::string cell_context(std::size_t row, std::string_view cell) {
  return "row " + std::to_string(row) + ": '" + std::string(cell) + "'";
}

}  // namespace detail

/// Parses delimited text into a Dataset. `row` numbers in errors are 1-based
/// data rows (the header is row 0).
inline Dataset parse_csv(std::string_view bytes, const DatasetSchema& schema,
                         const ParseOptions& options = {}) {
  schema.check();
  auto rows = csv::read(bytes, options.delimiter);
  if (rows.empty()) throw Error(ErrorCode::EmptyDataset, "input has no header row");

  const auto& header = rows.front();
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) index.emplace(header[i], i);
  auto column = [&](const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw Error(ErrorCode::MissingColumn, "column '" + name + "' not found in header", name);
    return it->second;
  };

  const std::size_t label_idx = column(schema.label_column);
  std::optional<std::size_t> score_idx, decision_idx, id_idx;
  if (schema.score_column) score_idx = column(*schema.score_column);
  if (schema.decision_column) decision_idx = column(*schema.decision_column);
  if (schema.entity_id_column) id_idx = column(*schema.entity_id_column);
  std::vector<std::size_t> attr_idx;
  for (const auto& a : schema.attribute_columns) attr_idx.push_back(column(a));

  if (rows.size() == 1) throw Error(ErrorCode::EmptyDataset, "input has a header but no data rows");

  Dataset ds;
  ds.schema = schema;
  ds.records.reserve(rows.size() - 1);
  std::unordered_set<std::string> ids;
  std::vector<std::set<std::string>> distinct(attr_idx.size());

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) {
      throw Error(ErrorCode::MalformedRow,
                  "row " + std::to_string(r) + " has " + std::to_string(row.size()) + " fields, header has " +
                      std::to_string(header.size()),
                  "row " + std::to_string(r));
    }
    EntityRecord rec;
    rec.entity_id = id_idx ? row[*id_idx] : std::to_string(r);
    if (!ids.insert(rec.entity_id).second) {
      throw Error(ErrorCode::DuplicateEntityId, "duplicate entity id '" + rec.entity_id + "'", rec.entity_id);
    }

    auto label = detail::parse_binary(row[label_idx], options);
    if (!label) {
      throw Error(ErrorCode::BadLabelValue, "bad label value in column '" + schema.label_column + "'",
                  detail::cell_context(r, row[label_idx]));
    }
    rec.label = *label;

    if (decision_idx) {
      auto d = detail::parse_binary(row[*decision_idx], options);
      if (!d) {
        throw Error(ErrorCode::BadLabelValue, "bad decision value in column '" + *schema.decision_column + "'",
                    detail::cell_context(r, row[*decision_idx]));
      }
      rec.decision = *d;
    }
    if (score_idx) {
      auto s = detail::parse_score(row[*score_idx]);
      if (!s) {
        throw Error(ErrorCode::BadScoreValue, "bad score value in column '" + *schema.score_column + "'",
                    detail::cell_context(r, row[*score_idx]));
      }
      rec.score = *s;
    }
    for (std::size_t a = 0; a < attr_idx.size(); ++a) {
      const auto& cell = row[attr_idx[a]];
      std::string value = detail::trim(cell).empty() ? std::string(kUnknownGroup) : cell;
      distinct[a].insert(value);
      rec.attributes.emplace(schema.attribute_columns[a], std::move(value));
    }
    ds.records.push_back(std::move(rec));
  }

  for (std::size_t a = 0; a < attr_idx.size(); ++a) {
    if (distinct[a].size() > options.max_distinct_values) {
      const auto& name = schema.attribute_columns[a];
      throw Error(ErrorCode::TooManyDistinctValues,
                  "attribute '" + name + "' has " + std::to_string(distinct[a].size()) +
                      " distinct values (limit " + std::to_string(options.max_distinct_values) +
                      "); continuous attributes must be bucketed into ranges before auditing",
                  name);
    }
  }
  ds.row_count = ds.records.size();
  return ds;
}

/// Canonical serialization: schema columns only, in the order id, score,
/// decision, label, attributes. parse_csv(to_csv(d), d.schema) == d.
inline std::string to_csv(const Dataset& ds, char delimiter = ',') {
  const auto& s = ds.schema;
  std::vector<std::string> header;
  if (s.entity_id_column) header.push_back(*s.entity_id_column);
  if (s.score_column) header.push_back(*s.score_column);
  if (s.decision_column) header.push_back(*s.decision_column);
  header.push_back(s.label_column);
  for (const auto& a : s.attribute_columns) header.push_back(a);

  std::string out;
  csv::append_row(out, header, delimiter);
  std::vector<std::string> fields;
  for (const auto& rec : ds.records) {
    fields.clear();
    if (s.entity_id_column) fields.push_back(rec.entity_id);
    if (s.score_column) fields.push_back(format_double(rec.score.value_or(0.0)));
    if (s.decision_column) fields.push_back(rec.decision.value_or(0) ? "1" : "0");
    fields.push_back(rec.label ? "1" : "0");
    for (const auto& a : s.attribute_columns) fields.push_back(rec.attributes.at(a));
    csv::append_row(out, fields, delimiter);
  }
  return out;
}

struct ValidateOptions {
  /// Groups smaller than this get a SmallGroup warning. 1 disables the check.
  std::size_t min_group_size = 1;
};

/// Data-quality checks that do not depend on the decision rule.
inline Diagnostics validate(const Dataset& ds, const ValidateOptions& options = {}) {
  Diagnostics out;
  if (ds.records.empty()) {
    out.push_back({Severity::Error, "EmptyDataset", "", "", "", "dataset has no rows"});
    return out;
  }
  bool decisions_usable = false;
  for (const auto& rec : ds.records) {
    if (rec.score || rec.decision) {
      decisions_usable = true;
      break;
    }
  }
  if (!decisions_usable) {
    out.push_back({Severity::Error, "NoDecisionSource", "", "", "",
                   "dataset carries neither scores nor decisions"});
  }

  for (const auto& attr : ds.schema.attribute_columns) {
    struct Tally {
      std::size_t size = 0, lp = 0;
    };
    std::map<std::string, Tally> groups;
    for (const auto& rec : ds.records) {
      auto& t = groups[rec.attributes.at(attr)];
      ++t.size;
      t.lp += static_cast<std::size_t>(rec.label);
    }
    if (groups.size() == 1) {
      out.push_back({Severity::Warning, "SingleValuedAttribute", attr, groups.begin()->first, "",
                     "attribute '" + attr + "' has a single value; no disparity is computable"});
    }
    for (const auto& [group, t] : groups) {
      if (t.size < options.min_group_size) {
        out.push_back({Severity::Warning, "SmallGroup", attr, group, "",
                       "group has " + std::to_string(t.size) + " rows (minimum " +
                           std::to_string(options.min_group_size) + ")"});
      }
      if (t.lp == 0) {
        out.push_back({Severity::Warning, "UndefinedMetricAhead", attr, group, "FNR",
                       "no positive labels (LP=0); FNR will be undefined"});
      }
      if (t.lp == t.size) {
        out.push_back({Severity::Warning, "UndefinedMetricAhead", attr, group, "FPR",
                       "no negative labels (LN=0); FPR will be undefined"});
      }
    }
  }
  return out;
}

}  // namespace parityd
