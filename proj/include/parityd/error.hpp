#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace parityd {

enum class ErrorCode {
  MissingColumn,
  BadLabelValue,
  BadScoreValue,
  DuplicateEntityId,
  EmptyDataset,
  MalformedRow,
  TooManyDistinctValues,
  InvalidSchema,
  PolicyDatasetMismatch,
  InvalidPolicy,
  UnknownAttribute,
  FixedGroupAbsent,
  NoDefinedMetric,
  InvalidConfig,
  InvalidAnswer,
  AlreadyTerminal,
  NotTerminal,
  InvalidTree,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::BadLabelValue: return "BadLabelValue";
    case ErrorCode::BadScoreValue: return "BadScoreValue";
    case ErrorCode::DuplicateEntityId: return "DuplicateEntityId";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::TooManyDistinctValues: return "TooManyDistinctValues";
    case ErrorCode::InvalidSchema: return "InvalidSchema";
    case ErrorCode::PolicyDatasetMismatch: return "PolicyDatasetMismatch";
    case ErrorCode::InvalidPolicy: return "InvalidPolicy";
    case ErrorCode::UnknownAttribute: return "UnknownAttribute";
    case ErrorCode::FixedGroupAbsent: return "FixedGroupAbsent";
    case ErrorCode::NoDefinedMetric: return "NoDefinedMetric";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidAnswer: return "InvalidAnswer";
    case ErrorCode::AlreadyTerminal: return "AlreadyTerminal";
    case ErrorCode::NotTerminal: return "NotTerminal";
    case ErrorCode::InvalidTree: return "InvalidTree";
  }
  return "Unknown";
}

/// Every engine failure. `detail` carries the offending value (column name,
/// row number, group id) so callers can build structured error bodies.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string detail = {})
      : std::runtime_error(std::move(message)), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace parityd
