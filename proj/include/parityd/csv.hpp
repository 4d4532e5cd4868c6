#pragma once

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "parityd/error.hpp"

namespace parityd::csv {

/// Splits RFC-4180 style text into rows of fields. Quoted fields may contain
/// the delimiter, doubled quotes and line breaks. Accepts LF and CRLF, strips a
/// leading UTF-8 BOM and ignores blank lines.
inline std::vector<std::vector<std::string>> read(std::string_view text, char delimiter = ',') {
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  std::size_t line = 1;

  auto end_row = [&] {
    row.push_back(std::move(field));
    field.clear();
    const bool blank = row.size() == 1 && row[0].empty() && !field_was_quoted;
    if (!blank) rows.push_back(std::move(row));
    row.clear();
    field_was_quoted = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && field.empty() && !field_was_quoted) {
      in_quotes = true;
      field_was_quoted = true;
    } else if (c == delimiter) {
      row.push_back(std::move(field));
      field.clear();
      field_was_quoted = false;
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      // CRLF: the LF ends the row.
    } else if (c == '\n') {
      end_row();
      ++line;
    } else {
      field.push_back(c);
    }
  }
  if (in_quotes) {
    throw Error(ErrorCode::MalformedRow, "unterminated quoted field", "line " + std::to_string(line));
  }
  if (!field.empty() || !row.empty() || field_was_quoted) end_row();
  return rows;
}

inline bool needs_quoting(std::string_view value, char delimiter) {
  if (value.empty()) return false;
  if (value.front() == ' ' || value.back() == ' ' || value.front() == '\t' || value.back() == '\t') {
    return true;
  }
  for (char c : value) {
    if (c == delimiter || c == '"' || c == '\n' || c == '\r') return true;
  }
  return false;
}

inline void append_field(std::string& out, std::string_view value, char delimiter) {
  if (!needs_quoting(value, delimiter)) {
    out.append(value);
    return;
  }
  out.push_back('"');
  for (char c : value) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
}

inline void append_row(std::string& out, const std::vector<std::string>& fields, char delimiter) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(delimiter);
    append_field(out, fields[i], delimiter);
  }
  out.push_back('\n');
}

}  // namespace parityd::csv

namespace parityd {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace parityd
