#pragma once

// Minimal RFC-4180-ish CSV reading/writing. Quoted fields may contain commas
// and doubled quotes; embedded newlines are not supported.

#include <charconv>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "metapop/core.hpp"

namespace metapop::csv {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    char c = line[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          field.push_back('"');
          ++k;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back(trim(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  out.emplace_back(trim(field));
  return out;
}

inline std::string escape(std::string_view s) {
  if (s.find_first_of(",\"") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  s = trim(s);
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  double v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

/// Reads a header line and checks it against the expected column names.
/// Returns false when the stream is empty.
inline bool expect_header(std::istream& in, std::string_view expected, std::string_view what) {
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto got = split(line);
    auto want = split(expected);
    if (got != want)
      throw Error(std::string(what) + ": unexpected header '" + std::string(trim(line)) +
                  "', expected '" + std::string(expected) + "'");
    return true;
  }
  return false;
}

/// Iterates data rows after the header, skipping blank lines.
/// The callback receives (1-based line number, fields).
template <typename Fn>
void for_each_row(std::istream& in, std::string_view header, std::string_view what, Fn&& fn) {
  if (!expect_header(in, header, what)) return;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    fn(line_no, split(line));
  }
}

}  // namespace metapop::csv
