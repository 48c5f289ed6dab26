#pragma once

// CSV ingestion and number formatting shared by the command-line tools.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lawpal/errors.hpp"
#include "lawpal/rand_kit.hpp"

namespace lawpal {

/// Contiguous incidence series y_1..y_T.
struct IncidenceSeries {
  std::vector<Count> y;

  int T() const { return static_cast<int>(y.size()); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline long long parse_integer(std::string_view field, const std::string& what, int line) {
  field = trim(field);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ValidationError("line " + std::to_string(line) + ": " + what + " is not an integer: '" + std::string(field) + "'");
  }
  return v;
}

}  // namespace detail

/// Parses a `t,y` CSV: header required, t contiguous from 1, y >= 0.
inline IncidenceSeries parse_series(std::istream& in) {
  std::string line;
  int lineno = 0;
  IncidenceSeries out;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view v = line;
    if (lineno == 1 && v.size() >= 3 && v.substr(0, 3) == "\xEF\xBB\xBF") v.remove_prefix(3);
    v = detail::trim(v);
    if (v.empty()) continue;
    if (!header) {
      const auto comma = v.find(',');
      if (comma == std::string_view::npos || detail::trim(v.substr(0, comma)) != "t" ||
          detail::trim(v.substr(comma + 1)) != "y") {
        throw ValidationError("series CSV must start with the header 't,y'");
      }
      header = true;
      continue;
    }
    const auto comma = v.find(',');
    if (comma == std::string_view::npos || v.find(',', comma + 1) != std::string_view::npos) {
      throw ValidationError("line " + std::to_string(lineno) + ": expected two columns");
    }
    const long long t = detail::parse_integer(v.substr(0, comma), "t", lineno);
    const long long y = detail::parse_integer(v.substr(comma + 1), "y", lineno);
    if (t != static_cast<long long>(out.y.size()) + 1) {
      throw ValidationError("line " + std::to_string(lineno) + ": t must be contiguous from 1 (got " + std::to_string(t) + ")");
    }
    if (y < 0) throw ValidationError("line " + std::to_string(lineno) + ": negative count");
    out.y.push_back(static_cast<Count>(y));
  }
  if (!header) throw ValidationError("series CSV is empty");
  if (out.y.empty()) throw ValidationError("series CSV has no rows");
  return out;
}

inline IncidenceSeries load_series(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open series file '" + path + "'");
  return parse_series(in);
}

inline void write_series(std::ostream& out, const std::vector<Count>& y) {
  out << "t,y\n";
  for (std::size_t k = 0; k < y.size(); ++k) out << (k + 1) << ',' << y[k] << '\n';
}

/// 17 significant digits: round-trips every double.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace lawpal
