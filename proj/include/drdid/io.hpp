#pragma once

// CSV ingestion. Panel files: id,y0,y1,d,x1..xk. Cross-section files:
// id,y,post,d,x1..xk. A constant column is prepended to the covariates.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "drdid/data.hpp"
#include "drdid/error.hpp"
#include "drdid/numkit.hpp"

namespace drdid {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based file lines of each row
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_number(const std::string& field, std::size_t line, const std::string& column) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (field.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ", column '" + column +
                                           "': cannot parse '" + field + "' as a finite number");
  }
  return v;
}

inline std::size_t column_index(const CsvTable& t, std::string_view name) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw Error(ErrorKind::MissingColumn, "required column '" + std::string(name) + "' not found");
  return static_cast<std::size_t>(it - t.header.begin());
}

// Columns named x<digits>, ordered by their number.
inline std::vector<std::size_t> covariate_columns(const CsvTable& t) {
  std::vector<std::pair<long, std::size_t>> found;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    const std::string& h = t.header[j];
    if (h.size() < 2 || h[0] != 'x') continue;
    if (!std::all_of(h.begin() + 1, h.end(), [](char c) { return c >= '0' && c <= '9'; })) continue;
    found.emplace_back(std::stol(h.substr(1)), j);
  }
  std::sort(found.begin(), found.end());
  std::vector<std::size_t> out;
  for (const auto& [num, j] : found) out.push_back(j);
  return out;
}

inline double parse_binary(const std::string& field, std::size_t line, const std::string& column) {
  const double v = parse_number(field, line, column);
  if (v != 0.0 && v != 1.0) {
    throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ", column '" + column +
                                           "': value " + field + " is not 0 or 1");
  }
  return v;
}

}  // namespace detail

inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                             std::to_string(t.header.size()) + " fields, found " +
                                             std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(line_no);
  }
  if (t.header.empty()) throw Error(ErrorKind::ParseError, "empty input: no header row");
  return t;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ParseError, "cannot open '" + path + "'");
  return read_csv(in);
}

struct LoadSummary {
  std::vector<std::string> ids;
  std::vector<std::string> covariates;
  std::size_t rows = 0;
  std::size_t treated = 0;
  std::size_t controls = 0;
};

namespace detail {

struct Common {
  Vector d;
  Matrix x;
  LoadSummary summary;
};

inline Common load_common(const CsvTable& t, std::string_view d_name) {
  const std::size_t id_col = column_index(t, "id");
  const std::size_t d_col = column_index(t, d_name);
  const auto x_cols = covariate_columns(t);
  const std::size_t n = t.rows.size();
  Common c{Vector(n), Matrix(n, 1 + x_cols.size()), {}};
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = t.rows[i];
    const std::size_t line = t.line_numbers[i];
    if (!seen.insert(row[id_col]).second) {
      throw Error(ErrorKind::DuplicateId, "line " + std::to_string(line) + ": id '" + row[id_col] + "' repeats");
    }
    c.summary.ids.push_back(row[id_col]);
    c.d[i] = parse_binary(row[d_col], line, std::string(d_name));
    c.x(i, 0) = 1.0;
    for (std::size_t j = 0; j < x_cols.size(); ++j) {
      c.x(i, 1 + j) = parse_number(row[x_cols[j]], line, t.header[x_cols[j]]);
    }
    (c.d[i] == 1.0 ? c.summary.treated : c.summary.controls) += 1;
  }
  for (std::size_t j : x_cols) c.summary.covariates.push_back(t.header[j]);
  c.summary.rows = n;
  return c;
}

}  // namespace detail

inline PanelDataset load_panel_csv(const CsvTable& t, LoadSummary* summary = nullptr) {
  const std::size_t y0_col = detail::column_index(t, "y0");
  const std::size_t y1_col = detail::column_index(t, "y1");
  detail::Common c = detail::load_common(t, "d");
  const std::size_t n = t.rows.size();
  Vector y0(n), y1(n);
  for (std::size_t i = 0; i < n; ++i) {
    y0[i] = detail::parse_number(t.rows[i][y0_col], t.line_numbers[i], "y0");
    y1[i] = detail::parse_number(t.rows[i][y1_col], t.line_numbers[i], "y1");
  }
  if (summary) *summary = c.summary;
  return {std::move(y0), std::move(y1), std::move(c.d), std::move(c.x)};
}

inline PanelDataset load_panel_csv(const std::string& path, LoadSummary* summary = nullptr) {
  return load_panel_csv(read_csv_file(path), summary);
}

inline RcDataset load_rc_csv(const CsvTable& t, LoadSummary* summary = nullptr) {
  const std::size_t y_col = detail::column_index(t, "y");
  const std::size_t post_col = detail::column_index(t, "post");
  detail::Common c = detail::load_common(t, "d");
  const std::size_t n = t.rows.size();
  Vector y(n), post(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = detail::parse_number(t.rows[i][y_col], t.line_numbers[i], "y");
    post[i] = detail::parse_binary(t.rows[i][post_col], t.line_numbers[i], "post");
  }
  if (summary) *summary = c.summary;
  return {std::move(y), std::move(post), std::move(c.d), std::move(c.x)};
}

inline RcDataset load_rc_csv(const std::string& path, LoadSummary* summary = nullptr) {
  return load_rc_csv(read_csv_file(path), summary);
}

}  // namespace drdid
