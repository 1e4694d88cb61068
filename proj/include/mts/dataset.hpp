#pragma once

#include <Eigen/Core>

#include <charconv>
#include <fstream>
#include <istream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mts {

// Observation matrix with p rows (dimensions) and n columns (observations).
// Variance estimators divide by n-1, so n >= 2 is required.
struct Dataset {
  Eigen::MatrixXd data;
  std::string label;

  explicit Dataset(Eigen::MatrixXd values, std::string tag = {})
      : data(std::move(values)), label(std::move(tag)) {
    if (data.rows() < 1)
      throw std::invalid_argument("Dataset" + where() + ": need at least one dimension");
    if (data.cols() < 2)
      throw std::invalid_argument("Dataset" + where() + ": need at least two observations");
    if (!data.allFinite())
      throw std::invalid_argument("Dataset" + where() + ": non-finite entry");
  }

  Eigen::Index dims() const { return data.rows(); }
  Eigen::Index samples() const { return data.cols(); }

 private:
  std::string where() const { return label.empty() ? std::string{} : " '" + label + "'"; }
};

// Column-wise concatenation of datasets sharing the same dimensionality.
inline Dataset concat(std::span<const Dataset> sets, std::string label = {}) {
  if (sets.empty()) throw std::invalid_argument("concat: no datasets given");
  const Eigen::Index p = sets.front().dims();
  Eigen::Index total = 0;
  for (const Dataset& d : sets) {
    if (d.dims() != p)
      throw std::invalid_argument("concat: dimension mismatch (" + std::to_string(d.dims()) +
                                  " vs " + std::to_string(p) + ")");
    total += d.samples();
  }
  Eigen::MatrixXd m(p, total);
  Eigen::Index at = 0;
  for (const Dataset& d : sets) {
    m.middleCols(at, d.samples()) = d.data;
    at += d.samples();
  }
  return Dataset(std::move(m), std::move(label));
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Locale-independent double parse; returns false on any trailing garbage.
inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == sep) {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

}  // namespace detail

// CSV layout: one observation per row, one dimension per column, optional
// header row. Decimal points are parsed independently of the global locale.
// The result is transposed into the internal p x n orientation.
inline Dataset parse_dataset_csv(std::istream& in, const std::string& origin) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool first_content_line = true;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view sv = detail::trim(line);
    if (sv.empty()) continue;
    auto fields = detail::split_fields(sv, ',');
    std::vector<double> vals(fields.size());
    bool all_numeric = true;
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (!detail::parse_double(fields[j], vals[j])) {
        all_numeric = false;
        break;
      }
    }
    if (!all_numeric) {
      if (first_content_line) {  // header row
        first_content_line = false;
        continue;
      }
      throw std::invalid_argument(origin + ": line " + std::to_string(line_no) +
                                  " contains a non-numeric field");
    }
    if (rows.empty())
      width = vals.size();
    else if (vals.size() != width)
      throw std::invalid_argument(origin + ": line " + std::to_string(line_no) + " has " +
                                  std::to_string(vals.size()) + " fields, expected " +
                                  std::to_string(width));
    first_content_line = false;
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw std::invalid_argument(origin + ": no data rows");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(width);
  Eigen::MatrixXd m(p, n);
  for (Eigen::Index obs = 0; obs < n; ++obs)
    for (Eigen::Index dim = 0; dim < p; ++dim) m(dim, obs) = rows[obs][dim];
  return Dataset(std::move(m), origin);
}

inline Dataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open dataset file '" + path + "'");
  return parse_dataset_csv(in, path);
}

}  // namespace mts
