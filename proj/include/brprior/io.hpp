#pragma once

#include "brprior/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace brprior {

/// A numeric CSV table with a header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::ptrdiff_t column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<std::ptrdiff_t>(j);
    return -1;
  }
};

namespace detail {
inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}
}  // namespace detail

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "'");
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_commas(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                       " fields");
    std::vector<double> row;
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw UsageError(path + ":" + std::to_string(lineno) + ": not a number: '" + c + "'");
      }
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty() || t.rows.empty()) throw UsageError("'" + path + "' has no data rows");
  return t;
}

/// Design matrix from a CSV whose every column is a covariate.
inline Matrix read_design_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  Matrix x(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t j = 0; j < t.header.size(); ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.rows[i][j];
  return x;
}

/// Dataset from a CSV. Response columns are `y` or `y1`, `y2`, ...;
/// covariate columns start with `x`; an optional `stratum` column holds
/// 1-based stratum labels.
inline Dataset read_data_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  std::vector<std::size_t> ycols, xcols;
  std::ptrdiff_t scol = -1;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    const std::string& h = t.header[j];
    if (h == "stratum") scol = static_cast<std::ptrdiff_t>(j);
    else if (!h.empty() && h[0] == 'y') ycols.push_back(j);
    else if (!h.empty() && h[0] == 'x') xcols.push_back(j);
    else throw UsageError(path + ": unrecognized column '" + h + "' (use y*, x*, stratum)");
  }
  if (ycols.empty()) throw UsageError(path + ": no response column (y or y1, y2, ...)");
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  Dataset d;
  d.responses.resize(n, static_cast<Eigen::Index>(ycols.size()));
  if (!xcols.empty()) d.covariates = Matrix(n, static_cast<Eigen::Index>(xcols.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < ycols.size(); ++j) d.responses(i, static_cast<Eigen::Index>(j)) = row[ycols[j]];
    for (std::size_t j = 0; j < xcols.size(); ++j) (*d.covariates)(i, static_cast<Eigen::Index>(j)) = row[xcols[j]];
    if (scol >= 0) {
      const double s = row[static_cast<std::size_t>(scol)];
      if (s < 1 || s != std::floor(s)) throw UsageError(path + ": stratum labels must be integers >= 1");
      d.strata.push_back(static_cast<std::size_t>(s) - 1);
    }
  }
  d.validate();
  return d;
}

}  // namespace brprior
