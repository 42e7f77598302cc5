#pragma once

#include <cstddef>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mambasod/metrics.hpp"

// CSV files are comma-separated with a header row, '.' decimals and LF endings.
// Reals are written with 17 significant digits so they reload exactly.

namespace mambasod {

inline constexpr const char* kMetricsCsvHeader = "name,mae,f_max,e_max,s_measure";
inline constexpr const char* kPrCsvHeader = "threshold,precision,recall";
inline constexpr const char* kAggregateRowName = "aggregate";

inline std::string format_real(Real v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(v));
  return buf;
}

struct MetricsRow {
  std::string name;
  Real mae = 0, f_max = 0, e_max = 0, s_measure = 0;
};

inline MetricsRow to_row(const std::string& name, const MetricsReport& r) {
  return {name, r.mae, r.f_max, r.e_max, r.s_measure};
}

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << kMetricsCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.name << ',' << format_real(r.mae) << ',' << format_real(r.f_max) << ',' << format_real(r.e_max) << ','
        << format_real(r.s_measure) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline Real parse_real(const std::string& s, const std::string& path) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw std::runtime_error(path + ": bad number '" + s + "'");
  return static_cast<Real>(v);
}

inline std::vector<std::vector<std::string>> read_csv(const std::string& path, const char* header,
                                                      std::size_t columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != header) throw std::runtime_error(path + ": unexpected header");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != columns) throw std::runtime_error(path + ": wrong column count in '" + line + "'");
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace detail

inline std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::vector<MetricsRow> rows;
  for (const auto& c : detail::read_csv(path, kMetricsCsvHeader, 5)) {
    rows.push_back({c[0], detail::parse_real(c[1], path), detail::parse_real(c[2], path),
                    detail::parse_real(c[3], path), detail::parse_real(c[4], path)});
  }
  return rows;
}

struct PrRow {
  Real threshold = 0, precision = 0, recall = 0;
};

inline void write_pr_csv(const std::string& path, const std::vector<PrecisionRecall>& curve) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << kPrCsvHeader << '\n';
  for (std::size_t k = 0; k < curve.size(); ++k) {
    out << format_real(sweep_threshold(k, curve.size())) << ',' << format_real(curve[k].precision) << ','
        << format_real(curve[k].recall) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline std::vector<PrRow> read_pr_csv(const std::string& path) {
  std::vector<PrRow> rows;
  for (const auto& c : detail::read_csv(path, kPrCsvHeader, 3)) {
    rows.push_back({detail::parse_real(c[0], path), detail::parse_real(c[1], path), detail::parse_real(c[2], path)});
  }
  return rows;
}

}  // namespace mambasod
