#ifndef AQR_IO_HPP
#define AQR_IO_HPP

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "aqr/backfit.hpp"
#include "aqr/bench.hpp"
#include "aqr/numeric.hpp"

namespace aqr {

using json = nlohmann::json;

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// ---------------------------------------------------------------- fit JSON

inline json fit_to_json(const AdditiveFit& fit) {
  json j;
  j["method"] = std::string(to_string(fit.method));
  j["alpha"] = fit.alpha;
  j["bandwidths"] = fit.bandwidths;
  json intervals = json::array();
  for (const auto& iv : fit.intervals) intervals.push_back({iv.lo, iv.hi});
  j["intervals"] = intervals;
  j["grids"] = fit.grids;
  j["components"] = fit.components;
  j["m0"] = fit.m0;
  j["iterations_run"] = fit.iterations_run;
  j["converged"] = fit.converged;
  return j;
}

inline AdditiveFit fit_from_json(const json& j) {
  try {
    AdditiveFit fit;
    fit.method = method_from_string(j.at("method").get<std::string>());
    fit.alpha = j.at("alpha").get<double>();
    fit.bandwidths = j.at("bandwidths").get<std::vector<double>>();
    for (const auto& iv : j.at("intervals")) fit.intervals.push_back({iv.at(0).get<double>(), iv.at(1).get<double>()});
    fit.grids = j.at("grids").get<std::vector<std::vector<double>>>();
    fit.components = j.at("components").get<std::vector<std::vector<double>>>();
    fit.m0 = j.at("m0").get<double>();
    fit.iterations_run = j.at("iterations_run").get<int>();
    fit.converged = j.at("converged").get<bool>();
    const std::size_t d = fit.components.size();
    if (fit.grids.size() != d || fit.bandwidths.size() != d || fit.intervals.size() != d)
      throw ParseError("fit JSON: inconsistent component count");
    fit.dead_points.resize(d);
    return fit;
  } catch (const json::exception& e) {
    throw ParseError(std::string("fit JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------- CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.remove_suffix(1);
    while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
    cells.emplace_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

/// Comma-separated table with a header row; every row must match the header width.
inline CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (table.header.empty()) {
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size())
      throw ParseError("CSV line " + std::to_string(line_no) + ": expected " +
                       std::to_string(table.header.size()) + " columns, found " +
                       std::to_string(cells.size()));
    table.rows.push_back(std::move(cells));
  }
  if (table.header.empty()) throw ParseError("CSV: missing header row");
  return table;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_csv(in);
}

/// Numeric view of a CSV table; errors carry 1-based line and column.
inline Matrix numeric_cells(const CsvTable& table) {
  Matrix m(table.rows.size(), table.header.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      auto v = parse_double(table.rows[r][c]);
      if (!v)
        throw ParseError("CSV line " + std::to_string(r + 2) + ", column " + std::to_string(c + 1) +
                         ": non-numeric cell '" + table.rows[r][c] + "'");
      m(r, c) = *v;
    }
  return m;
}

/// Dataset from a CSV whose first column is the response; intervals default
/// to the observed range of each covariate.
inline Dataset dataset_from_csv(const CsvTable& table,
                                const std::vector<Interval>& intervals = {}) {
  if (table.header.size() < 2) throw ParseError("CSV: need a response and at least one covariate");
  if (table.rows.empty()) throw ParseError("CSV: no data rows");
  const Matrix m = numeric_cells(table);
  const std::size_t d = m.cols() - 1;
  Dataset data;
  data.y = m.column(0);
  data.x = Matrix(m.rows(), d);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < d; ++j) data.x(i, j) = m(i, j + 1);
  if (!intervals.empty()) {
    if (intervals.size() != d) throw std::invalid_argument("intervals: one per covariate required");
    data.intervals = intervals;
  } else {
    for (std::size_t j = 0; j < d; ++j) {
      const auto col = data.x.column(j);
      const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
      if (!(*lo < *hi))
        throw std::invalid_argument("covariate " + std::to_string(j + 1) +
                                    " is constant; pass explicit intervals");
      data.intervals.push_back({*lo, *hi});
    }
  }
  return data;
}

inline void write_dataset_csv(std::ostream& out, const Dataset& data) {
  out << "y";
  for (std::size_t j = 0; j < data.dimension(); ++j) out << ",x" << j + 1;
  out << "\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << format_double(data.y[i]);
    for (std::size_t j = 0; j < data.dimension(); ++j) out << "," << format_double(data.x(i, j));
    out << "\n";
  }
}

/// Component curves: one row per (component, grid node).
inline void write_curves_csv(std::ostream& out, const AdditiveFit& fit) {
  out << "component,x,value\n";
  for (std::size_t j = 0; j < fit.dimension(); ++j)
    for (std::size_t g = 0; g < fit.grids[j].size(); ++g)
      out << j + 1 << "," << format_double(fit.grids[j][g]) << ","
          << format_double(fit.components[j][g]) << "\n";
}

inline void write_records_csv(std::ostream& out, const BenchReport& report) {
  out << "method,alpha,h,rep,ise\n";
  for (const auto& r : report.records)
    out << to_string(r.method) << "," << format_double(r.alpha) << "," << format_double(r.h) << ","
        << r.rep << "," << format_double(r.ise) << "\n";
}

inline void write_mise_csv(std::ostream& out, const BenchReport& report) {
  out << "method,alpha,h,mise\n";
  for (const auto& c : report.mise)
    out << to_string(c.method) << "," << format_double(c.alpha) << "," << format_double(c.h) << ","
        << format_double(c.mise) << "\n";
}

inline void write_qq_csv(std::ostream& out, const BenchReport& report) {
  out << "method,component,point,alpha,h,theoretical,sample\n";
  for (const auto& s : report.qq)
    for (const auto& p : s.points)
      out << to_string(s.request.method) << "," << s.request.component + 1 << ","
          << format_double(s.request.point) << "," << format_double(s.request.alpha) << ","
          << format_double(s.request.h) << "," << format_double(p.theoretical) << ","
          << format_double(p.sample) << "\n";
}

// ---------------------------------------------------------------- summaries

inline json config_to_json(const BenchConfig& c) {
  json methods = json::array();
  for (Method m : c.methods) methods.push_back(std::string(to_string(m)));
  return {{"n", c.n},
          {"design", c.correlated ? "correlated" : "uncorrelated"},
          {"alpha_levels", c.alpha_levels},
          {"replications", c.replications},
          {"bandwidth_grid", c.bandwidth_grid},
          {"methods", methods},
          {"seed", c.seed},
          {"eval_points", c.eval_points},
          {"grid_size", c.fit.grid_size},
          {"max_cycles", c.fit.max_cycles}};
}

/// MISE table: per method, optimal-bandwidth MISE for each alpha level.
inline json table1_json(const BenchReport& report) {
  json rows = json::array();
  for (Method m : report.config.methods) {
    json mise = json::array();
    json hs = json::array();
    for (double a : report.config.alpha_levels) {
      const auto* cell = report.optimal_for(m, a);
      mise.push_back(cell->mise);
      hs.push_back(cell->h);
    }
    rows.push_back({{"method", std::string(to_string(m))},
                    {"bandwidth_reference",
                     std::string(to_string(report.optimal_for(m, report.config.alpha_levels.front())->reference))},
                    {"mise", mise},
                    {"h", hs}});
  }
  return {{"config", config_to_json(report.config)},
          {"failed_replications", report.failed_replications.size()},
          {"table", rows}};
}

inline json table2_json(const BenchReport& report) {
  json rows = json::array();
  for (const auto& d : report.diffs)
    rows.push_back({{"alpha", d.alpha},
                    {"first", std::string(to_string(d.first))},
                    {"second", std::string(to_string(d.second))},
                    {"h_first", d.h_first},
                    {"h_second", d.h_second},
                    {"diff", d.stats.mean},
                    {"se", d.stats.se}});
  return {{"config", config_to_json(report.config)},
          {"failed_replications", report.failed_replications.size()},
          {"table", rows}};
}

inline json qq_json(const BenchReport& report) {
  json series = json::array();
  for (const auto& s : report.qq) {
    json pts = json::array();
    for (const auto& p : s.points) pts.push_back({p.theoretical, p.sample});
    series.push_back({{"method", std::string(to_string(s.request.method))},
                      {"component", s.request.component + 1},
                      {"point", s.request.point},
                      {"alpha", s.request.alpha},
                      {"h", s.request.h},
                      {"values", s.values},
                      {"correlation", s.correlation},
                      {"pairs", pts}});
  }
  return {{"config", config_to_json(report.config)}, {"series", series}};
}

inline json sweep_json(const BenchReport& report) {
  json best = json::array();
  for (Method m : report.config.methods)
    for (double a : report.config.alpha_levels) {
      double h_best = 0.0;
      double v_best = std::numeric_limits<double>::infinity();
      for (const auto& c : report.mise)
        if (c.method == m && c.alpha == a && c.mise < v_best) {
          v_best = c.mise;
          h_best = c.h;
        }
      best.push_back({{"method", std::string(to_string(m))}, {"alpha", a}, {"h", h_best}, {"mise", v_best}});
    }
  return {{"config", config_to_json(report.config)}, {"optimal", best}};
}

}  // namespace aqr

#endif  // AQR_IO_HPP
