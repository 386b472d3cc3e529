#pragma once

// JSON and CSV persistence for reports, configs and transform metadata.
// Non-finite numbers are written as JSON null and read back as NaN; every
// writer here has a matching reader.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mage/estimates.hpp"
#include "mage/legendre.hpp"
#include "mage/solvers.hpp"

namespace mage {

using json = nlohmann::ordered_json;

namespace detail {

inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double num_at(const json& j, const char* key, double fallback = kNaN) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<double>();
}

inline std::string csv_double(double v) { return std::isnan(v) ? "nan" : fmt_double(v == 0.0 ? 0.0 : v); }

inline double parse_csv_double(const std::string& s) {
  if (s == "nan") return kNaN;
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw Error("csv: bad number '" + s + "'");
  return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// JSON conversions, found by nlohmann through ADL.

inline void to_json(json& j, const Grid& g) {
  j = {{"x0", g.x0}, {"y0", g.y0}, {"hx", g.hx}, {"hy", g.hy}, {"nx", g.nx}, {"ny", g.ny}};
}
inline void from_json(const json& j, Grid& g) {
  g = Grid{j.at("x0").get<double>(), j.at("y0").get<double>(), j.at("hx").get<double>(),
           j.at("hy").get<double>(), j.at("nx").get<int>(),     j.at("ny").get<int>()};
  g.validate();
}

inline void to_json(json& j, const SolverConfig& c) {
  j = {{"max_outer", c.max_outer},       {"max_newton", c.max_newton}, {"tol_residual", c.tol_residual},
       {"relaxation", c.relaxation},     {"eps_pos", c.eps_pos},       {"eps_cvx", c.eps_cvx},
       {"linear_tol", c.linear_tol}};
}
/// Missing keys keep their defaults.
inline void from_json(const json& j, SolverConfig& c) {
  c = SolverConfig{};
  if (j.contains("max_outer")) c.max_outer = j.at("max_outer").get<int>();
  if (j.contains("max_newton")) c.max_newton = j.at("max_newton").get<int>();
  c.tol_residual = detail::num_at(j, "tol_residual", c.tol_residual);
  c.relaxation = detail::num_at(j, "relaxation", c.relaxation);
  c.eps_pos = detail::num_at(j, "eps_pos", c.eps_pos);
  c.eps_cvx = detail::num_at(j, "eps_cvx", c.eps_cvx);
  c.linear_tol = detail::num_at(j, "linear_tol", c.linear_tol);
  c.validate();
}

/// Wall time is left out so that identical runs serialize identically.
inline void to_json(json& j, const SolveReport& r) {
  json hist = json::array();
  for (double v : r.history) hist.push_back(detail::num(v));
  j = {{"converged", r.converged},
       {"iterations", r.iterations},
       {"inner_iterations", r.inner_iterations},
       {"residual", detail::num(r.residual)},
       {"res_div", detail::num(r.res_div)},
       {"res_ma", detail::num(r.res_ma)},
       {"res_nondiv", detail::num(r.res_nondiv)},
       {"det", r.has_det ? json{{"lambda", r.det.lambda}, {"Lambda", r.det.Lambda}} : json(nullptr)},
       {"relaxation", detail::num(r.relaxation)},
       {"history", hist},
       {"message", r.message}};
}
inline void from_json(const json& j, SolveReport& r) {
  r = SolveReport{};
  r.converged = j.at("converged").get<bool>();
  r.iterations = j.at("iterations").get<int>();
  r.inner_iterations = j.value("inner_iterations", 0);
  r.residual = detail::num_at(j, "residual");
  r.res_div = detail::num_at(j, "res_div");
  r.res_ma = detail::num_at(j, "res_ma");
  r.res_nondiv = detail::num_at(j, "res_nondiv");
  if (j.contains("det") && !j.at("det").is_null()) {
    r.has_det = true;
    r.det.lambda = j.at("det").at("lambda").get<double>();
    r.det.Lambda = j.at("det").at("Lambda").get<double>();
  }
  r.relaxation = detail::num_at(j, "relaxation");
  for (const json& v : j.at("history")) r.history.push_back(v.is_null() ? kNaN : v.get<double>());
  r.message = j.value("message", "");
}

inline void to_json(json& j, const EstimateReport& r) {
  json trace = json::array();
  for (const TraceEntry& t : r.trace)
    trace.push_back({{"h", t.h}, {"lhs", detail::num(t.lhs)}, {"rhs", detail::num(t.rhs)}, {"c_emp", detail::num(t.c_emp)}});
  json q = json::object();
  for (const auto& [k, v] : r.quantities) q[k] = detail::num(v);
  j = {{"name", r.name},   {"digest", r.digest},         {"lhs", detail::num(r.lhs)},
       {"rhs", detail::num(r.rhs)}, {"c_emp", detail::num(r.c_emp)}, {"slope", detail::num(r.slope)},
       {"pass", r.pass},   {"drift", detail::num(r.drift)}, {"trace", trace},
       {"quantities", q},  {"message", r.message}};
}
inline void from_json(const json& j, EstimateReport& r) {
  r = EstimateReport{};
  r.name = j.at("name").get<std::string>();
  r.digest = j.value("digest", "");
  r.lhs = detail::num_at(j, "lhs");
  r.rhs = detail::num_at(j, "rhs");
  r.c_emp = detail::num_at(j, "c_emp");
  r.slope = detail::num_at(j, "slope");
  r.pass = j.at("pass").get<bool>();
  r.drift = detail::num_at(j, "drift");
  if (j.contains("trace"))
    for (const json& t : j.at("trace"))
      r.trace.push_back({t.at("h").get<double>(), detail::num_at(t, "lhs"), detail::num_at(t, "rhs"), detail::num_at(t, "c_emp")});
  if (j.contains("quantities"))
    for (const auto& [k, v] : j.at("quantities").items()) r.quantities.emplace_back(k, v.is_null() ? kNaN : v.get<double>());
  r.message = j.value("message", "");
}

/// Sidecar describing a transform: the fields themselves go to grid files.
inline json transform_sidecar(const TransformResult& t, const IdentityReport& ids, double involution_error) {
  json rows = json::array();
  for (const auto& r : t.row_range) rows.push_back({r[0], r[1]});
  json res = json::object();
  for (std::size_t q = 0; q < ids.residual.size(); ++q) res[IdentityReport::kNames[q]] = detail::num(ids.residual[q]);
  return {{"source", t.source}, {"star", t.star()},          {"xi_lo", t.xi_lo},           {"xi_hi", t.xi_hi},
          {"row_range", rows},  {"identities", res},          {"involution_error", detail::num(involution_error)}};
}

// ---------------------------------------------------------------------------
// CSV tables.

inline constexpr const char* kSummaryHeader = "name,lhs,rhs,C_emp,slope,pass";

inline void write_summary_csv(std::ostream& os, const std::vector<EstimateReport>& rows) {
  os << kSummaryHeader << '\n';
  for (const EstimateReport& r : rows) {
    if (r.name.find(',') != std::string::npos) throw Error("summary: comma in row name '" + r.name + "'");
    os << r.name << ',' << detail::csv_double(r.lhs) << ',' << detail::csv_double(r.rhs) << ','
       << detail::csv_double(r.c_emp) << ',' << detail::csv_double(r.slope) << ',' << (r.pass ? "true" : "false") << '\n';
  }
}

inline std::vector<EstimateReport> read_summary_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kSummaryHeader) throw Error("summary: missing header");
  std::vector<EstimateReport> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = detail::split_csv(line);
    if (c.size() != 6 || (c[5] != "true" && c[5] != "false")) throw Error("summary: malformed row '" + line + "'");
    EstimateReport r;
    r.name = c[0];
    r.lhs = detail::parse_csv_double(c[1]);
    r.rhs = detail::parse_csv_double(c[2]);
    r.c_emp = detail::parse_csv_double(c[3]);
    r.slope = detail::parse_csv_double(c[4]);
    r.pass = c[5] == "true";
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_history_csv(std::ostream& os, const std::vector<double>& history) {
  os << "iteration,residual\n";
  for (std::size_t k = 0; k < history.size(); ++k) os << k + 1 << ',' << detail::csv_double(history[k]) << '\n';
}

inline std::vector<double> read_history_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "iteration,residual") throw Error("history: missing header");
  std::vector<double> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = detail::split_csv(line);
    if (c.size() != 2) throw Error("history: malformed row '" + line + "'");
    out.push_back(detail::parse_csv_double(c[1]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files.

namespace detail {
inline std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot write " + p.string());
  return os;
}
inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw Error("cannot read " + p.string());
  return is;
}
}  // namespace detail

inline void save_json(const std::filesystem::path& p, const json& j) { detail::open_out(p) << j.dump(2) << '\n'; }

inline json load_json(const std::filesystem::path& p) {
  std::ifstream is = detail::open_in(p);
  return json::parse(is);
}

inline void save_grid(const std::filesystem::path& p, const GridFunction& f) {
  std::ofstream os = detail::open_out(p);
  write_grid(os, f);
}

inline GridFunction load_grid(const std::filesystem::path& p) {
  std::ifstream is = detail::open_in(p);
  return read_grid(is);
}

}  // namespace mage
