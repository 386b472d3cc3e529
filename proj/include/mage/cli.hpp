#pragma once

// Experiment plumbing behind the `mage` executable: the published config
// schema and its validator, config ingestion, the commands, and the
// convergence study. Every command writes into one output directory; all
// run-dependent data (timestamps, wall time) is confined to metadata.json.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mage/io.hpp"
#include "mage/suite.hpp"

namespace mage {

namespace fs = std::filesystem;

enum ExitCode : int { kExitPass = 0, kExitFail = 1, kExitConfig = 2 };

/// Bad configuration: wrong shape, wrong values, unreadable file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Schema.

inline const json& config_schema() {
  static const json schema = json::parse(R"({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "mage experiment config",
  "type": "object",
  "required": ["command"],
  "additionalProperties": false,
  "definitions": {
    "interval": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    "point": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    "expr": {"type": "string", "minLength": 1},
    "fields": {
      "type": "object",
      "additionalProperties": false,
      "properties": {"u": {"$ref": "#/definitions/expr"}, "w": {"$ref": "#/definitions/expr"},
                     "v": {"$ref": "#/definitions/expr"}}
    },
    "levels": {"type": "array", "items": {"type": "integer", "minimum": 5}, "minItems": 2}
  },
  "properties": {
    "command": {"enum": ["transform", "solve-quasilinear", "solve-fourth-order", "solve-ma", "verify", "estimate",
                         "bernstein"]},
    "theta": {"type": "number", "minimum": 0, "maximum": 1},
    "grid": {
      "type": "object",
      "required": ["nx", "ny"],
      "additionalProperties": false,
      "properties": {"nx": {"type": "integer", "minimum": 5}, "ny": {"type": "integer", "minimum": 5}}
    },
    "domain": {
      "type": "object",
      "required": ["x", "y"],
      "additionalProperties": false,
      "properties": {"x": {"$ref": "#/definitions/interval"}, "y": {"$ref": "#/definitions/interval"}}
    },
    "u": {"$ref": "#/definitions/expr"},
    "rho": {"$ref": "#/definitions/expr"},
    "rhs": {
      "type": "object",
      "required": ["kind"],
      "additionalProperties": false,
      "properties": {
        "kind": {"enum": ["zero", "analytic", "divform", "plaplacian"]},
        "f": {"$ref": "#/definitions/expr"},
        "g1": {"$ref": "#/definitions/expr"},
        "g2": {"$ref": "#/definitions/expr"},
        "h": {"$ref": "#/definitions/expr"},
        "p": {"type": "number", "minimum": 1},
        "f0": {"$ref": "#/definitions/expr"}
      }
    },
    "boundary": {"$ref": "#/definitions/fields"},
    "exact": {"$ref": "#/definitions/fields"},
    "tolerance": {"type": "number", "exclusiveMinimum": 0},
    "solver": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "max_outer": {"type": "integer", "minimum": 1},
        "max_newton": {"type": "integer", "minimum": 1},
        "tol_residual": {"type": "number", "exclusiveMinimum": 0},
        "relaxation": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "eps_pos": {"type": "number", "exclusiveMinimum": 0},
        "eps_cvx": {"type": "number", "exclusiveMinimum": 0},
        "linear_tol": {"type": "number", "exclusiveMinimum": 0}
      }
    },
    "estimates": {
      "type": "array",
      "minItems": 1,
      "items": {
        "type": "object",
        "required": ["kind"],
        "additionalProperties": false,
        "properties": {
          "kind": {"enum": ["det_bounds", "gradient_energy", "laplacian_lp", "sobolev", "moser", "c2"]},
          "name": {"type": "string", "minLength": 1},
          "center": {"$ref": "#/definitions/point"},
          "radius": {"type": "number", "exclusiveMinimum": 0},
          "field": {"$ref": "#/definitions/expr"},
          "alpha": {"type": "number", "exclusiveMinimum": 3},
          "p": {"type": "number", "minimum": 1},
          "q": {"type": "number", "exclusiveMinimum": 0},
          "p0": {"type": "number", "minimum": 1},
          "chi": {"type": "number", "exclusiveMinimum": 2},
          "bumps": {"type": "integer", "minimum": 1},
          "seed": {"type": "integer", "minimum": 0},
          "a11": {"$ref": "#/definitions/expr"},
          "a12": {"$ref": "#/definitions/expr"},
          "a22": {"$ref": "#/definitions/expr"},
          "lambda": {"$ref": "#/definitions/expr"},
          "d": {"$ref": "#/definitions/expr"},
          "c": {"$ref": "#/definitions/expr"},
          "f": {"$ref": "#/definitions/expr"},
          "levels": {"$ref": "#/definitions/levels"},
          "drift": {"type": "number", "exclusiveMinimum": 0}
        }
      }
    },
    "bernstein": {
      "type": "object",
      "required": ["radii"],
      "additionalProperties": false,
      "properties": {
        "radii": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2},
        "center": {"$ref": "#/definitions/point"},
        "p": {"type": "number", "exclusiveMinimum": 0},
        "q": {"type": "number", "exclusiveMinimum": 0}
      }
    },
    "suite": {"enum": ["core"]},
    "seed": {"type": "integer", "minimum": 0},
    "output": {"type": "string", "minLength": 1}
  }
})");
  return schema;
}

struct SchemaIssue {
  std::string pointer;  ///< JSON pointer of the offending value ("" for the root)
  std::string message;
};

namespace detail {

inline std::string kind_of(const json& v) {
  if (v.is_null()) return "null";
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer() || v.is_number_unsigned()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  return "object";
}

inline bool has_type(const json& v, const std::string& t) {
  if (t == "number") return v.is_number();
  if (t == "integer")
    return v.is_number_integer() || v.is_number_unsigned() ||
           (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
  return kind_of(v) == t;
}

/// The supported subset of draft-07: $ref (local definitions), type, enum,
/// minimum/maximum/exclusiveMinimum/exclusiveMaximum, minLength,
/// minItems/maxItems/items, required/properties/additionalProperties.
inline void check_schema(const json& s, const json& root, const json& v, const std::string& ptr,
                         std::vector<SchemaIssue>& out) {
  if (s.contains("$ref")) {
    const std::string ref = s.at("$ref").get<std::string>();
    const std::string prefix = "#/definitions/";
    if (ref.rfind(prefix, 0) != 0) throw Error("schema: unsupported $ref " + ref);
    check_schema(root.at("definitions").at(ref.substr(prefix.size())), root, v, ptr, out);
    return;
  }
  if (s.contains("type") && !has_type(v, s.at("type").get<std::string>())) {
    out.push_back({ptr, "expected " + s.at("type").get<std::string>() + ", got " + kind_of(v)});
    return;
  }
  if (s.contains("enum")) {
    bool found = false;
    for (const json& e : s.at("enum")) found = found || e == v;
    if (!found) {
      out.push_back({ptr, "value " + v.dump() + " is not one of " + s.at("enum").dump()});
      return;
    }
  }
  if (v.is_number()) {
    const double x = v.get<double>();
    if (s.contains("minimum") && x < s.at("minimum").get<double>())
      out.push_back({ptr, v.dump() + " is below minimum " + s.at("minimum").dump()});
    if (s.contains("maximum") && x > s.at("maximum").get<double>())
      out.push_back({ptr, v.dump() + " exceeds maximum " + s.at("maximum").dump()});
    if (s.contains("exclusiveMinimum") && !(x > s.at("exclusiveMinimum").get<double>()))
      out.push_back({ptr, v.dump() + " must exceed " + s.at("exclusiveMinimum").dump()});
    if (s.contains("exclusiveMaximum") && !(x < s.at("exclusiveMaximum").get<double>()))
      out.push_back({ptr, v.dump() + " must be below " + s.at("exclusiveMaximum").dump()});
  }
  if (v.is_string() && s.contains("minLength") && v.get<std::string>().size() < s.at("minLength").get<std::size_t>())
    out.push_back({ptr, "string is shorter than " + s.at("minLength").dump()});
  if (v.is_array()) {
    if (s.contains("minItems") && v.size() < s.at("minItems").get<std::size_t>())
      out.push_back({ptr, "needs at least " + s.at("minItems").dump() + " items, got " + std::to_string(v.size())});
    if (s.contains("maxItems") && v.size() > s.at("maxItems").get<std::size_t>())
      out.push_back({ptr, "allows at most " + s.at("maxItems").dump() + " items, got " + std::to_string(v.size())});
    if (s.contains("items"))
      for (std::size_t k = 0; k < v.size(); ++k) check_schema(s.at("items"), root, v[k], ptr + "/" + std::to_string(k), out);
  }
  if (v.is_object()) {
    if (s.contains("required"))
      for (const json& r : s.at("required"))
        if (!v.contains(r.get<std::string>())) out.push_back({ptr, "missing required field '" + r.get<std::string>() + "'"});
    const json props = s.value("properties", json::object());
    for (const auto& [k, x] : v.items()) {
      if (props.contains(k))
        check_schema(props.at(k), root, x, ptr + "/" + k, out);
      else if (s.contains("additionalProperties") && s.at("additionalProperties") == false)
        out.push_back({ptr + "/" + k, "unknown field '" + k + "'"});
    }
  }
}

/// 1-based line of the value a JSON pointer names, found by walking the
/// source text key by key; array indices are resolved by counting the
/// elements at the array's nesting level.
inline int line_of_pointer(const std::string& text, const std::string& pointer) {
  std::size_t pos = 0;
  std::vector<std::string> parts;
  std::stringstream ss(pointer);
  for (std::string p; std::getline(ss, p, '/');)
    if (!p.empty()) parts.push_back(p);
  auto skip_ws = [&](std::size_t p) {
    while (p < text.size() && std::isspace(static_cast<unsigned char>(text[p]))) ++p;
    return p;
  };
  // Step over one JSON value starting at p.
  std::function<std::size_t(std::size_t)> skip_value = [&](std::size_t p) -> std::size_t {
    p = skip_ws(p);
    if (p >= text.size()) return p;
    if (text[p] == '"') {
      for (++p; p < text.size() && text[p] != '"'; ++p)
        if (text[p] == '\\') ++p;
      return p + 1;
    }
    if (text[p] == '{' || text[p] == '[') {
      int depth = 0;
      for (; p < text.size(); ++p) {
        const char c = text[p];
        if (c == '"') {
          p = skip_value(p) - 1;
          continue;
        }
        if (c == '{' || c == '[') ++depth;
        if (c == '}' || c == ']') {
          if (--depth == 0) return p + 1;
        }
      }
      return p;
    }
    while (p < text.size() && text[p] != ',' && text[p] != '}' && text[p] != ']') ++p;
    return p;
  };
  for (const std::string& part : parts) {
    pos = skip_ws(pos);
    if (pos >= text.size()) break;
    if (text[pos] == '[') {
      const long idx = std::strtol(part.c_str(), nullptr, 10);
      std::size_t p = pos + 1;
      for (long k = 0; k < idx && p < text.size(); ++k) {
        p = skip_ws(skip_value(p));
        if (p < text.size() && text[p] == ',') ++p;
      }
      pos = skip_ws(p);
      continue;
    }
    if (text[pos] != '{') break;
    std::size_t p = pos + 1;
    bool found = false;
    while (p < text.size()) {
      p = skip_ws(p);
      if (p >= text.size() || text[p] != '"') break;
      const std::size_t key_start = p;
      const std::size_t key_end = skip_value(p);
      const std::string key = text.substr(key_start + 1, key_end - key_start - 2);
      p = skip_ws(key_end);
      if (p < text.size() && text[p] == ':') ++p;
      if (key == part) {
        pos = key_start;
        const std::size_t value_at = skip_ws(p);
        // Report the key's line but descend from the value.
        if (&part == &parts.back()) {
          pos = key_start;
        } else {
          pos = value_at;
        }
        found = true;
        break;
      }
      p = skip_ws(skip_value(p));
      if (p < text.size() && text[p] == ',') ++p;
    }
    if (!found) break;
  }
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(std::min(pos, text.size())), '\n'));
}

}  // namespace detail

inline std::vector<SchemaIssue> validate_config(const json& cfg) {
  std::vector<SchemaIssue> out;
  detail::check_schema(config_schema(), config_schema(), cfg, "", out);
  return out;
}

// ---------------------------------------------------------------------------
// Config.

struct ExperimentConfig {
  std::string command;
  double theta = 0.0;
  std::optional<Grid> grid;  ///< grid spec + domain spec
  RhsSpec rhs = RhsZero{};
  std::map<std::string, Expression> boundary;
  std::map<std::string, Expression> exact;
  std::optional<Expression> u;    ///< input field for transform / estimate / bernstein
  std::optional<Expression> rho;  ///< Monge–Ampère density
  std::optional<double> tolerance;
  SolverConfig solver;
  json estimates = json::array();
  json bernstein = json::object();
  std::string suite = "core";
  std::uint64_t seed = 7;
  std::string output;
  json raw;
};

/// Reads, parses and validates; every problem surfaces as a ConfigError whose
/// message starts with "<path>:<line>:".
inline ExperimentConfig load_config(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError(path.string() + ": cannot read config");
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string text = ss.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t at = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(at), '\n'));
    throw ConfigError(path.string() + ":" + std::to_string(line) + ": JSON syntax error: " + e.what());
  }
  const std::vector<SchemaIssue> issues = validate_config(j);
  if (!issues.empty()) {
    std::string msg;
    for (const SchemaIssue& s : issues) {
      if (!msg.empty()) msg += '\n';
      msg += path.string() + ":" + std::to_string(detail::line_of_pointer(text, s.pointer)) + ": " +
             (s.pointer.empty() ? "/" : s.pointer) + ": " + s.message;
    }
    throw ConfigError(msg);
  }

  auto where = [&](const std::string& ptr) {
    return path.string() + ":" + std::to_string(detail::line_of_pointer(text, ptr)) + ": " + ptr + ": ";
  };
  auto expr = [&](const json& v, const std::string& ptr) {
    try {
      return Expression(v.get<std::string>());
    } catch (const ParseError& e) {
      throw ConfigError(where(ptr) + e.what());
    }
  };

  ExperimentConfig c;
  c.raw = j;
  c.command = j.at("command").get<std::string>();
  c.theta = j.value("theta", 0.0);
  if (j.contains("grid") != j.contains("domain"))
    throw ConfigError(where(j.contains("grid") ? "/grid" : "/domain") + "grid and domain must be given together");
  if (j.contains("grid")) {
    const json& d = j.at("domain");
    const double xa = d.at("x")[0].get<double>(), xb = d.at("x")[1].get<double>();
    const double ya = d.at("y")[0].get<double>(), yb = d.at("y")[1].get<double>();
    if (!(xb > xa)) throw ConfigError(where("/domain/x") + "interval must be increasing");
    if (!(yb > ya)) throw ConfigError(where("/domain/y") + "interval must be increasing");
    c.grid = Grid::over(xa, xb, ya, yb, j.at("grid").at("nx").get<int>(), j.at("grid").at("ny").get<int>());
  }
  if (j.contains("rhs")) {
    const json& r = j.at("rhs");
    const std::string kind = r.at("kind").get<std::string>();
    auto need = [&](const char* key) {
      if (!r.contains(key)) throw ConfigError(where("/rhs") + "rhs kind '" + kind + "' needs '" + key + "'");
      return expr(r.at(key), std::string("/rhs/") + key);
    };
    auto opt_expr = [&](const char* key) { return r.contains(key) ? need(key) : Expression("0"); };
    if (kind == "analytic") c.rhs = RhsAnalytic{need("f")};
    if (kind == "divform") c.rhs = RhsDivForm{opt_expr("g1"), opt_expr("g2"), opt_expr("h")};
    if (kind == "plaplacian") c.rhs = RhsPLaplacian{r.value("p", 2.0), opt_expr("f0")};
  }
  for (const char* key : {"boundary", "exact"})
    if (j.contains(key))
      for (const auto& [k, v] : j.at(key).items())
        (std::string(key) == "boundary" ? c.boundary : c.exact).emplace(k, expr(v, std::string("/") + key + "/" + k));
  if (j.contains("u")) c.u = expr(j.at("u"), "/u");
  if (j.contains("rho")) c.rho = expr(j.at("rho"), "/rho");
  if (j.contains("tolerance")) c.tolerance = j.at("tolerance").get<double>();
  if (j.contains("solver")) {
    try {
      c.solver = j.at("solver").get<SolverConfig>();
    } catch (const DomainError& e) {
      throw ConfigError(where("/solver") + e.what());
    }
  }
  if (j.contains("estimates")) c.estimates = j.at("estimates");
  if (j.contains("bernstein")) c.bernstein = j.at("bernstein");
  c.suite = j.value("suite", "core");
  c.seed = j.value("seed", std::uint64_t{7});
  c.output = j.value("output", "");

  // Per-command requirements the schema cannot express.
  auto require = [&](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(where("/command") + "command '" + c.command + "' needs " + what);
  };
  const bool gridded = c.command != "verify";
  if (gridded) require(c.grid.has_value(), "'grid' and 'domain'");
  if (c.command == "transform" || c.command == "estimate" || c.command == "bernstein") require(c.u.has_value(), "'u'");
  if (c.command == "solve-quasilinear") require(c.boundary.count("v") == 1, "'boundary.v'");
  if (c.command == "solve-ma") require(c.boundary.count("u") == 1 && c.rho.has_value(), "'boundary.u' and 'rho'");
  if (c.command == "solve-fourth-order") require(c.boundary.count("u") && c.boundary.count("w"), "'boundary.u' and 'boundary.w'");
  if (c.command == "estimate") require(!c.estimates.empty(), "'estimates'");
  if (c.command == "bernstein") require(!c.bernstein.empty(), "'bernstein'");
  return c;
}

// ---------------------------------------------------------------------------
// Outputs.

namespace detail {

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline GridFunction sample(const Grid& g, const Expression& e) {
  return GridFunction::sample(g, [&](double x, double y) { return e(x, y); });
}

inline void save_summary(const fs::path& dir, const std::vector<EstimateReport>& rows) {
  std::ofstream os = open_out(dir / "summary.csv");
  write_summary_csv(os, rows);
}

inline void save_history(const fs::path& dir, const std::vector<double>& h) {
  std::ofstream os = open_out(dir / "residual_history.csv");
  write_history_csv(os, h);
}

inline bool all_pass(const std::vector<EstimateReport>& rows) {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const EstimateReport& r) { return r.pass; });
}

/// Converged-solve row plus one error row per exact field supplied.
inline std::vector<EstimateReport> solve_rows(const std::string& name, const SolveReport& rep, const SolverConfig& cfg) {
  return {suite::row(name + ":residual", rep.residual, cfg.tol_residual, rep.converged && rep.residual <= cfg.tol_residual,
                     kNaN, rep.message)};
}

inline EstimateReport error_row(const std::string& name, const GridFunction& got, const GridFunction& exact,
                                const std::optional<double>& tol) {
  const double e = suite::max_err(got, exact);
  if (tol) return suite::bound(name, e, *tol);
  return suite::row(name, e, kNaN, std::isfinite(e));
}

}  // namespace detail

struct RunResult {
  int exit_code = kExitPass;
  std::vector<EstimateReport> rows;
  std::string message;
};

// ---------------------------------------------------------------------------
// Commands. Each writes its fields and reports and returns the summary rows.

namespace commands {

inline RunResult transform(const ExperimentConfig& c, const fs::path& out) {
  const GridFunction u = detail::sample(*c.grid, *c.u);
  const TransformResult t = forward(u);
  const IdentityReport ids = identity_report(u, t);
  const InvolutionReport inv = involution_check(u);
  save_grid(out / "u.grid", u);
  save_grid(out / "ustar.grid", t.ustar);
  save_grid(out / "wstar.grid", wstar(t));
  save_grid(out / "x_of_xi.grid", t.x_of_xi);
  save_json(out / "transform.json", transform_sidecar(t, ids, inv.max_error));
  const double tol = c.tolerance.value_or(tol::kIdentity);
  RunResult r;
  for (std::size_t q = 0; q < ids.residual.size(); ++q)
    r.rows.push_back(suite::bound(std::string("identity:") + IdentityReport::kNames[q], ids.residual[q], tol));
  r.rows.push_back(suite::bound("involution", inv.max_error, tol));
  return r;
}

inline RunResult solve_quasilinear(const ExperimentConfig& c, const fs::path& out) {
  const GridFunction data = detail::sample(*c.grid, c.boundary.at("v"));
  const auto [v, rep] = mage::solve_quasilinear(ThetaFamily(c.theta), data, c.solver);
  save_grid(out / "v.grid", v);
  save_json(out / "report.json", json(rep));
  detail::save_history(out, rep.history);
  RunResult r;
  r.rows = detail::solve_rows("quasilinear", rep, c.solver);
  if (c.exact.count("v")) r.rows.push_back(detail::error_row("error:v", v, detail::sample(*c.grid, c.exact.at("v")), c.tolerance));
  return r;
}

inline RunResult solve_ma(const ExperimentConfig& c, const fs::path& out) {
  const GridFunction rho = detail::sample(*c.grid, *c.rho);
  const auto [u, rep] = solve_monge_ampere(rho, detail::sample(*c.grid, c.boundary.at("u")), c.solver);
  save_grid(out / "u.grid", u);
  save_json(out / "report.json", json(rep));
  detail::save_history(out, rep.history);
  RunResult r;
  r.rows = detail::solve_rows("monge_ampere", rep, c.solver);
  if (c.exact.count("u")) r.rows.push_back(detail::error_row("error:u", u, detail::sample(*c.grid, c.exact.at("u")), c.tolerance));
  return r;
}

inline RunResult solve_fourth_order(const ExperimentConfig& c, const fs::path& out) {
  const FourthOrderSolution s =
      mage::solve_fourth_order(ThetaFamily(c.theta), c.rhs, detail::sample(*c.grid, c.boundary.at("u")),
                               detail::sample(*c.grid, c.boundary.at("w")), c.solver);
  save_grid(out / "u.grid", s.u);
  save_grid(out / "w.grid", s.w);
  save_json(out / "report.json", json(s.report));
  detail::save_history(out, s.report.history);
  RunResult r;
  r.rows = detail::solve_rows("fourth_order", s.report, c.solver);
  for (const char* k : {"u", "w"})
    if (c.exact.count(k))
      r.rows.push_back(detail::error_row(std::string("error:") + k, std::string(k) == "u" ? s.u : s.w,
                                         detail::sample(*c.grid, c.exact.at(k)), c.tolerance));
  return r;
}

inline RunResult verify(const SuiteOptions& opt, const fs::path& out) {
  if (opt.threads < 1) throw ConfigError("verify: thread count must be positive");
  const std::vector<CriterionResult> res = run_core_suite(opt);
  json crit = json::array();
  RunResult r;
  for (const CriterionResult& c : res) {
    json rows = json::array();
    for (const EstimateReport& e : c.rows) rows.push_back(json(e));
    crit.push_back({{"id", c.id}, {"title", c.title}, {"pass", c.pass}, {"rows", rows}});
    r.rows.insert(r.rows.end(), c.rows.begin(), c.rows.end());
  }
  save_json(out / "reports.json", {{"suite", "core"}, {"seed", opt.seed}, {"criteria", crit}});
  return r;
}

namespace detail_est {

inline std::array<double, 2> center(const json& e, const Grid& g) {
  if (e.contains("center")) return {e.at("center")[0].get<double>(), e.at("center")[1].get<double>()};
  return {g.x0 + 0.5 * (g.nx - 1) * g.hx, g.y0 + 0.5 * (g.ny - 1) * g.hy};
}

inline double radius(const json& e, const Grid& g) {
  if (e.contains("radius")) return e.at("radius").get<double>();
  return 0.25 * std::min((g.nx - 1) * g.hx, (g.ny - 1) * g.hy);
}

/// Levels for a refinement audit: explicit node counts (ny scaled to keep the
/// aspect), or the base grid and its refinement.
inline std::vector<Grid> levels(const json& e, const Grid& g) {
  if (!e.contains("levels")) return {g, g.refined()};
  std::vector<Grid> out;
  const double xa = g.x0, xb = g.x0 + (g.nx - 1) * g.hx, ya = g.y0, yb = g.y0 + (g.ny - 1) * g.hy;
  for (const json& n : e.at("levels")) {
    const int nx = n.get<int>();
    const int ny = 1 + static_cast<int>(std::lround((nx - 1) * static_cast<double>(g.ny - 1) / (g.nx - 1)));
    out.push_back(Grid::over(xa, xb, ya, yb, nx, ny));
  }
  return out;
}

inline Expression expr_or(const json& e, const char* key, const std::string& fallback) {
  return Expression(e.contains(key) ? e.at(key).get<std::string>() : fallback);
}

}  // namespace detail_est

inline EstimateReport estimate_one(const ExperimentConfig& c, const json& e) {
  using namespace detail_est;
  const Grid& g = *c.grid;
  const std::string kind = e.at("kind").get<std::string>();
  const std::string name = e.value("name", kind);
  const Expression field = e.contains("field") ? Expression(e.at("field").get<std::string>()) : *c.u;
  const auto [cx, cy] = center(e, g);
  const double R = radius(e, g);
  const std::vector<Grid> grids = levels(e, g);
  auto smooth_drift = [&](double dflt) { return e.value("drift", dflt); };

  if (kind == "det_bounds") {
    const DetBounds b = det_bounds(mage::detail::sample(g, field), Mask::interior(g, 1));
    EstimateReport r = suite::row(name, b.lambda, b.Lambda, b.lambda > 0.0 && std::isfinite(b.Lambda));
    r.quantities = {{"lambda", b.lambda}, {"Lambda", b.Lambda}};
    return r;
  }
  if (kind == "laplacian_lp") {
    const double p = e.value("p", 2.0);
    const double v = laplacian_lp(mage::detail::sample(g, field), p, R, cx, cy);
    return suite::row(name, v, kNaN, std::isfinite(v));
  }
  if (kind == "gradient_energy") {
    const double alpha = e.value("alpha", 4.0);
    return refinement_audit(name, grids, [&](const Grid& gl) {
      const double v = gradient_energy(mage::detail::sample(gl, field), R, alpha, cx, cy);
      EstimateReport r = suite::row(name, v, kNaN, std::isfinite(v));
      r.c_emp = v;  // the audit tracks the value itself
      return r;
    }, smooth_drift(tol::kSmoothDrift));
  }
  if (kind == "sobolev") {
    const double chi = e.value("chi", 4.0);
    const int count = e.value("bumps", 100);
    const std::uint64_t seed = e.value("seed", c.seed);
    const double xa = g.x0, xb = g.x0 + (g.nx - 1) * g.hx, ya = g.y0, yb = g.y0 + (g.ny - 1) * g.hy;
    const double span = std::min(xb - xa, yb - ya);
    const std::vector<Bump> bumps = random_bumps(seed, count, xa, xb, ya, yb, 0.1 * span, 0.3 * span, 0.05 * span);
    return refinement_audit(name, grids, [&](const Grid& gl) {
      const FluxOperator op(cofactor(hessian(mage::detail::sample(gl, field))));
      double m = 0.0;
      for (const Bump& b : bumps) m = std::max(m, ma_sobolev_ratio(op, sample_bump(gl, b), chi));
      EstimateReport r = suite::row(name, m, kNaN, std::isfinite(m));
      r.c_emp = m;
      return r;
    }, smooth_drift(tol::kSobolevDrift));
  }
  if (kind == "moser") {
    const Expression a11 = expr_or(e, "a11", "1"), a12 = expr_or(e, "a12", "0"), a22 = expr_or(e, "a22", "1");
    const Expression lam = expr_or(e, "lambda", "1"), dd = expr_or(e, "d", "1");
    const Expression cc = expr_or(e, "c", "0"), ff = expr_or(e, "f", "0");
    MoserOptions mo;
    mo.cx = cx;
    mo.cy = cy;
    mo.radius = e.value("radius", 1.0);
    return refinement_audit(name, grids, [&](const Grid& gl) {
      DegenerateCoefficients k;
      k.a11 = mage::detail::sample(gl, a11);
      k.a12 = mage::detail::sample(gl, a12);
      k.a22 = mage::detail::sample(gl, a22);
      k.lambda = mage::detail::sample(gl, lam);
      k.d = mage::detail::sample(gl, dd);
      k.p = e.value("p", 8.0);
      k.q = e.value("q", 2.0);
      k.p0 = e.value("p0", k.p);
      return moser_supbound_ratio(k, mage::detail::sample(gl, cc), mage::detail::sample(gl, ff),
                                  mage::detail::sample(gl, field), mo);
    }, smooth_drift(tol::kDegenerateDrift));
  }
  // c2: f defaults to the field's own θ=1 residual.
  return refinement_audit(name, grids, [&](const Grid& gl) {
    const GridFunction u = mage::detail::sample(gl, field);
    const GridFunction f = e.contains("f") ? mage::detail::sample(gl, Expression(e.at("f").get<std::string>()))
                                           : fourth_order_residual(u, ThetaFamily(1.0), RhsZero{});
    return c2_quantity_check(u, f);
  }, smooth_drift(tol::kDegenerateDrift));
}

inline RunResult estimate(const ExperimentConfig& c, const fs::path& out) {
  RunResult r;
  json reports = json::array();
  for (const json& e : c.estimates) {
    EstimateReport rep = estimate_one(c, e);
    reports.push_back(json(rep));
    r.rows.push_back(std::move(rep));
  }
  save_json(out / "reports.json", reports);
  return r;
}

inline RunResult bernstein(const ExperimentConfig& c, const fs::path& out) {
  BernsteinOptions opt;
  const json& b = c.bernstein;
  if (b.contains("center")) {
    opt.cx = b.at("center")[0].get<double>();
    opt.cy = b.at("center")[1].get<double>();
  }
  opt.p = b.value("p", opt.p);
  opt.q = b.value("q", opt.q);
  const std::vector<double> radii = b.at("radii").get<std::vector<double>>();
  const GridFunction u = mage::detail::sample(*c.grid, *c.u);
  EstimateReport rep = bernstein_probe(u, radii, opt);
  save_grid(out / "d3.grid", third_derivative_norm(u));
  // Plot data: the two log-log series.
  {
    std::ofstream os = mage::detail::open_out(out / "bernstein_series.csv");
    os << "R,D3_R,hyp_R\n";
    for (double R : radii)
      os << mage::detail::fmt_double(R) << ',' << mage::detail::csv_double(rep.quantity("D3_R=" + mage::detail::fmt_double(R)))
         << ',' << mage::detail::csv_double(rep.quantity("hyp_R=" + mage::detail::fmt_double(R))) << '\n';
  }
  save_json(out / "report.json", json(rep));
  RunResult r;
  r.rows.push_back(std::move(rep));
  return r;
}

}  // namespace commands

// ---------------------------------------------------------------------------
// Orchestration.

struct RunContext {
  std::string command;
  std::string config_path;
  json extra = json::object();
};

/// Runs `body` into `out`, translating failures into exit codes: ConfigError
/// → 2; any other library error → 1 with report.json naming the failure.
inline int run_into(const fs::path& out, const RunContext& ctx, const std::function<RunResult()>& body,
                    std::ostream& log = std::cerr) {
  const std::string started = detail::utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  RunResult r;
  try {
    fs::create_directories(out);
    r = body();
    r.exit_code = detail::all_pass(r.rows) ? kExitPass : kExitFail;
    detail::save_summary(out, r.rows);
  } catch (const ConfigError& e) {
    log << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    r.exit_code = kExitFail;
    r.message = e.what();
    SolveReport fail;
    fail.message = e.what();
    json rep = json(fail);
    rep["error"] = std::string(e.what());
    save_json(out / "report.json", rep);
    r.rows = {suite::row(ctx.command + ":failed", kNaN, kNaN, false, kNaN, e.what())};
    detail::save_summary(out, r.rows);
    log << "mage: " << ctx.command << " failed: " << e.what() << '\n';
  }
  for (const EstimateReport& row : r.rows)
    if (!row.pass) log << "mage: FAIL " << row.name << (row.message.empty() ? "" : ": " + row.message) << '\n';
  json meta = {{"command", ctx.command},
               {"config", ctx.config_path},
               {"started_utc", started},
               {"finished_utc", detail::utc_now()},
               {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()},
               {"threads", threads_from_env()},
               {"exit_code", r.exit_code}};
  for (const auto& [k, v] : ctx.extra.items()) meta[k] = v;
  save_json(out / "metadata.json", meta);
  return r.exit_code;
}

inline RunResult dispatch(const ExperimentConfig& c, const fs::path& out) {
  if (c.command == "transform") return commands::transform(c, out);
  if (c.command == "solve-quasilinear") return commands::solve_quasilinear(c, out);
  if (c.command == "solve-ma") return commands::solve_ma(c, out);
  if (c.command == "solve-fourth-order") return commands::solve_fourth_order(c, out);
  if (c.command == "estimate") return commands::estimate(c, out);
  if (c.command == "bernstein") return commands::bernstein(c, out);
  SuiteOptions opt;
  opt.seed = c.seed;
  opt.threads = threads_from_env();
  return commands::verify(opt, out);
}

inline fs::path resolve_out(const ExperimentConfig& c, const std::string& out_flag) {
  if (!out_flag.empty()) return out_flag;
  if (!c.output.empty()) return c.output;
  throw ConfigError("no output directory: pass --out or set 'output'");
}

inline int run(const fs::path& config, const std::string& out_flag, std::ostream& log = std::cerr) {
  ExperimentConfig c;
  fs::path out;
  try {
    c = load_config(config);
    out = resolve_out(c, out_flag);
  } catch (const ConfigError& e) {
    log << e.what() << '\n';
    return kExitConfig;
  }
  return run_into(out, {c.command, config.string()}, [&] { return dispatch(c, out); }, log);
}

inline int verify(const std::string& suite_name, std::uint64_t seed, const fs::path& out, std::ostream& log = std::cerr) {
  if (suite_name != "core") {
    log << "unknown suite '" << suite_name << "' (available: core)\n";
    return kExitConfig;
  }
  SuiteOptions opt;
  opt.seed = seed;
  opt.threads = threads_from_env();
  return run_into(out, {"verify", "", {{"suite", suite_name}, {"seed", seed}}}, [&] { return commands::verify(opt, out); }, log);
}

// ---------------------------------------------------------------------------
// Convergence study.

struct StudyRow {
  int level = 0;
  Grid grid;
  double error = kNaN;
  double ratio = kNaN;
  double order = kNaN;
  bool exact = false;
};

inline constexpr double kExactError = 1e-10;  // errors at or below this are roundoff

inline void write_study_csv(std::ostream& os, const std::vector<StudyRow>& rows) {
  os << "level,nx,ny,h,error,ratio,order\n";
  for (const StudyRow& r : rows)
    os << r.level << ',' << r.grid.nx << ',' << r.grid.ny << ',' << detail::fmt_double(r.grid.hx) << ','
       << detail::csv_double(r.error) << ',' << detail::csv_double(r.ratio) << ','
       << (r.exact ? std::string("exact") : detail::csv_double(r.order)) << '\n';
  if (rows.size() == 1) os << "warning,single level: no ratio or order,,,,,\n";
}

/// Runs the config's solve at `levels` successive refinements and returns
/// the order table. The error is the L∞ distance of the solved field to the
/// config's exact field.
inline std::vector<StudyRow> convergence_rows(const ExperimentConfig& base, int levels, const fs::path& out) {
  const std::map<std::string, std::string> field = {
      {"solve-quasilinear", "v"}, {"solve-ma", "u"}, {"solve-fourth-order", "u"}};
  if (!field.count(base.command))
    throw ConfigError("study: command '" + base.command + "' has no solved field (use a solve-* command)");
  const std::string key = field.at(base.command);
  if (!base.exact.count(key)) throw ConfigError("study: needs 'exact." + key + "'");
  if (levels < 1) throw ConfigError("study: --levels must be at least 1");

  std::vector<StudyRow> rows;
  Grid g = *base.grid;
  for (int l = 0; l < levels; ++l) {
    if (l > 0) g = g.refined();
    ExperimentConfig c = base;
    c.grid = g;
    const fs::path dir = out / ("level_" + std::to_string(l));
    fs::create_directories(dir);
    const RunResult r = dispatch(c, dir);
    detail::save_summary(dir, r.rows);
    const GridFunction got = load_grid(dir / (key + ".grid"));
    StudyRow row;
    row.level = l;
    row.grid = g;
    row.error = suite::max_err(got, detail::sample(g, c.exact.at(key)));
    if (!rows.empty()) {
      const StudyRow& prev = rows.back();
      row.ratio = prev.error / row.error;
      row.order = std::log2(row.ratio);
    }
    row.exact = row.error <= kExactError;
    rows.push_back(row);
  }
  return rows;
}

inline int study(const fs::path& config, int levels, const std::string& out_flag, std::ostream& log = std::cerr) {
  ExperimentConfig c;
  fs::path out;
  try {
    c = load_config(config);
    out = resolve_out(c, out_flag);
  } catch (const ConfigError& e) {
    log << e.what() << '\n';
    return kExitConfig;
  }
  return run_into(out, {"study", config.string(), {{"levels", levels}}}, [&] {
    const std::vector<StudyRow> rows = convergence_rows(c, levels, out);
    {
      std::ofstream os = detail::open_out(out / "study.csv");
      write_study_csv(os, rows);
    }
    if (rows.size() == 1) log << "mage: warning: single level requested; the order table is degenerate\n";
    RunResult r;
    for (const StudyRow& s : rows)
      r.rows.push_back(suite::row("study:level=" + std::to_string(s.level), s.error, kNaN, std::isfinite(s.error),
                                  s.order, s.exact ? "exact" : ""));
    return r;
  }, log);
}

}  // namespace mage
