#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "rotatlas/circle.hpp"
#include "rotatlas/error.hpp"
#include "rotatlas/figures.hpp"
#include "rotatlas/function.hpp"
#include "rotatlas/io.hpp"
#include "rotatlas/semiconj.hpp"
#include "rotatlas/skew.hpp"
#include "rotatlas/transport.hpp"

namespace rotatlas {

using json = nlohmann::json;

inline constexpr std::size_t kDefaultGrid = std::size_t{1} << 17;

/// Typed access to a JSON object that rejects keys outside an allowed set.
/// Error messages carry the JSON path of the offending value.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path, std::set<std::string> allowed)
      : j_(j), path_(std::move(path)) {
    if (!j.is_object()) fail(path_, "expected an object");
    for (const auto& [k, v] : j.items())
      if (!allowed.count(k)) fail(path_ + "/" + k, "unknown key");
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw Error(ErrorKind::ConfigError, (path.empty() ? std::string("/") : path) + ": " + what);
  }

  bool has(const std::string& k) const { return j_.contains(k); }
  std::string at(const std::string& k) const { return path_ + "/" + k; }
  const json& raw(const std::string& k) const {
    if (!has(k)) fail(at(k), "missing required key");
    return j_.at(k);
  }

  double num(const std::string& k) const {
    const json& v = raw(k);
    if (!v.is_number()) fail(at(k), "expected a number");
    return v.get<double>();
  }
  double num(const std::string& k, double def) const { return has(k) ? num(k) : def; }

  std::int64_t integer(const std::string& k) const {
    const json& v = raw(k);
    if (!v.is_number_integer()) fail(at(k), "expected an integer");
    return v.get<std::int64_t>();
  }
  std::int64_t integer(const std::string& k, std::int64_t def) const { return has(k) ? integer(k) : def; }

  std::string str(const std::string& k) const {
    const json& v = raw(k);
    if (!v.is_string()) fail(at(k), "expected a string");
    return v.get<std::string>();
  }
  std::string str(const std::string& k, const std::string& def) const { return has(k) ? str(k) : def; }

  bool boolean(const std::string& k, bool def) const {
    if (!has(k)) return def;
    const json& v = raw(k);
    if (!v.is_boolean()) fail(at(k), "expected true or false");
    return v.get<bool>();
  }

  std::vector<double> numbers(const std::string& k) const {
    const json& v = raw(k);
    if (!v.is_array()) fail(at(k), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) fail(at(k) + "/" + std::to_string(i), "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

 private:
  const json& j_;
  std::string path_;
};

inline Primitive parse_primitive(const json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
    ObjectReader::fail(path + "/kind", "expected a primitive name");
  Primitive p;
  const std::string kind = j["kind"].get<std::string>();
  try {
    p.kind = primitive_from_name(kind);
  } catch (const Error&) {
    ObjectReader::fail(path + "/kind", "unknown primitive '" + kind + "'");
  }
  switch (p.kind) {
    case PrimitiveKind::Sin:
    case PrimitiveKind::Cos:
    case PrimitiveKind::AbsSin:
    case PrimitiveKind::AbsCos: {
      ObjectReader r(j, path, {"kind", "amp", "freq", "phase", "offset"});
      p.amp = r.num("amp", 1.0);
      p.freq = r.num("freq", 1.0);
      p.phase = r.num("phase", 0.0);
      p.offset = r.num("offset", 0.0);
      break;
    }
    case PrimitiveKind::Poly: {
      ObjectReader r(j, path, {"kind", "coeffs"});
      p.coeffs = r.numbers("coeffs");
      break;
    }
    case PrimitiveKind::TanhAffine: {
      ObjectReader r(j, path, {"kind", "in_scale", "in_shift", "add", "out_scale"});
      p.in_scale = r.num("in_scale", 1.0);
      p.in_shift = r.num("in_shift", 0.0);
      p.add = r.num("add", 0.0);
      p.out_scale = r.num("out_scale", 1.0);
      break;
    }
    case PrimitiveKind::Const: {
      ObjectReader r(j, path, {"kind", "value"});
      p.offset = r.num("value");
      break;
    }
  }
  return p;
}

/// Branches as [{"from": a, "to": b, "expr": primitive}, ...]; missing bounds are infinite.
inline PiecewiseFunction parse_branches(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) ObjectReader::fail(path, "expected a non-empty array of branches");
  std::vector<Branch> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string bp = path + "/" + std::to_string(i);
    ObjectReader r(j[i], bp, {"from", "to", "expr"});
    Branch b;
    b.from = r.num("from", -std::numeric_limits<double>::infinity());
    b.to = r.num("to", std::numeric_limits<double>::infinity());
    if (!(b.from < b.to)) ObjectReader::fail(bp, "from must be below to");
    b.expr = parse_primitive(r.raw("expr"), r.at("expr"));
    out.push_back(std::move(b));
  }
  return PiecewiseFunction(std::move(out));
}

/// Map specs: rigid {rho}, sine {a, b} for x + a + b sin 2 pi x, breakpoints {points},
/// piecewise {branches} giving the periodic displacement F(x) - x. Grid kinds accept "grid".
inline CircleLift parse_map(const json& j, const std::string& path, std::size_t grid = kDefaultGrid) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
    ObjectReader::fail(path + "/kind", "expected a map kind (rigid, sine, breakpoints, piecewise)");
  const std::string kind = j["kind"].get<std::string>();
  if (kind == "rigid") {
    ObjectReader r(j, path, {"kind", "rho"});
    return CircleLift::rigid(r.num("rho"));
  }
  if (kind == "sine") {
    ObjectReader r(j, path, {"kind", "a", "b", "grid"});
    const double a = r.num("a"), b = r.num("b");
    const auto n = static_cast<std::size_t>(r.integer("grid", static_cast<std::int64_t>(grid)));
    return CircleLift::sample([a, b](double x) { return x + a + b * std::sin(2.0 * std::numbers::pi * x); }, n);
  }
  if (kind == "breakpoints") {
    ObjectReader r(j, path, {"kind", "points"});
    const json& pts = r.raw("points");
    if (!pts.is_array() || pts.empty()) ObjectReader::fail(r.at("points"), "expected [[x, y], ...]");
    std::vector<Node> nodes;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const json& p = pts[i];
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
        ObjectReader::fail(r.at("points") + "/" + std::to_string(i), "expected [x, y]");
      nodes.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    return CircleLift::from_breakpoints(std::move(nodes));
  }
  if (kind == "piecewise") {
    ObjectReader r(j, path, {"kind", "branches", "grid"});
    const PiecewiseFunction g = parse_branches(r.raw("branches"), r.at("branches"));
    const auto n = static_cast<std::size_t>(r.integer("grid", static_cast<std::int64_t>(grid)));
    // The displacement is periodic; evaluate it on [0,1) and extend by the degree.
    return CircleLift::sample([&g](double x) { return x + g(x - std::floor(x)); }, n);
  }
  ObjectReader::fail(path + "/kind", "unknown map kind '" + kind + "'");
}

inline FiberDomain parse_domain(const json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
    ObjectReader::fail(path + "/kind", "expected interval, half_line or line");
  const std::string kind = j["kind"].get<std::string>();
  if (kind == "interval") {
    ObjectReader r(j, path, {"kind", "lo", "hi"});
    const double lo = r.num("lo"), hi = r.num("hi");
    if (!(lo <= 0.0 && 0.0 <= hi)) ObjectReader::fail(path, "interval must contain 0");
    return FiberDomain::interval(lo, hi);
  }
  if (kind == "half_line") {
    ObjectReader r(j, path, {"kind"});
    return FiberDomain::half_line();
  }
  if (kind == "line") {
    ObjectReader r(j, path, {"kind"});
    return FiberDomain::line();
  }
  ObjectReader::fail(path + "/kind", "unknown domain kind '" + kind + "'");
}

/// Fiber maps: {"name": registry name} or {"name": "poly", "coeffs": [...]} or
/// {"name": "piecewise", "branches": [...]}; an explicit K overrides the registry domain.
inline FiberMap parse_fiber(const json& j, const std::string& path, const json* k = nullptr,
                            const std::string& k_path = "") {
  if (!j.is_object() || !j.contains("name") || !j["name"].is_string())
    ObjectReader::fail(path + "/name", "expected a fiber map name");
  const std::string name = j["name"].get<std::string>();
  std::optional<FiberDomain> dom;
  if (k) dom = parse_domain(*k, k_path);
  auto with_domain = [&](FiberMap m) {
    if (dom) {
      m.domain = *dom;
      m.validate();
    }
    return m;
  };
  try {
    if (name == "poly") {
      ObjectReader r(j, path, {"name", "coeffs"});
      return FiberMap::from_piecewise("poly", PiecewiseFunction::single(Primitive::poly(r.numbers("coeffs"))),
                                      dom.value_or(FiberDomain::line()));
    }
    if (name == "piecewise") {
      ObjectReader r(j, path, {"name", "branches"});
      return FiberMap::from_piecewise("piecewise", parse_branches(r.raw("branches"), r.at("branches")),
                                      dom.value_or(FiberDomain::line()));
    }
    ObjectReader r(j, path, {"name"});
    if (name == "tanh") return with_domain(fiber_tanh());
    if (name == "tanh_shifted") return with_domain(fiber_tanh_shifted());
    if (name == "logistic_unimodal") return with_domain(fiber_logistic_unimodal());
    if (name == "cubic_bimodal") return with_domain(fiber_cubic_bimodal());
    if (name == "logistic_cubic") return with_domain(fiber_logistic_cubic());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigError && std::string(e.what()).find(": /") != std::string::npos) throw;
    ObjectReader::fail(path, e.what());
  }
  ObjectReader::fail(path + "/name", "unknown fiber map '" + name + "'");
}

/// Forcings: zero, const {c}, cos_shift {c} for c + cos 2 pi theta, fig1, fig2, piecewise {branches}.
inline ForcingMap parse_forcing(const json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("name") || !j["name"].is_string())
    ObjectReader::fail(path + "/name", "expected a forcing name");
  const std::string name = j["name"].get<std::string>();
  if (name == "const" || name == "cos_shift") {
    ObjectReader r(j, path, {"name", "c"});
    return name == "const" ? forcing_const(r.num("c")) : forcing_cos_shift(r.num("c"));
  }
  if (name == "piecewise") {
    ObjectReader r(j, path, {"name", "branches"});
    return ForcingMap::make("piecewise", parse_branches(r.raw("branches"), r.at("branches")));
  }
  ObjectReader r(j, path, {"name"});
  if (name == "zero") return forcing_zero();
  if (name == "fig1") return forcing_fig1();
  if (name == "fig2") return forcing_fig2();
  ObjectReader::fail(path + "/name", "unknown forcing '" + name + "'");
}

/// "paper:fig1" and "paper:fig2" expand to the full system configuration.
inline json expand_system_alias(const json& j) {
  if (!j.is_string()) return j;
  const std::string s = j.get<std::string>();
  json rigid = {{"kind", "rigid"}, {"rho", kGoldenMean}};
  if (s == "paper:fig1")
    return {{"base", rigid}, {"p", {{"name", "tanh_shifted"}}}, {"q", {{"name", "fig1"}}}, {"K", {{"kind", "line"}}}};
  if (s == "paper:fig2")
    return {{"base", rigid},
            {"p", {{"name", "logistic_cubic"}}},
            {"q", {{"name", "fig2"}}},
            {"K", {{"kind", "interval"}, {"lo", -1.0}, {"hi", 1.0}}}};
  throw Error(ErrorKind::ConfigError, "/system: unknown alias '" + s + "' (expected paper:fig1 or paper:fig2)");
}

/// {"base": map-spec | {"rho": r, "h": "h.csv"}, "p": fiber, "q": forcing, "K": domain}.
inline SkewSystem parse_system(const json& raw, const std::string& path, const fs::path& base_dir = {}) {
  const json j = expand_system_alias(raw);
  ObjectReader r(j, path, {"base", "p", "q", "K"});
  const json* k = r.has("K") ? &r.raw("K") : nullptr;
  FiberMap p = parse_fiber(r.raw("p"), r.at("p"), k, r.at("K"));
  ForcingMap q = parse_forcing(r.raw("q"), r.at("q"));
  const json& b = r.raw("base");
  if (b.is_object() && b.contains("rho") && !b.contains("kind")) {
    ObjectReader br(b, r.at("base"), {"rho", "h"});
    const double rho = br.num("rho");
    std::shared_ptr<const Semiconjugacy> h;
    if (br.has("h")) {
      const fs::path file = base_dir / br.str("h");
      const CsvTable t = read_csv(file);
      h = std::make_shared<Semiconjugacy>(
          semiconjugacy_from_table(csv_column(t, "theta", file), csv_column(t, "h_theta", file), rho));
    }
    return SkewSystem::over_rotation(rho, std::move(p), std::move(q), std::move(h));
  }
  CircleLift f = parse_map(b, r.at("base"));
  if (f.size() == 1 && f.xs()[0] == 0.0)  // rigid rotation
    return SkewSystem::over_rotation(f.ys()[0], std::move(p), std::move(q));
  return SkewSystem::over_lift(std::move(f), std::move(p), std::move(q));
}

inline TransportConfig parse_transport_config(const json& j, const std::string& path) {
  TransportConfig c;
  if (j.is_null()) return c;
  ObjectReader r(j, path,
                 {"solve_tol", "rotation_iterations", "minimal_burn", "minimal_count", "horizon", "epsilon",
                  "table_size", "max_defect", "agreement_tol", "bins", "attractor_burn", "attractor_count",
                  "attractor_x0", "graph_points", "conjugacy_samples", "conjugacy_steps", "verify_steps", "probes",
                  "invariance_tol", "attraction_tol", "min_basin_fraction", "hausdorff_tol", "lyapunov_tol", "support_separation", "pointwise_iterations",
                  "pointwise_seeds"});
  c.solve_tol = r.num("solve_tol", c.solve_tol);
  c.rotation_iterations = r.integer("rotation_iterations", c.rotation_iterations);
  c.minimal_burn = r.integer("minimal_burn", c.minimal_burn);
  c.minimal_count = r.integer("minimal_count", c.minimal_count);
  c.horizon = r.integer("horizon", c.horizon);
  c.epsilon = r.num("epsilon", c.epsilon);
  c.table_size = r.integer("table_size", c.table_size);
  c.max_defect = r.num("max_defect", c.max_defect);
  c.agreement_tol = r.num("agreement_tol", c.agreement_tol);
  c.bins = static_cast<std::size_t>(r.integer("bins", static_cast<std::int64_t>(c.bins)));
  c.attractor_burn = r.integer("attractor_burn", c.attractor_burn);
  c.attractor_count = r.integer("attractor_count", c.attractor_count);
  c.attractor_x0 = r.num("attractor_x0", c.attractor_x0);
  c.graph_points = static_cast<std::size_t>(r.integer("graph_points", static_cast<std::int64_t>(c.graph_points)));
  c.conjugacy_samples =
      static_cast<std::size_t>(r.integer("conjugacy_samples", static_cast<std::int64_t>(c.conjugacy_samples)));
  c.conjugacy_steps = r.integer("conjugacy_steps", c.conjugacy_steps);
  c.verify_steps = r.integer("verify_steps", c.verify_steps);
  c.probes = static_cast<std::size_t>(r.integer("probes", static_cast<std::int64_t>(c.probes)));
  c.invariance_tol = r.num("invariance_tol", c.invariance_tol);
  c.attraction_tol = r.num("attraction_tol", c.attraction_tol);
  c.min_basin_fraction = r.num("min_basin_fraction", c.min_basin_fraction);
  c.hausdorff_tol = r.num("hausdorff_tol", c.hausdorff_tol);
  c.lyapunov_tol = r.num("lyapunov_tol", c.lyapunov_tol);
  c.support_separation = r.num("support_separation", c.support_separation);
  c.pointwise_iterations = r.integer("pointwise_iterations", c.pointwise_iterations);
  c.pointwise_seeds =
      static_cast<std::size_t>(r.integer("pointwise_seeds", static_cast<std::int64_t>(c.pointwise_seeds)));
  return c;
}

inline json transport_config_json(const TransportConfig& c) {
  return {{"solve_tol", c.solve_tol},
          {"rotation_iterations", c.rotation_iterations},
          {"minimal_burn", c.minimal_burn},
          {"minimal_count", c.minimal_count},
          {"horizon", c.horizon},
          {"epsilon", c.epsilon},
          {"table_size", c.table_size},
          {"max_defect", c.max_defect},
          {"agreement_tol", c.agreement_tol},
          {"bins", c.bins},
          {"attractor_burn", c.attractor_burn},
          {"attractor_count", c.attractor_count},
          {"attractor_x0", c.attractor_x0},
          {"graph_points", c.graph_points},
          {"conjugacy_samples", c.conjugacy_samples},
          {"conjugacy_steps", c.conjugacy_steps},
          {"verify_steps", c.verify_steps},
          {"probes", c.probes},
          {"invariance_tol", c.invariance_tol},
          {"attraction_tol", c.attraction_tol},
          {"min_basin_fraction", c.min_basin_fraction},
          {"hausdorff_tol", c.hausdorff_tol},
          {"lyapunov_tol", c.lyapunov_tol},
          {"support_separation", c.support_separation},
          {"pointwise_iterations", c.pointwise_iterations},
          {"pointwise_seeds", c.pointwise_seeds}};
}

}  // namespace rotatlas
