#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rotatlas/circle.hpp"
#include "rotatlas/config.hpp"
#include "rotatlas/error.hpp"
#include "rotatlas/figures.hpp"
#include "rotatlas/io.hpp"
#include "rotatlas/rotation.hpp"
#include "rotatlas/semiconj.hpp"
#include "rotatlas/skew.hpp"
#include "rotatlas/transport.hpp"

namespace rotatlas::cli {

inline constexpr const char* kVersion = "0.1.0";

inline constexpr int kOk = 0;
inline constexpr int kValidation = 1;
inline constexpr int kNumerical = 2;
inline constexpr int kIo = 3;

inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::NoConvergence:
    case ErrorKind::PeriodicOrbitDetected:
    case ErrorKind::EmptyResult:
    case ErrorKind::OrderViolation:
    case ErrorKind::FiberEscape:
    case ErrorKind::UndefinedDerivative:
    case ErrorKind::EmptyBin:
    case ErrorKind::SemiconjugacyDefectTooLarge:
      return kNumerical;
    case ErrorKind::IoError:
      return kIo;
    default:
      return kValidation;
  }
}

/// Inline JSON, a "paper:" alias, or the path of a JSON file.
struct JsonArg {
  json value;
  fs::path dir;  // directory that relative references inside value resolve against
};

inline JsonArg load_json_arg(const std::string& arg, const std::string& what) {
  const auto first = arg.find_first_not_of(" \t\r\n");
  try {
    if (first != std::string::npos && (arg[first] == '{' || arg[first] == '[' || arg[first] == '"'))
      return {json::parse(arg), fs::current_path()};
    if (arg.rfind("paper:", 0) == 0) return {json(arg), fs::current_path()};
    return {json::parse(read_file(arg)), fs::absolute(arg).parent_path()};
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ConfigError, what + ": " + e.what());
  }
}

/// One subcommand invocation: where outputs go, what they are, and which checks ran.
struct Run {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  json inputs = json::object();
  json seeds = json::object();
  json checks = json::object();
  fs::path out;               // as given on the command line; empty means stdout
  bool dir_output = false;    // --out names a directory rather than a file
  std::vector<std::string> outputs;  // relative to root()
  bool failed = false;
  std::ostream* log = &std::cout;

  fs::path root() const { return dir_output ? out : out.parent_path(); }
  fs::path manifest_path() const {
    if (dir_output) return out / "manifest.json";
    fs::path m = out;
    m += ".manifest.json";
    return m;
  }

  /// Registers rel as an output and returns its full path.
  fs::path place(const std::string& rel) {
    outputs.push_back(rel);
    return root() / rel;
  }

  /// Writes a single-file result to --out, or to stdout when --out is absent.
  void emit(const std::string& content) {
    if (out.empty()) {
      *log << content;
      return;
    }
    atomic_write(place(out.filename().string()), content);
  }

  void check(const std::string& name, bool pass, double value, double tol, const std::string& relation) {
    checks[name] = {{"status", pass ? "PASS" : "FAIL"}, {"value", value}, {"tolerance", tol}, {"relation", relation}};
    if (!pass) {
      failed = true;
      std::cerr << "FAIL " << name << ": " << fmt17(value) << " (required " << relation << " " << fmt17(tol) << ")\n";
    }
  }
};

inline json manifest_json(const Run& run, double wall) {
  json outs = json::array();
  for (const auto& rel : run.outputs) {
    std::error_code ec;
    const auto bytes = fs::file_size(run.root() / rel, ec);
    outs.push_back({{"file", rel}, {"bytes", ec ? 0 : bytes}});
  }
  return {{"command", run.command}, {"argv", run.argv},     {"config", run.config},
          {"inputs", run.inputs},   {"seeds", run.seeds},   {"version", kVersion},
          {"outputs", outs},        {"checks", run.checks}, {"wall_time", wall}};
}

// ---- option plumbing -------------------------------------------------------

struct Common {
  std::string out;
  std::uint64_t seed = 0;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  std::string format;
  bool plot_script = false;
  std::string config;
};

inline void add_common(CLI::App* sub, Common& c, bool dir_output, const std::string& formats = "",
                       bool plot = false) {
  sub->add_option("--out", c.out, dir_output ? "Output directory" : "Output file (stdout when omitted)");
  sub->add_option("--seed", c.seed, "Seed for initial-condition jitter");
  sub->add_option("--jobs", c.jobs, "Worker threads (ROTATLAS_JOBS overrides)");
  sub->add_option("--config", c.config, "JSON file of option values; command-line flags override it");
  if (!formats.empty()) {
    std::vector<std::string> allowed;
    std::stringstream ss(formats);
    for (std::string f; std::getline(ss, f, '|');) allowed.push_back(f);
    c.format = allowed.front();
    sub->add_option("--format", c.format, "Output format")->check(CLI::IsMember(allowed));
  }
  if (plot) sub->add_flag("--plot-script", c.plot_script, "Also write a gnuplot script");
}

inline unsigned effective_jobs(unsigned requested) {
  if (const char* env = std::getenv("ROTATLAS_JOBS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::ConfigError, "ROTATLAS_JOBS must be a positive integer, got '" + std::string(env) + "'");
  }
  return std::max(1u, requested);
}

inline bool is_flag(const CLI::Option* o) { return o->get_expected_max() == 0; }

/// Every option of the subcommand with its effective value; defaults are filled in.
inline json option_snapshot(const CLI::App& sub) {
  json j = json::object();
  for (const CLI::Option* o : sub.get_options()) {
    const std::string name = o->get_single_name();
    if (name == "help" || name == "config" || name == "out") continue;
    if (is_flag(o)) {
      j[name] = o->count() > 0;
      continue;
    }
    if (o->count() == 0) {
      const std::string d = o->get_default_str();
      if (d.empty()) j[name] = nullptr;
      else j[name] = d;
      continue;
    }
    const auto& r = o->results();
    if (r.size() == 1 || o->get_expected_max() <= 1) j[name] = r.back();  // repeats: last one wins
    else j[name] = r;
  }
  return j;
}

/// Turns a --config JSON object into command-line tokens; unknown keys are errors.
inline std::vector<std::string> config_tokens(const CLI::App& sub, const json& cfg) {
  if (!cfg.is_object()) throw Error(ErrorKind::ConfigError, "/: config must be a JSON object");
  std::vector<std::string> out;
  for (const auto& [key, value] : cfg.items()) {
    const CLI::Option* o = sub.get_option_no_throw("--" + key);
    if (!o || key == "config" || key == "help")
      throw Error(ErrorKind::ConfigError, "/" + key + ": unknown key for '" + sub.get_name() + "'");
    if (is_flag(o)) {
      if (!value.is_boolean()) throw Error(ErrorKind::ConfigError, "/" + key + ": expected true or false");
      if (value.get<bool>()) out.push_back("--" + key);
      continue;
    }
    auto scalar = [&](const json& v, const std::string& path) -> std::string {
      if (v.is_string()) return v.get<std::string>();
      if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
      if (v.is_number()) return fmt17(v.get<double>());
      if (v.is_object()) return v.dump();
      throw Error(ErrorKind::ConfigError, path + ": expected a string or number");
    };
    out.push_back("--" + key);
    if (value.is_array()) {
      std::string joined;
      for (std::size_t i = 0; i < value.size(); ++i)
        joined += (i ? "," : "") + scalar(value[i], "/" + key + "/" + std::to_string(i));
      out.push_back(joined);
    } else {
      out.push_back(scalar(value, "/" + key));
    }
  }
  return out;
}

// ---- shared loaders ----------------------------------------------------------

inline CircleLift load_map(Run& run, const std::string& key, const std::string& arg, std::size_t grid) {
  const JsonArg a = load_json_arg(arg, "--" + key);
  run.inputs[key] = a.value;
  return parse_map(a.value, "/" + key, grid);
}

inline SkewSystem load_system(Run& run, const std::string& arg) {
  JsonArg a = load_json_arg(arg, "--system");
  json v = expand_system_alias(a.value);
  // Pin the semiconjugacy table to an absolute path so the recorded input is self-contained.
  if (v.is_object() && v.contains("base") && v["base"].is_object() && v["base"].contains("h") &&
      v["base"]["h"].is_string())
    v["base"]["h"] = fs::absolute(a.dir / v["base"]["h"].get<std::string>()).string();
  run.inputs["system"] = v;
  return parse_system(v, "/system");
}

inline std::vector<double> jitter(Run& run, std::uint64_t seed, double eps, std::vector<double> xs) {
  run.seeds["seed"] = seed;
  if (eps > 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-eps, eps);
    for (double& x : xs) x += u(rng);
  }
  run.seeds["x0"] = xs;
  return xs;
}

inline json estimate_json(const RotationEstimate& r) {
  return {{"value", r.value},
          {"bound", r.bound},
          {"iterations", r.iterations},
          {"seed_point", r.seed_point},
          {"rigorous", r.rigorous}};
}

inline CsvTable lift_table(const CircleLift& f) {
  return CsvTable{{"x", "F(x)"}, {{f.xs().begin(), f.xs().end()}, {f.ys().begin(), f.ys().end()}}};
}

inline CsvTable h_table(const Semiconjugacy& h) {
  std::vector<double> v(h.lifted.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = frac(h.lifted[i]);
  return CsvTable{{"theta", "h_theta"}, {h.theta, v}};
}

inline void write_plot(Run& run, const std::string& data_file, const std::string& stem, bool branched,
                       const std::vector<double>& x, const FiberDomain& k) {
  double lo = std::isfinite(k.lo) ? k.lo : 0.0, hi = std::isfinite(k.hi) ? k.hi : 0.0;
  if (!std::isfinite(k.lo) || !std::isfinite(k.hi))
    for (double v : x) {
      if (!std::isfinite(k.lo)) lo = std::min(lo, v);
      if (!std::isfinite(k.hi)) hi = std::max(hi, v);
    }
  std::vector<PlotLayer> layers = branched
                                      ? std::vector<PlotLayer>{{data_file, 0, "red"}, {data_file, 1, "blue"}}
                                      : std::vector<PlotLayer>{{data_file, -1, "black"}};
  atomic_write(run.place(stem + ".gp"), gnuplot_script(stem, layers, lo, hi, stem + ".png"));
}

// ---- subcommands -----------------------------------------------------------

/// A registered subcommand: its CLI11 node and the body run after parsing.
struct Command {
  CLI::App* app = nullptr;
  bool dir_output = false;
  std::function<int(Run&)> body;
};

inline std::vector<Command> register_commands(CLI::App& app) {
  std::vector<Command> cmds;

  {  // rotint
    struct O {
      Common c;
      std::string map;
      std::int64_t iters = kDefaultRotationIterations;
      bool oracle = false;
      std::size_t grid = kDefaultGrid;
    };
    auto o = std::make_shared<O>();
    CLI::App* s = app.add_subcommand("rotint", "Rotation interval of a degree-one map");
    s->add_option("--map", o->map, "Map spec (inline JSON or file)")->required();
    s->add_option("--iters", o->iters, "Iterations per endpoint");
    s->add_flag("--oracle", o->oracle, "Use the 10^7-iteration oracle setting");
    s->add_option("--grid", o->grid, "Grid size for sampled maps");
    add_common(s, o->c, false, "json|csv");
    cmds.push_back({s, false, [o](Run& run) {
                      const CircleLift f = load_map(run, "map", o->map, o->grid);
                      const std::int64_t n = o->oracle ? kOracleRotationIterations : o->iters;
                      const WaterFamily w = envelopes(f);
                      const RotationInterval ri = rotation_interval(w, n);
                      *run.log << "rotation interval [" << fmt17(ri.lo.value) << ", " << fmt17(ri.hi.value)
                               << "] bounds " << fmt17(ri.lo.bound) << ", " << fmt17(ri.hi.bound)
                               << (ri.degenerate() ? " (degenerate)" : "") << "\n";
                      if (run.out.empty()) return kOk;
                      if (o->c.format == "csv") {
                        run.emit(CsvTable{{"lo", "hi", "lo_bound", "hi_bound", "span"},
                                          {{ri.lo.value}, {ri.hi.value}, {ri.lo.bound}, {ri.hi.bound}, {w.span}}}
                                     .render());
                      } else {
                        run.emit(json{{"lo", estimate_json(ri.lo)},
                                      {"hi", estimate_json(ri.hi)},
                                      {"span", w.span},
                                      {"degenerate", ri.degenerate()}}
                                     .dump(2) +
                                 "\n");
                      }
                      return kOk;
                    }});
  }

  {  // water
    struct O {
      Common c;
      std::string map;
      double alpha = 0.0;
      std::size_t grid = kDefaultGrid;
    };
    auto o = std::make_shared<O>();
    CLI::App* s = app.add_subcommand("water", "Water function F_alpha in breakpoint form");
    s->add_option("--map", o->map, "Map spec (inline JSON or file)")->required();
    s->add_option("--alpha", o->alpha, "Water level in [0, span]")->required();
    s->add_option("--grid", o->grid, "Grid size for sampled maps");
    add_common(s, o->c, false, "csv|json");
    cmds.push_back({s, false, [o](Run& run) {
                      const CircleLift f = load_map(run, "map", o->map, o->grid);
                      const WaterFamily w = envelopes(f);
                      const CircleLift fa = water_function(w, o->alpha);
                      if (o->c.format == "json")
                        run.emit(json{{"alpha", o->alpha}, {"span", w.span}, {"x", std::vector<double>(fa.xs().begin(), fa.xs().end())}, {"y", std::vector<double>(fa.ys().begin(), fa.ys().end())}}.dump() +
                                 "\n");
                      else
                        run.emit(lift_table(fa).render());
                      return kOk;
                    }});
  }

  {  // solve-alpha
    struct O {
      Common c;
      std::string map;
      double rho = 0.0;
      double tol = 1e-6;
      std::int64_t iters = 0;
      std::size_t grid = kDefaultGrid;
    };
    auto o = std::make_shared<O>();
    CLI::App* s = app.add_subcommand("solve-alpha", "Water level whose map has a target rotation number");
    s->add_option("--map", o->map, "Map spec (inline JSON or file)")->required();
    s->add_option("--rho", o->rho, "Target rotation number")->required();
    s->add_option("--tol", o->tol, "Residual tolerance");
    s->add_option("--iters", o->iters, "Iterations per rotation estimate (0: from --tol)");
    s->add_option("--grid", o->grid, "Grid size for sampled maps");
    add_common(s, o->c, false, "json|csv");
    cmds.push_back({s, false, [o](Run& run) {
                      const CircleLift f = load_map(run, "map", o->map, o->grid);
                      SolveOptions so;
                      so.iterations = o->iters;
                      const AlphaSolution a = solve_alpha(envelopes(f), o->rho, o->tol, so);
                      run.check("residual", a.residual <= o->tol, a.residual, o->tol, "<=");
                      *run.log << "alpha " << fmt17(a.alpha) << " rho " << fmt17(a.rho.value) << " residual "
                               << fmt17(a.residual) << "\n";
                      if (run.out.empty()) return kOk;
                      if (o->c.format == "csv")
                        run.emit(CsvTable{{"target", "alpha", "rho", "residual"},
                                          {{o->rho}, {a.alpha}, {a.rho.value}, {a.residual}}}
                                     .render());
                      else
                        run.emit(json{{"target", o->rho},
                                      {"alpha", a.alpha},
                                      {"rho", estimate_json(a.rho)},
                                      {"residual", a.residual},
                                      {"steps", a.steps},
                                      {"tol", o->tol}}
                                     .dump(2) +
                                 "\n");
                      return kOk;
                    }});
  }

  {  // semiconj
    struct O {
      Common c;
      std::string map;
      double rho = 0.0;
      std::int64_t n = 100000;
      std::int64_t burn = 10000;
      double tol = 1e-6;
      double gap_factor = kDefaultGapFactor;
      double order_tol = 1e-6;
      std::size_t grid = kDefaultGrid;
    };
    auto o = std::make_shared<O>();
    CLI::App* s = app.add_subcommand("semiconj", "Semiconjugacy table h with h o f = R_rho o h");
    s->add_option("--map", o->map, "Map spec (inline JSON or file); non-monotone maps are flooded first")
        ->required();
    s->add_option("--rho", o->rho, "Rotation number")->required();
    s->add_option("--n", o->n, "Orbit length");
    s->add_option("--burn", o->burn, "Transient discarded before the orbit starts");
    s->add_option("--tol", o->tol, "Water-level tolerance for non-monotone maps");
    s->add_option("--gap-factor", o->gap_factor, "Gap threshold as a multiple of the median spacing");
    s->add_option("--order-tol", o->order_tol, "Allowed miss between target and orbit-order rotations");
    s->add_option("--grid", o->grid, "Grid size for sampled maps");
    add_common(s, o->c, false, "csv");
    cmds.push_back({s, false, [o](Run& run) {
                      CircleLift f = load_map(run, "map", o->map, o->grid);
                      if (!f.non_decreasing()) {
                        const WaterFamily w = envelopes(f);
                        f = water_function(w, solve_alpha(w, o->rho, o->tol).alpha);
                      }
                      double t0 = 0.0;
                      for (std::int64_t k = 0; k < o->burn; ++k) t0 = frac(f.eval_unit(t0));
                      SemiconjOptions so;
                      so.gap_factor = o->gap_factor;
                      so.order_tolerance = o->order_tol;
                      const Semiconjugacy h = build_semiconjugacy(f, o->rho, o->n, CirclePoint(t0), so);
                      *run.log << "semiconjugacy: " << h.size() << " points, " << h.gaps.size()
                               << " gaps, defect " << fmt17(h.defect) << ", paired rotation " << fmt17(h.rho)
                               << "\n";
                      if (!run.out.empty()) run.emit(h_table(h).render());
                      return kOk;
                    }});
  }

  {  // orbit
    struct O {
      Common c;
      std::string system;
      double theta0 = 0.0;
      double x0 = 0.5;
      double jitter = 0.0;
      std::int64_t burn = 0;
      std::int64_t count = 1000;
    };
    auto o = std::make_shared<O>();
    CLI::App* s = app.add_subcommand("orbit", "Orbit of a skew product");
    s->add_option("--system", o->system, "System config (inline JSON, file, or paper:fig1|paper:fig2)")->required();
    s->add_option("--theta0", o->theta0, "Base seed");
    s->add_option("--x0", o->x0, "Fiber seed");
    s->add_option("--jitter", o->jitter, "Uniform jitter half-width applied to x0, driven by --seed");
    s->add_option("--burn", o->burn, "Transient steps");
    s->add_option("--count", o->count, "Recorded steps");
    add_common(s, o->c, false, "", true);
    cmds.push_back({s, false, [o](Run& run) {
                      const SkewSystem sys = load_system(run, o->system);
                      const double x0 = jitter(run, o->c.seed, o->jitter, {o->x0}).front();
                      const OrbitSample ob = orbit(sys, o->theta0, x0, o->burn, o->count);
                      run.emit(CsvTable{{"theta", "x"}, {ob.theta, ob.x}}.render());
                      if (o->c.plot_script && !run.out.empty())
                        write_plot(run, run.out.filename().string(), run.out.stem().string(), false, ob.x,
                                   sys.p.domain);
                      return kOk;
                    }});
  }

  {  // attractor
    struct O {
      Common c;
      std::string system;
      double theta0 = 0.0;
      std::vector<double> x0{0.5};
      double jitter = 0.0;
      std::int64_t burn = 10000;
      std::int64_t count = 100000;
      std::size_t bins = kDefaultBins;
      double pinch_tol = 1e-3;
    };
    auto o = std::make_shared<O>();
    CLI::App* s = app.add_subcommand("attractor", "Attractor sample, one branch per fiber seed");
    s->add_option("--system", o->system, "System config (inline JSON, file, or paper:fig1|paper:fig2)")->required();
    s->add_option("--theta0", o->theta0, "Base seed");
    s->add_option("--x0", o->x0, "Fiber seeds, comma separated")->delimiter(',');
    s->add_option("--jitter", o->jitter, "Uniform jitter half-width applied to each x0, driven by --seed");
    s->add_option("--burn", o->burn, "Transient steps");
    s->add_option("--count", o->count, "Recorded steps per seed");
    s->add_option("--bins", o->bins, "Theta bins for the fiber diagnostics");
    s->add_option("--pinch-tol", o->pinch_tol, "Pinching tolerance");
    add_common(s, o->c, false, "", true);
    cmds.push_back({s, false, [o](Run& run) {
                      const SkewSystem sys = load_system(run, o->system);
                      const std::vector<double> seeds = jitter(run, o->c.seed, o->jitter, o->x0);
                      std::vector<double> t, x, b;
                      std::vector<AttractorSample> parts;
                      for (std::size_t i = 0; i < seeds.size(); ++i) {
                        parts.push_back(attractor_sample(sys, o->theta0, seeds[i], o->burn, o->count, o->bins));
                        t.insert(t.end(), parts.back().theta.begin(), parts.back().theta.end());
                        x.insert(x.end(), parts.back().x.begin(), parts.back().x.end());
                        b.insert(b.end(), parts.back().theta.size(), static_cast<double>(i));
                      }
                      AttractorSample all = parts.front();
                      for (std::size_t i = 1; i < parts.size(); ++i) all = merge(all, parts[i]);
                      *run.log << "attractor: " << t.size() << " points, split " << split_detect(all) << ", "
                               << pinching_detect(all, o->pinch_tol).size() << " pinched bins\n";
                      if (run.out.empty()) return kOk;
                      run.emit(CsvTable{{"theta", "x", "branch"}, {t, x, b}}.render());
                      if (o->c.plot_script)
                        write_plot(run, run.out.filename().string(), run.out.stem().string(), seeds.size() > 1, x,
                                   sys.p.domain);
                      return kOk;
                    }});
  }

  {  // lyapunov
    struct O {
      Common c;
      std::string system;
      double theta0 = 0.0;
      double x0 = 0.5;
      double jitter = 0.0;
      std::int64_t burn = 10000;
      std::int64_t count = 1000000;
      bool zero_section = false;
    };
    auto o = std::make_shared<O>();
    CLI::App* s = app.add_subcommand("lyapunov", "Vertical Lyapunov exponent along an orbit");
    s->add_option("--system", o->system, "System config (inline JSON, file, or paper:fig1|paper:fig2)")->required();
    s->add_option("--theta0", o->theta0, "Base seed");
    s->add_option("--x0", o->x0, "Fiber seed");
    s->add_option("--jitter", o->jitter, "Uniform jitter half-width applied to x0, driven by --seed");
    s->add_option("--burn", o->burn, "Transient steps");
    s->add_option("--count", o->count, "Birkhoff terms");
    s->add_flag("--zero-section", o->zero_section, "Transversal exponent of x = 0 instead of the orbit of x0");
    add_common(s, o->c, false, "json");
    cmds.push_back({s, false, [o](Run& run) {
                      const SkewSystem sys = load_system(run, o->system);
                      LyapunovResult r;
                      if (o->zero_section) {
                        r = zero_section_exponent(sys, o->theta0, o->count);
                      } else {
                        const double x0 = jitter(run, o->c.seed, o->jitter, {o->x0}).front();
                        r = vertical_lyapunov(sys, orbit(sys, o->theta0, x0, o->burn, o->count));
                      }
                      *run.log << "lyapunov " << fmt17(r.value) << (r.pinched ? " (pinched)" : "") << "\n";
                      if (!run.out.empty())
                        run.emit(json{{"value", r.value},
                                      {"pinched", r.pinched},
                                      {"floored_terms", r.floored_terms},
                                      {"terms", r.terms},
                                      {"zero_section", o->zero_section}}
                                     .dump(2) +
                                 "\n");
                      return kOk;
                    }});
  }

  struct TransportOpts {
    Common c;
    std::string map, p, q, k, thresholds;
    std::size_t grid = kDefaultGrid;
    bool verify = false;
  };
  auto add_transport_inputs = [](CLI::App* s, TransportOpts& o) {
    s->add_option("--map", o.map, "Base map spec (inline JSON or file)")->required();
    s->add_option("--p", o.p, "Fiber map spec")->required();
    s->add_option("--q", o.q, "Forcing spec")->required();
    s->add_option("--K", o.k, "Fiber domain spec (default: the fiber map's own)");
    s->add_option("--thresholds", o.thresholds, "Transport config record (inline JSON or file)");
    s->add_option("--grid", o.grid, "Grid size for sampled maps");
    s->add_flag("--verify", o.verify, "Exit 2 when any check fails");
  };
  struct Loaded {
    CircleLift f = CircleLift::rigid(0.0);
    FiberMap p;
    ForcingMap q;
    TransportConfig cfg;
  };
  auto load_transport = [](Run& run, const TransportOpts& o) {
    Loaded l;
    l.f = load_map(run, "map", o.map, o.grid);
    const JsonArg p = load_json_arg(o.p, "--p");
    run.inputs["p"] = p.value;
    std::optional<JsonArg> k;
    if (!o.k.empty()) {
      k = load_json_arg(o.k, "--K");
      run.inputs["K"] = k->value;
    }
    l.p = parse_fiber(p.value, "/p", k ? &k->value : nullptr, "/K");
    const JsonArg q = load_json_arg(o.q, "--q");
    run.inputs["q"] = q.value;
    l.q = parse_forcing(q.value, "/q");
    json t = json::object();
    if (!o.thresholds.empty()) t = load_json_arg(o.thresholds, "--thresholds").value;
    l.cfg = parse_transport_config(t, "/thresholds");
    run.inputs["thresholds"] = transport_config_json(l.cfg);
    return l;
  };
  // Writes the CSV datasets of one entry under prefix and returns its JSON summary.
  auto entry_report = [](Run& run, const AtlasEntry& e, const TransportConfig& cfg, const std::string& prefix) {
    json j = {{"rho_target", e.rho_target}, {"ok", e.ok()}};
    if (!e.ok()) {
      j["error"] = e.error;
      run.check(prefix + "pipeline", false, 1.0, 0.0, "error");
      return j;
    }
    j["alpha"] = e.alpha;
    j["alpha_residual"] = e.alpha_residual;
    j["rho_pair"] = e.h->rho;
    j["semiconjugacy_defect"] = e.defect;
    j["base_agreement"] = e.base_agreement;
    j["conjugacy_defect"] = e.conjugacy_defect;
    j["hausdorff"] = e.hausdorff;
    j["lyapunov"] = e.lyapunov.value;
    j["lyapunov_pinched"] = e.lyapunov.pinched;
    j["pointwise_excess"] = e.pointwise_worst;
    j["invariant_points"] = e.invariant.points.size();
    j["invariant_removed"] = e.invariant.removed.size();
    j["support_skipped"] = e.lifted.skipped;
    run.check(prefix + "alpha_residual", e.alpha_residual <= cfg.solve_tol, e.alpha_residual, cfg.solve_tol, "<=");
    run.check(prefix + "semiconjugacy_defect", e.defect <= cfg.max_defect, e.defect, cfg.max_defect, "<=");
    run.check(prefix + "conjugacy_defect", e.conjugacy_defect <= cfg.max_defect, e.conjugacy_defect, cfg.max_defect,
              "<=");
    run.check(prefix + "hausdorff", e.hausdorff <= cfg.hausdorff_tol, e.hausdorff, cfg.hausdorff_tol, "<=");
    run.check(prefix + "lyapunov", e.lyapunov.value <= cfg.lyapunov_tol, e.lyapunov.value, cfg.lyapunov_tol, "<=");
    run.check(prefix + "pointwise_rotation", e.pointwise_worst <= 0.0, e.pointwise_worst, 0.0, "<=");
    if (e.report) {
      const TransportReport& r = *e.report;
      j["invariance_defect"] = r.invariance_defect;
      j["attracted_fraction"] = r.attracted_fraction;
      j["attraction_tail"] = r.best_tail;
      run.check(prefix + "invariance", r.invariance_pass, r.invariance_defect, cfg.invariance_tol, "<=");
      run.check(prefix + "attracted_fraction", r.attraction_pass, r.attracted_fraction, cfg.min_basin_fraction,
                ">=");
      run.check(prefix + "attraction_tail", r.best_tail <= cfg.attraction_tol, r.best_tail, cfg.attraction_tol, "<=");
      std::vector<double> pt, px, pz, tail, att;
      for (const auto& pr : r.probes) {
        pt.push_back(pr.theta);
        px.push_back(pr.x);
        pz.push_back(pr.z);
        tail.push_back(pr.tail);
        att.push_back(pr.attracted ? 1.0 : 0.0);
      }
      write_csv(run.place(prefix + "probes.csv"), CsvTable{{"theta", "x", "z", "tail", "attracted"}, {pt, px, pz, tail, att}});
    }
    write_csv(run.place(prefix + "h.csv"), h_table(*e.h));
    write_csv(run.place(prefix + "invariant.csv"), CsvTable{{"theta"}, {e.invariant.points}});
    write_csv(run.place(prefix + "t_attractor.csv"), CsvTable{{"theta", "x"}, {e.t_attractor.theta, e.t_attractor.x}});
    std::vector<double> gt, gx;
    e.lifted.flatten(gt, gx);
    write_csv(run.place(prefix + "lifted.csv"), CsvTable{{"theta", "x"}, {gt, gx}});
    return j;
  };

  {  // transport
    struct O : TransportOpts {
      double rho = 0.0;
    };
    auto o = std::make_shared<O>();
    o->c.out = "transport";
    CLI::App* s = app.add_subcommand("transport", "Transport the S_rho attractor into T and verify it");
    add_transport_inputs(s, *o);
    s->add_option("--rho", o->rho, "Target rotation number")->required();
    add_common(s, o->c, true);
    cmds.push_back({s, true, [o, load_transport, entry_report](Run& run) {
                      const Loaded l = load_transport(run, *o);
                      const AtlasEntry e = atlas_entry(l.f, l.p, l.q, o->rho, l.cfg);
                      if (!e.ok() && e.error_kind && exit_code(*e.error_kind) != kNumerical)
                        throw Error(*e.error_kind, e.error.substr(e.error.find(": ") + 2));
                      json rep = entry_report(run, e, l.cfg, "");
                      rep["checks"] = run.checks;
                      atomic_write(run.place("transport.json"), rep.dump(2) + "\n");
                      *run.log << "transport rho " << fmt17(o->rho) << ": "
                               << (e.ok() ? (run.failed ? "FAIL" : "PASS") : "ERROR " + e.error) << "\n";
                      if (!e.ok()) return e.error_kind ? exit_code(*e.error_kind) : kNumerical;
                      return o->verify && run.failed ? kNumerical : kOk;
                    }});
  }

  {  // atlas
    struct O : TransportOpts {
      std::vector<double> rhos;
    };
    auto o = std::make_shared<O>();
    o->c.out = "atlas";
    CLI::App* s = app.add_subcommand("atlas", "Coexisting attractors for several target rotation numbers");
    add_transport_inputs(s, *o);
    s->add_option("--rhos", o->rhos, "Target rotation numbers, comma separated")->required()->delimiter(',');
    add_common(s, o->c, true);
    cmds.push_back({s, true, [o, load_transport, entry_report](Run& run) {
                      const Loaded l = load_transport(run, *o);
                      const unsigned jobs = effective_jobs(o->c.jobs);
                      const AttractorAtlas atlas = coexistence_atlas(l.f, l.p, l.q, o->rhos, l.cfg, jobs);
                      json entries = json::array();
                      for (std::size_t i = 0; i < atlas.entries.size(); ++i)
                        entries.push_back(entry_report(run, atlas.entries[i], l.cfg, "entry" + std::to_string(i) + "_"));
                      run.check("support_separation", atlas.disjoint, atlas.min_pairwise_distance,
                                l.cfg.support_separation, ">");
                      const json rep = {{"entries", entries},
                                        {"min_pairwise_distance", atlas.min_pairwise_distance},
                                        {"disjoint", atlas.disjoint},
                                        {"checks", run.checks}};
                      atomic_write(run.place("atlas.json"), rep.dump(2) + "\n");
                      *run.log << "atlas: " << atlas.entries.size() << " entries, min separation "
                               << fmt17(atlas.min_pairwise_distance) << ", " << (run.failed ? "FAIL" : "PASS")
                               << "\n";
                      return o->verify && run.failed ? kNumerical : kOk;
                    }});
  }

  {  // figures
    struct O {
      Common c;
      std::string id;
      std::int64_t burn = 10000;
      std::int64_t count = 200000;
      double theta0 = 0.0;
      std::int64_t birkhoff = 1000000;
      bool verify = false;
    };
    auto o = std::make_shared<O>();
    o->c.out = "figures";
    CLI::App* s = app.add_subcommand("figures", "Datasets for the two example systems");
    s->add_option("--id", o->id, "fig1 or fig2")->required();
    s->add_option("--burn", o->burn, "Transient steps");
    s->add_option("--count", o->count, "Recorded steps per dataset");
    s->add_option("--theta0", o->theta0, "Base seed");
    s->add_option("--birkhoff", o->birkhoff, "Terms for the zero-section exponent");
    s->add_flag("--verify", o->verify, "Exit 2 when any figure check fails");
    add_common(s, o->c, true, "", true);
    cmds.push_back({s, true, [o](Run& run) {
                      const FigureOutput fo = render_figure(o->id, o->burn, o->count, run.out, o->c.plot_script,
                                                            o->theta0);
                      for (const auto& d : fo.datasets) run.outputs.push_back(d.file);
                      if (!fo.script.empty()) run.outputs.push_back(fo.script);
                      FigureCheckOptions fc;
                      fc.birkhoff_n = o->birkhoff;
                      for (const FigureCheck& c : figure_checks(o->id, fo, fc)) {
                        const bool integer_target = c.name == "split_detect" || c.name.rfind("pinched", 0) == 0;
                        run.check(c.name, c.pass, c.value, c.tolerance, integer_target ? "==" : "<=");
                      }
                      atomic_write(run.place(o->id + ".json"), json{{"id", o->id}, {"checks", run.checks}}.dump(2) + "\n");
                      *run.log << o->id << ": " << (run.failed ? "FAIL" : "PASS") << "\n";
                      return o->verify && run.failed ? kNumerical : kOk;
                    }});
  }

  return cmds;
}

// ---- dispatch ----------------------------------------------------------------

inline int dispatch(const std::vector<std::string>& args, std::ostream& log);

/// Re-runs a manifest into a scratch directory and compares every listed output byte for byte.
inline int replay(const fs::path& manifest, const fs::path& into, std::ostream& log) {
  const fs::path mpath = fs::absolute(manifest);
  json m;
  try {
    m = json::parse(read_file(mpath));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ConfigError, mpath.string() + ": " + e.what());
  }
  if (!m.contains("argv") || !m["argv"].is_array() || !m.contains("outputs"))
    throw Error(ErrorKind::ConfigError, mpath.string() + ": not a run manifest");
  const fs::path orig_root = mpath.parent_path();
  const bool dir_output = mpath.filename() == "manifest.json";
  std::vector<std::string> argv;
  const auto& rec = m["argv"];
  const json inputs = m.value("inputs", json::object());
  for (std::size_t i = 0; i < rec.size(); ++i) {
    std::string a = rec[i].get<std::string>();
    if ((a == "--out" || a == "--config") && i + 1 < rec.size()) {
      ++i;
      continue;
    }
    if (a.rfind("--out=", 0) == 0 || a.rfind("--config=", 0) == 0) continue;
    // Recorded inputs replace file references so the replay does not depend on them.
    const std::string key = a.size() > 2 ? a.substr(2) : "";
    if (a.rfind("--", 0) == 0 && key != "thresholds" && inputs.contains(key) && i + 1 < rec.size()) {
      argv.push_back(a);
      argv.push_back(inputs[key].dump());
      ++i;
      continue;
    }
    argv.push_back(a);
  }
  std::error_code ec;
  fs::create_directories(into, ec);
  if (ec) throw Error(ErrorKind::IoError, into.string() + ": " + ec.message());
  fs::path out = dir_output ? into : into / mpath.filename().string().substr(0, mpath.filename().string().size() -
                                                                                  std::string(".manifest.json").size());
  argv.push_back("--out");
  argv.push_back(out.string());
  std::ostringstream sink;
  const int rc = dispatch(argv, sink);
  log << "replayed '" << m["command"].get<std::string>() << "' (exit " << rc << ")\n";
  int mismatches = 0;
  for (const auto& o : m["outputs"]) {
    const std::string rel = o["file"].get<std::string>();
    const fs::path a = orig_root / rel, b = (dir_output ? into : out.parent_path()) / rel;
    bool same = false;
    try {
      same = read_file(a) == read_file(b);
    } catch (const Error&) {
    }
    log << (same ? "MATCH   " : "DIFFER  ") << rel << "\n";
    if (!same) ++mismatches;
  }
  log << (mismatches ? "replay: " + std::to_string(mismatches) + " file(s) differ\n" : "replay: bit-identical\n");
  return mismatches ? kNumerical : kOk;
}

inline int dispatch(const std::vector<std::string>& args, std::ostream& log) {
  CLI::App app{"Rotation theory of circle maps and transported skew-product attractors", "rotatlas"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::vector<Command> cmds = register_commands(app);

  std::string replay_manifest, replay_into;
  CLI::App* rp = app.add_subcommand("replay", "Re-run a manifest and compare its outputs byte for byte");
  rp->add_option("manifest", replay_manifest, "Path to a manifest JSON")->required();
  rp->add_option("--into", replay_into, "Scratch directory (default: a fresh temporary directory)");

  std::vector<std::string> expanded = args;
  try {
    // --config values go first so that explicit flags, parsed later, take precedence.
    if (!args.empty()) {
      const Command* target = nullptr;
      for (const auto& c : cmds)
        if (c.app->get_name() == args.front()) target = &c;
      std::string cfg_path;
      for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) cfg_path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) cfg_path = args[i].substr(9);
      }
      if (target && !cfg_path.empty()) {
        json cfg;
        try {
          cfg = json::parse(read_file(cfg_path));
        } catch (const json::parse_error& e) {
          throw Error(ErrorKind::ConfigError, cfg_path + ": " + e.what());
        }
        std::vector<std::string> tokens = config_tokens(*target->app, cfg);
        expanded.assign(args.begin(), args.begin() + 1);
        expanded.insert(expanded.end(), tokens.begin(), tokens.end());
        expanded.insert(expanded.end(), args.begin() + 1, args.end());
      }
    }
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return exit_code(e.kind());
  }

  try {
    std::vector<std::string> rev(expanded.rbegin(), expanded.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, log, std::cerr);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    if (rp->parsed()) {
      fs::path into = replay_into;
      bool scratch = false;
      if (into.empty()) {
        into = fs::temp_directory_path() /
               ("rotatlas-replay-" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
        scratch = true;
      }
      const int rc = replay(replay_manifest, into, log);
      if (scratch) fs::remove_all(into);
      return rc;
    }
    for (const auto& c : cmds) {
      if (!c.app->parsed()) continue;
      Run run;
      run.command = c.app->get_name();
      run.argv = expanded;
      run.config = option_snapshot(*c.app);
      run.dir_output = c.dir_output;
      run.log = &log;
      const CLI::Option* out_opt = c.app->get_option("--out");
      std::string out_str = out_opt->count() ? out_opt->results().back() : out_opt->get_default_str();
      run.out = out_str;
      run.config["jobs"] = effective_jobs(static_cast<unsigned>(std::stoul(run.config["jobs"].get<std::string>())));
      const auto t0 = std::chrono::steady_clock::now();
      if (run.dir_output) {
        std::error_code ec;
        fs::create_directories(run.out, ec);
        if (ec) throw Error(ErrorKind::IoError, run.out.string() + ": " + ec.message());
      }
      const int rc = c.body(run);
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (!run.out.empty()) atomic_write(run.manifest_path(), manifest_json(run, wall).dump(2) + "\n");
      return rc;
    }
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "IoError: " << e.what() << "\n";
    return kIo;
  } catch (const json::exception& e) {
    std::cerr << "ConfigError: " << e.what() << "\n";
    return kValidation;
  }
  return kValidation;
}

inline int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout);
}

}  // namespace rotatlas::cli
