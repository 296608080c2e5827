// Acceptance run: one PASS/FAIL line per criterion, indented notes below it.
// Exit status is 0 only when every criterion passes.

#include <chrono>
#include <cstdio>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "rotatlas/cli.hpp"
#include "rotatlas/figures.hpp"
#include "rotatlas/metric.hpp"
#include "rotatlas/rotation.hpp"
#include "rotatlas/semiconj.hpp"
#include "rotatlas/transport.hpp"

using namespace rotatlas;

namespace tol {
constexpr double kEnvelope = 1e-12;        // F_0 = F_l, F_span = F_u, F_alpha = F off plateaus
constexpr int kSweepLevels = 50;
constexpr double kWaterSeconds = 5.0;
constexpr int kRandomLifts = 100;
constexpr std::size_t kRandomGrid = 4096;
constexpr std::size_t kLargeGrid = 1000000;
constexpr double kLargeSeconds = 1.0;
constexpr double kEndpointOracle = 1e-5;
constexpr double kRigidExact = 1e-12;
constexpr double kSolve = 1e-6;
constexpr int kTargets = 5;
constexpr double kSolveSeconds = 60.0;
constexpr double kDefect = 1e-3;
constexpr double kGapFlat = 1e-6;
constexpr double kConjugacy = 1e-3;
constexpr double kConjugacyRigid = 1e-12;
constexpr std::size_t kConjugacySamples = 32;
constexpr std::int64_t kConjugacySteps = 1000;
constexpr double kHausdorff = 1e-2;
constexpr double kInvariance = 1e-2;
constexpr double kTail = 1e-4;
constexpr std::int64_t kTailSteps = 10000;
constexpr double kSeparation = 1e-6;
constexpr double kAtlasSeconds = 600.0;
constexpr std::int64_t kFigureSteps = 1000000;
constexpr double kExponent = 1e-3;
constexpr double kLyapunov = 1e-2;
}  // namespace tol

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> parts;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    parts.push_back(std::string(ok ? "" : "!") + what);
  }
  void note(const std::string& s) { notes.push_back(s); }
};

struct Criterion {
  int id;
  const char* title;
  std::function<void(Outcome&)> body;
};

TransportConfig primary_config() {
  TransportConfig c;
  c.solve_tol = tol::kSolve;
  c.max_defect = tol::kDefect;
  c.hausdorff_tol = tol::kHausdorff;
  c.invariance_tol = tol::kInvariance;
  c.attraction_tol = tol::kTail;
  c.verify_steps = tol::kTailSteps;
  c.conjugacy_samples = tol::kConjugacySamples;
  c.conjugacy_steps = tol::kConjugacySteps;
  c.support_separation = tol::kSeparation;
  return c;
}

const CircleLift& sine() {
  static const CircleLift f = fixtures::sine_lift();
  return f;
}

const WaterFamily& sine_family() {
  static const WaterFamily w = envelopes(sine());
  return w;
}

std::vector<double> sine_targets() {
  const RotationInterval ri = rotation_interval(sine_family(), solve_iterations(tol::kSolve, {}));
  return fixtures::golden_targets(ri.lo.value, ri.hi.value, tol::kTargets);
}

/// The derived system at the first golden target, or the reason it could not be built.
struct Derivation {
  std::optional<DerivedSystem> system;
  std::string error;
  std::optional<double> best_alpha;
};

const Derivation& sine_derivation() {
  static const Derivation d = [] {
    Derivation r;
    try {
      r.system = derive_forced_system(sine(), fiber_tanh(), forcing_cos_shift(2.0), sine_targets().front(),
                                      primary_config());
    } catch (const NoConvergenceError& e) {
      r.error = e.what();
      r.best_alpha = e.best_alpha();
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    return r;
  }();
  return d;
}

const DerivedSystem& arnold_derivation() {
  static const DerivedSystem d =
      derive_forced_system(fixtures::arnold_lift(), fiber_tanh(), forcing_cos_shift(2.0), kGoldenMean, primary_config());
  return d;
}

/// What happens at the best level the bisection found: the orbit locks onto a cycle.
std::string periodic_probe(double alpha) {
  try {
    minimal_set(water_function(sine_family(), alpha), 10000, 100000);
    return "minimal_set at best alpha " + num(alpha) + " succeeded";
  } catch (const PeriodicOrbitError& e) {
    return "at best alpha " + num(alpha) + " the orbit is periodic with period " + std::to_string(e.period());
  } catch (const std::exception& e) {
    return std::string("at best alpha: ") + e.what();
  }
}

// ---- semiconjugacy checks shared by the primary system and the control ------------

void semiconj_checks(Outcome& o, const CircleLift& f, double rho, const std::string& label, bool primary) {
  const double t0 = minimal_set(f, 10000, 1).orbit.front();
  const Semiconjugacy h4 = build_semiconjugacy(f, rho, 10000, CirclePoint(t0));
  const Semiconjugacy h5 = build_semiconjugacy(f, rho, 100000, CirclePoint(t0));
  bool monotone = true;
  for (std::size_t i = 1; i < h5.size(); ++i) monotone = monotone && h5.lifted[i] >= h5.lifted[i - 1];
  // The wrap cell closes the loop at lifted[0] + 1, so the total increase is one
  // exactly when the table stays inside a unit window.
  const double spread = h5.lifted.back() - h5.lifted.front();
  const MinimalSetSample p = minimal_set(f, 10000, 100000, CirclePoint(t0));
  const InvariantSetSample u = invariant_set(p, f);
  double roundtrip = 0.0;
  for (double th : u.points) roundtrip = std::max(roundtrip, circle_distance(h5.pseudo_inverse(h5(th)), th));
  double gap_var = 0.0;
  for (const Gap& g : h5.gaps) {
    const double len = g.length();
    const double ramp_from = len - std::min(h5.ramp, 0.5 * len);
    for (double s : {0.25, 0.5, 0.75}) {
      const double x = g.left + s * ramp_from;
      gap_var = std::max(gap_var, std::fabs(h5.lift(x) - h5.lift(g.left)));
    }
  }
  const std::string summary = label + ": defect N=1e4 " + num(h4.defect) + ", N=1e5 " + num(h5.defect) +
                              ", roundtrip " + num(roundtrip) + " (2x spacing " + num(2.0 * h5.max_spacing()) +
                              "), gaps " + std::to_string(h5.gaps.size()) + " var " + num(gap_var);
  if (!primary) {
    o.note(summary);
    return;
  }
  o.require(h5.defect <= tol::kDefect, "defect " + num(h5.defect) + " <= 1e-3");
  o.require(h5.defect < h4.defect, "defect decreasing");
  o.require(monotone && spread <= 1.0, "monotone, increase 1");
  o.require(roundtrip <= 2.0 * h5.max_spacing(), "roundtrip " + num(roundtrip));
  o.require(gap_var <= tol::kGapFlat, "flat on gaps " + num(gap_var));
}

// ---- criteria -----------------------------------------------------------------

void water_laws(Outcome& o) {
  const auto t0 = Clock::now();
  const WaterFamily w = envelopes(sine());
  const double d0 = fixtures::lift_distance(water_function(w, 0.0), w.lower);
  const double d1 = fixtures::lift_distance(water_function(w, w.span), w.upper);
  bool all_monotone = true, ordered = true;
  double off_plateau = 0.0;
  const double cell = 1.0 / static_cast<double>(sine().size());
  std::optional<CircleLift> prev;
  for (int k = 0; k < tol::kSweepLevels; ++k) {
    const CircleLift fa = water_function(w, w.span * k / (tol::kSweepLevels - 1));
    all_monotone = all_monotone && fa.non_decreasing(0.0);
    if (prev) {
      for (double x : fa.xs()) ordered = ordered && fa.eval_unit(x) >= prev->eval_unit(x) - tol::kEnvelope;
      for (double x : prev->xs()) ordered = ordered && fa.eval_unit(x) >= prev->eval_unit(x) - tol::kEnvelope;
    }
    const PlateauSet flats = plateau_set(fa);
    for (double x : sine().xs())
      if (!flats.contains(x, cell)) off_plateau = std::max(off_plateau, std::fabs(fa.eval_unit(x) - sine().eval_unit(x)));
    prev = fa;
  }
  const double secs = seconds_since(t0);
  o.require(d0 <= tol::kEnvelope && d1 <= tol::kEnvelope, "endpoints " + num(d0) + "/" + num(d1));
  o.require(all_monotone, "non-decreasing");
  o.require(ordered, "monotone in alpha");
  o.require(off_plateau <= tol::kEnvelope, "off-plateau " + num(off_plateau));
  o.require(secs < tol::kWaterSeconds, num(secs) + " s");
  const oracle::Sine s;
  double worst = 0.0;
  for (int i = 0; i < 4096; ++i) {
    const double x = (i + 0.37) / 4096.0;
    worst = std::max(worst, std::fabs(w.lower.eval_unit(x) - static_cast<double>(s.lower(x))));
    worst = std::max(worst, std::fabs(w.upper.eval_unit(x) - static_cast<double>(s.upper(x))));
  }
  o.note("envelopes vs closed-form sine envelopes: " + num(worst) + " (interpolation on 2^17 cells)");
}

void envelope_kernel(Outcome& o) {
  std::mt19937_64 rng(20240601);
  int mismatches = 0;
  for (int t = 0; t < tol::kRandomLifts; ++t) {
    const CircleLift f = fixtures::random_lift(rng, tol::kRandomGrid);
    const std::vector<double> ys(f.ys().begin(), f.ys().end());
    const auto lo = oracle::window_min(ys);
    const auto hi = oracle::window_max(ys);
    const CircleLift fl = lower_envelope(f), fu = upper_envelope(f);
    for (std::size_t i = 0; i < ys.size(); ++i) {
      if (fl.eval_unit(f.xs()[i]) != lo[i]) ++mismatches;
      if (fu.eval_unit(f.xs()[i]) != hi[i]) ++mismatches;
    }
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " mismatches on " + std::to_string(tol::kRandomLifts) +
                                 " lifts");
  const CircleLift big = fixtures::sine_lift(0.3, 0.25, tol::kLargeGrid);
  const auto t0 = Clock::now();
  const WaterFamily w = envelopes(big);
  const double secs = seconds_since(t0);
  o.require(secs < tol::kLargeSeconds, "N=1e6 " + num(secs) + " s");
  o.note("N=1e6 span " + num(w.span));
}

void rotation_numbers(Outcome& o) {
  double rigid_err = 0.0;
  bool bounds = true;
  for (double rho : {0.1, 0.25, kGoldenMean, 0.7071067811865476}) {
    const RotationEstimate r = rotation_number(CircleLift::rigid(rho), kDefaultRotationIterations);
    rigid_err = std::max(rigid_err, std::fabs(r.value - rho));
    bounds = bounds && r.bound <= 1.0 / static_cast<double>(r.iterations);
  }
  o.require(rigid_err <= tol::kRigidExact && bounds, "rigid error " + num(rigid_err));
  const RotationInterval ri = rotation_interval(sine_family(), kDefaultRotationIterations);
  const double e_lo = std::fabs(ri.lo.value - oracle::kRhoLower1e7);
  const double e_hi = std::fabs(ri.hi.value - oracle::kRhoUpper1e7);
  o.require(e_lo <= tol::kEndpointOracle && e_hi <= tol::kEndpointOracle,
            "endpoints vs oracle " + num(e_lo) + "/" + num(e_hi));
  bool staircase = true;
  std::optional<RotationEstimate> prev;
  for (int k = 0; k < tol::kSweepLevels; ++k) {
    const RotationEstimate r = rotation_number(
        water_function(sine_family(), sine_family().span * k / (tol::kSweepLevels - 1)), kDefaultRotationIterations);
    if (prev) staircase = staircase && r.value >= prev->value - (r.bound + prev->bound);
    prev = r;
  }
  o.require(staircase, "alpha -> rho non-decreasing");
  o.note("interval [" + num(ri.lo.value) + ", " + num(ri.hi.value) + "] at n=1e5");
}

void solve_targets(Outcome& o) {
  const auto t0 = Clock::now();
  int solved = 0;
  double worst = 0.0;
  for (double target : sine_targets()) {
    try {
      const AlphaSolution a = solve_alpha(sine_family(), target, tol::kSolve);
      const double rho = rotation_number(water_function(sine_family(), a.alpha), kOracleRotationIterations).value;
      worst = std::max(worst, std::fabs(rho - target));
      if (std::fabs(rho - target) <= tol::kSolve) ++solved;
    } catch (const NoConvergenceError& e) {
      worst = std::max(worst, e.residual());
      o.note("target " + num(target) + ": NoConvergence, best residual " + num(e.residual()) + "; " +
             periodic_probe(e.best_alpha()));
    }
  }
  const double secs = seconds_since(t0);
  o.require(solved == tol::kTargets, std::to_string(solved) + "/5 within 1e-6 (worst " + num(worst) + ")");
  o.require(secs < tol::kSolveSeconds, num(secs) + " s");
}

void semiconjugacy(Outcome& o) {
  const Derivation& d = sine_derivation();
  if (d.system) {
    semiconj_checks(o, d.system->f_alpha, d.system->h->target_rho, "sine family", true);
  } else {
    o.require(false, "sine-family F_alpha*: " + d.error);
    if (d.best_alpha) o.note(periodic_probe(*d.best_alpha));
  }
  semiconj_checks(o, fixtures::arnold_lift(), kGoldenMean, "control, Arnold map", false);
}

void conjugacy(Outcome& o) {
  const TransportConfig cfg = primary_config();
  const DerivedSystem rigid = derive_forced_system(CircleLift::rigid(kGoldenMean), fiber_tanh(), forcing_cos_shift(2.0),
                                                   kGoldenMean, cfg);
  const double dr = conjugacy_defect(rigid.t_system, rigid.s_rho, rigid.conjugacy(), rigid.invariant,
                                     tol::kConjugacySteps, 0.5, tol::kConjugacySamples);
  o.require(dr <= tol::kConjugacyRigid, "rigid " + num(dr));
  const Derivation& d = sine_derivation();
  if (d.system) {
    const double ds = conjugacy_defect(d.system->t_system, d.system->s_rho, d.system->conjugacy(), d.system->invariant,
                                       tol::kConjugacySteps, 0.5, tol::kConjugacySamples);
    o.require(ds <= tol::kConjugacy, "sine family " + num(ds));
  } else {
    o.require(false, "sine family: no derived system");
  }
  const DerivedSystem& a = arnold_derivation();
  o.note("control, Arnold map: defect " + num(conjugacy_defect(a.t_system, a.s_rho, a.conjugacy(), a.invariant,
                                                                 tol::kConjugacySteps, 0.5, tol::kConjugacySamples)));
}

std::string entry_summary(const AtlasEntry& e) {
  if (!e.ok()) return e.error;
  return "hausdorff " + num(e.hausdorff) + ", invariance " + num(e.report->invariance_defect) + ", tail " +
         num(e.report->best_tail) + ", attracted " + num(e.report->attracted_fraction) + ", lyapunov " +
         num(e.lyapunov.value);
}

void transport(Outcome& o) {
  const TransportConfig cfg = primary_config();
  const Derivation& d = sine_derivation();
  if (d.system) {
    const AtlasEntry e = atlas_entry(sine(), fiber_tanh(), forcing_cos_shift(2.0), d.system->h->target_rho, cfg);
    o.require(e.ok() && e.hausdorff <= tol::kHausdorff, "hausdorff " + num(e.hausdorff));
    o.require(e.ok() && e.report && e.report->invariance_pass, "invariance");
    o.require(e.ok() && e.report && e.report->best_tail <= tol::kTail && e.report->attraction_pass, "tails");
  } else {
    o.require(false, "sine family: no derived system");
  }
  const AtlasEntry smooth = atlas_entry(fixtures::arnold_lift(), fiber_tanh(), forcing_cos_shift(2.0), kGoldenMean, cfg);
  o.note("control, Arnold map, tanh fiber: " + entry_summary(smooth));
  const AtlasEntry pinched = atlas_entry(fixtures::arnold_lift(), fiber_logistic_cubic(), forcing_fig2(), kGoldenMean, cfg);
  o.note("control, Arnold map, fig2 fiber: " + entry_summary(pinched));
}

void coexistence(Outcome& o) {
  const auto t0 = Clock::now();
  const unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  const AttractorAtlas a =
      coexistence_atlas(sine(), fiber_tanh(), forcing_cos_shift(2.0), sine_targets(), primary_config(), jobs);
  int ok = 0, rot_ok = 0;
  for (const AtlasEntry& e : a.entries) {
    if (e.ok()) {
      ++ok;
      if (e.pointwise_worst <= 0.0) ++rot_ok;
    } else {
      o.note("rho " + num(e.rho_target) + ": " + e.error);
    }
  }
  const double secs = seconds_since(t0);
  o.require(ok == tol::kTargets, std::to_string(ok) + "/5 entries built");
  o.require(a.disjoint, "separation " + num(a.min_pairwise_distance));
  o.require(rot_ok == tol::kTargets, std::to_string(rot_ok) + "/5 base rotations");
  o.require(secs < tol::kAtlasSeconds, num(secs) + " s");
}

void figures(Outcome& o) {
  const SkewSystem fig1 = paper_system("fig1").system;
  FigureOutput f1;
  f1.datasets.push_back(figure_dataset(fig1, "fig1.csv", 0.0, 0.5, 10000, tol::kFigureSteps, 0, true));
  FigureOutput f2;
  const SkewSystem fig2 = paper_system("fig2").system;
  f2.datasets.push_back(figure_dataset(fig2, "fig2_red.csv", 0.0, 0.5, 10000, 200000, 0, false));
  f2.datasets.push_back(figure_dataset(fig2, "fig2_blue.csv", 0.0, -0.5, 10000, 200000, 1, false));
  FigureCheckOptions opt;
  opt.birkhoff_n = tol::kFigureSteps;
  opt.exponent_tol = tol::kExponent;
  opt.lyapunov_tol = tol::kLyapunov;
  for (const auto* set : {&f1, &f2}) {
    const std::string id = set == &f1 ? "fig1" : "fig2";
    for (const FigureCheck& c : figure_checks(id, *set, opt)) o.require(c.pass, id + " " + c.name + " " + num(c.value));
  }
}

void determinism(Outcome& o) {
  const fs::path dir = fs::temp_directory_path() / "rotatlas-acceptance-replay";
  fs::remove_all(dir);
  const std::string sine_spec = R"({"kind":"sine","a":0.3,"b":0.25,"grid":16384})";
  const std::string arnold_spec = R"({"kind":"sine","a":0.6127590585,"b":0.1,"grid":16384})";
  const std::string quick = R"({"minimal_count":20000,"table_size":20000,"attractor_count":20000,)"
                            R"("verify_steps":1000,"probes":8,"pointwise_iterations":10000})";
  const std::string golden = "0.6180339887498949";
  const std::vector<std::vector<std::string>> runs = {
      {"rotint", "--map", sine_spec, "--out", (dir / "rotint.json").string()},
      {"water", "--map", sine_spec, "--alpha", "0.05", "--out", (dir / "water.csv").string()},
      {"solve-alpha", "--map", sine_spec, "--rho", "0.22", "--out", (dir / "solve.json").string()},
      {"semiconj", "--map", arnold_spec, "--rho", golden, "--n", "20000", "--out", (dir / "h.csv").string()},
      {"orbit", "--system", "paper:fig1", "--count", "20000", "--out", (dir / "orbit.csv").string()},
      {"attractor", "--system", "paper:fig2", "--x0", "0.5,-0.5", "--count", "20000", "--seed", "42", "--jitter",
       "1e-3", "--plot-script", "--out", (dir / "attractor.csv").string()},
      {"lyapunov", "--system", "paper:fig2", "--count", "20000", "--out", (dir / "lyapunov.json").string()},
      {"figures", "--id", "fig1", "--count", "20000", "--plot-script", "--out", (dir / "fig1").string()},
      {"figures", "--id", "fig2", "--count", "20000", "--birkhoff", "20000", "--out", (dir / "fig2").string()},
      {"transport", "--map", arnold_spec, "--p", R"({"name":"tanh"})", "--q", R"({"name":"cos_shift","c":2})",
       "--rho", golden, "--thresholds", quick, "--out", (dir / "transport").string()},
      {"atlas", "--map", arnold_spec, "--p", R"({"name":"tanh"})", "--q", R"({"name":"cos_shift","c":2})", "--rhos",
       golden, "--thresholds", quick, "--jobs", "2", "--out", (dir / "atlas").string()},
  };
  const std::vector<fs::path> manifests = {
      dir / "rotint.json.manifest.json", dir / "water.csv.manifest.json",  dir / "solve.json.manifest.json",
      dir / "h.csv.manifest.json",       dir / "orbit.csv.manifest.json",  dir / "attractor.csv.manifest.json",
      dir / "lyapunov.json.manifest.json", dir / "fig1" / "manifest.json", dir / "fig2" / "manifest.json",
      dir / "transport" / "manifest.json", dir / "atlas" / "manifest.json"};
  int identical = 0, parsed = 0, files = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    std::ostringstream sink;
    const int rc = cli::dispatch(runs[i], sink);
    if (rc != 0) o.note(runs[i][0] + " exited " + std::to_string(rc));
    const json m = json::parse(read_file(manifests[i]));
    for (const auto& out : m["outputs"]) {
      ++files;
      const fs::path p = manifests[i].parent_path() / out["file"].get<std::string>();
      try {
        const std::string ext = p.extension().string();
        if (ext == ".csv") read_csv(p);
        else if (ext == ".json") (void)json::parse(read_file(p));
        else (void)read_file(p);
        ++parsed;
      } catch (const std::exception& e) {
        o.note(p.string() + ": " + e.what());
      }
    }
    std::ostringstream log;
    if (cli::replay(manifests[i], dir / ("replay-" + std::to_string(i)), log) == 0) ++identical;
    else o.note(log.str());
  }
  o.require(identical == static_cast<int>(runs.size()),
            std::to_string(identical) + "/" + std::to_string(runs.size()) + " manifests replay bit-identically");
  o.require(parsed == files, std::to_string(parsed) + "/" + std::to_string(files) + " outputs parse");
  fs::remove_all(dir);
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "water-function laws", water_laws},
      {2, "envelope kernel", envelope_kernel},
      {3, "rotation numbers", rotation_numbers},
      {4, "solve_alpha", solve_targets},
      {5, "semiconjugacy", semiconjugacy},
      {6, "conjugacy identity", conjugacy},
      {7, "transport verification", transport},
      {8, "coexistence", coexistence},
      {9, "figure reproduction", figures},
      {10, "determinism", determinism},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      c.body(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    std::string detail;
    for (const auto& p : o.parts) detail += (detail.empty() ? "" : "; ") + p;
    std::printf("[%s] %2d %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.title, seconds_since(t0),
                detail.c_str());
    for (const auto& n : o.notes) std::printf("         note: %s\n", n.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d/%zu criteria pass\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
