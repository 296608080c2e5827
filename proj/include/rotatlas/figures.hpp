#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "rotatlas/error.hpp"
#include "rotatlas/io.hpp"
#include "rotatlas/skew.hpp"

namespace rotatlas {

inline constexpr double kGoldenMean = std::numbers::phi - 1.0;  // (sqrt 5 - 1)/2

struct PaperSystem {
  std::string id;
  SkewSystem system;
};

/// fig1: monotone p (tanh with a shifted negative branch), negative q.
/// fig2: bimodal p (logistic / cubic), non-negative q. Both over the golden rotation.
inline PaperSystem paper_system(const std::string& id) {
  if (id == "fig1") return {id, SkewSystem::over_rotation(kGoldenMean, fiber_tanh_shifted(), forcing_fig1())};
  if (id == "fig2") return {id, SkewSystem::over_rotation(kGoldenMean, fiber_logistic_cubic(), forcing_fig2())};
  throw Error(ErrorKind::UnknownId, "unknown figure id '" + id + "' (expected fig1 or fig2)");
}

/// Transversal exponent of the fig2 zero section: (log 2.1 + log 2.5)/2 - log 2.
inline const double kFig2ZeroSectionExponent = 0.5 * std::log(5.25) - std::log(2.0);

/// Steps k with x_k x_{k+1} >= 0, i.e. where the sign fails to flip.
inline std::int64_t sign_alternation_failures(const std::vector<double>& x) {
  std::int64_t bad = 0;
  for (std::size_t k = 0; k + 1 < x.size(); ++k)
    if (!(x[k] * x[k + 1] < 0.0)) ++bad;
  return bad;
}

struct FigureDataset {
  std::string file;  // file name inside the output directory
  std::vector<double> theta;
  std::vector<double> x;
  std::vector<double> branch;
};

struct FigureOutput {
  std::vector<FigureDataset> datasets;
  std::string script;  // empty unless requested
};

inline FigureDataset figure_dataset(const SkewSystem& s, std::string file, double theta0, double x0, std::int64_t burn,
                                    std::int64_t count, int branch, bool parity) {
  FigureDataset d;
  d.file = std::move(file);
  OrbitSample o = orbit(s, theta0, x0, burn, count);
  d.theta = std::move(o.theta);
  d.x = std::move(o.x);
  d.branch.resize(d.theta.size());
  for (std::size_t k = 0; k < d.branch.size(); ++k) d.branch[k] = parity ? static_cast<double>(k % 2) : branch;
  return d;
}

/// fig1: one dataset whose branch column is the step parity. fig2: one dataset per seed sign.
inline FigureOutput render_figure(const std::string& id, std::int64_t burn, std::int64_t count, const fs::path& out_dir,
                                  bool plot_script = false, double theta0 = 0.0) {
  const PaperSystem ps = paper_system(id);
  FigureOutput out;
  if (id == "fig1") {
    out.datasets.push_back(figure_dataset(ps.system, "fig1.csv", theta0, 0.5, burn, count, 0, true));
  } else {
    out.datasets.push_back(figure_dataset(ps.system, "fig2_red.csv", theta0, 0.5, burn, count, 0, false));
    out.datasets.push_back(figure_dataset(ps.system, "fig2_blue.csv", theta0, -0.5, burn, count, 1, false));
  }
  double lo = 0.0, hi = 0.0;
  for (const auto& d : out.datasets) {
    write_csv(out_dir / d.file, CsvTable{{"theta", "x", "branch"}, {d.theta, d.x, d.branch}});
    for (double v : d.x) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (plot_script) {
    const double pad = 0.05 * std::max(hi - lo, 1e-3);
    std::vector<PlotLayer> layers;
    if (id == "fig1") {
      layers = {{out.datasets[0].file, 0, "black"}, {out.datasets[0].file, 1, "black"}};
    } else {
      layers = {{out.datasets[0].file, -1, "red"}, {out.datasets[1].file, -1, "blue"}};
    }
    const std::string title = id == "fig1" ? "fig1: the unique attracting set" : "fig2: the two attracting sets";
    out.script = id + ".gp";
    atomic_write(out_dir / out.script, gnuplot_script(title, layers, lo - pad, hi + pad, id + ".png"));
  }
  return out;
}

struct FigureCheck {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct FigureCheckOptions {
  std::int64_t birkhoff_n = 1000000;
  std::size_t bins = kDefaultBins;
  double pinch_tol = 1e-3;
  int pinch_depth = 2;  // forward images of each forcing zero to test
  double lyapunov_tol = 1e-2;
  double exponent_tol = 1e-3;
};

/// fig1: sign alternation and Lyapunov. fig2: two components, pinching along the
/// forward orbits of the forcing zeros, zero-section exponent, Lyapunov per seed.
inline std::vector<FigureCheck> figure_checks(const std::string& id, const FigureOutput& out,
                                              const FigureCheckOptions& opt = {}) {
  const PaperSystem ps = paper_system(id);
  std::vector<FigureCheck> checks;
  auto lyapunov_of = [&](const FigureDataset& d) {
    OrbitSample o;
    o.theta = d.theta;
    o.x = d.x;
    return vertical_lyapunov(ps.system, o).value;
  };
  if (id == "fig1") {
    const auto bad = static_cast<double>(sign_alternation_failures(out.datasets[0].x));
    checks.push_back({"sign_alternation_failures", bad, 0.0, bad == 0.0});
    const double l = lyapunov_of(out.datasets[0]);
    checks.push_back({"lyapunov", l, opt.lyapunov_tol, l <= opt.lyapunov_tol});
    return checks;
  }
  const auto& red = out.datasets[0];
  const auto& blue = out.datasets[1];
  const AttractorSample a = merge(AttractorSample::from_points(red.theta, red.x, opt.bins),
                                  AttractorSample::from_points(blue.theta, blue.x, opt.bins));
  const int split = split_detect(a);
  checks.push_back({"split_detect", static_cast<double>(split), 2.0, split == 2});
  for (const ZeroPoint& z : ps.system.q.zero_set) {
    int hits = 0;
    for (int k = 1; k <= opt.pinch_depth; ++k)
      hits += pinched_near(a, frac(z.theta + k * ps.system.rho), z.side, opt.pinch_tol) ? 1 : 0;
    checks.push_back({"pinched_orbit_" + fmt17(z.theta) + "_" + std::string(side_name(z.side)),
                      static_cast<double>(hits), static_cast<double>(opt.pinch_depth), hits == opt.pinch_depth});
  }
  const double e = zero_section_exponent(ps.system, 0.0, opt.birkhoff_n).value;
  checks.push_back({"zero_section_exponent_error", std::fabs(e - kFig2ZeroSectionExponent), opt.exponent_tol,
                    std::fabs(e - kFig2ZeroSectionExponent) <= opt.exponent_tol});
  for (const auto* d : {&red, &blue}) {
    const double l = lyapunov_of(*d);
    checks.push_back({"lyapunov_" + std::string(d == &red ? "red" : "blue"), l, opt.lyapunov_tol,
                      l <= opt.lyapunov_tol});
  }
  return checks;
}

}  // namespace rotatlas
