#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "rotatlas/circle.hpp"
#include "rotatlas/error.hpp"
#include "rotatlas/metric.hpp"
#include "rotatlas/rotation.hpp"
#include "rotatlas/semiconj.hpp"
#include "rotatlas/skew.hpp"

namespace rotatlas {

/// Every threshold and sample size used by the transport pipeline.
struct TransportConfig {
  double solve_tol = 1e-6;
  std::int64_t rotation_iterations = 0;  // 0: chosen from solve_tol
  std::int64_t minimal_burn = 10000;
  std::int64_t minimal_count = 100000;
  std::int64_t horizon = 1000;
  double epsilon = 1e-9;
  std::int64_t table_size = 100000;
  double max_defect = 1e-3;
  double agreement_tol = 1e-9;
  std::size_t bins = kDefaultBins;
  std::int64_t attractor_burn = 10000;
  std::int64_t attractor_count = 200000;
  double attractor_x0 = 0.5;
  std::size_t graph_points = 4096;
  std::size_t conjugacy_samples = 32;
  std::int64_t conjugacy_steps = 1000;
  std::int64_t verify_steps = 10000;
  std::size_t probes = 64;
  double invariance_tol = 1e-2;
  double attraction_tol = 1e-4;
  double min_basin_fraction = 0.25;
  double hausdorff_tol = 1e-2;
  double lyapunov_tol = 1e-2;
  double support_separation = 1e-6;
  std::int64_t pointwise_iterations = 100000;
  std::size_t pointwise_seeds = 8;
};

/// H = (h, Id).
struct ProductConjugacy {
  std::shared_ptr<const Semiconjugacy> h;

  std::pair<double, double> operator()(double theta, double x) const { return {(*h)(theta), x}; }
  std::pair<double, double> inverse(double psi, double x) const { return {h->pseudo_inverse(psi), x}; }
};

struct DerivedSystem {
  SkewSystem t_system;
  SkewSystem s_rho;
  std::shared_ptr<const Semiconjugacy> h;
  MinimalSetSample minimal;
  InvariantSetSample invariant;
  RotationInterval interval;
  double alpha = 0.0;
  double alpha_residual = 0.0;
  CircleLift f_alpha = CircleLift::rigid(0.0);
  double base_agreement = 0.0;  // max |F - F_alpha| over the invariant sample

  ProductConjugacy conjugacy() const { return {h}; }
};

/// Water level, minimal set, invariant set and semiconjugacy for a target
/// rotation number, assembled into the rotation-driven skew product.
inline DerivedSystem derive_forced_system(const CircleLift& f, const FiberMap& p, const ForcingMap& q,
                                          double rho_target, const TransportConfig& cfg = {}) {
  DerivedSystem d;
  const WaterFamily w = envelopes(f);
  SolveOptions so;
  so.iterations = cfg.rotation_iterations;
  const std::int64_t n = solve_iterations(cfg.solve_tol, so);
  d.interval = rotation_interval(w, n);
  if (rho_target < d.interval.lo.value - d.interval.lo.bound || rho_target > d.interval.hi.value + d.interval.hi.bound)
    throw Error(ErrorKind::TargetOutsideRotationSet,
                "target " + std::to_string(rho_target) + " outside [" + std::to_string(d.interval.lo.value) + ", " +
                    std::to_string(d.interval.hi.value) + "]");
  if (w.span == 0.0) {
    d.alpha = 0.0;
    d.alpha_residual = std::fabs(d.interval.lo.value - rho_target);
    d.f_alpha = f;
  } else {
    const AlphaSolution a = solve_alpha(w, rho_target, cfg.solve_tol, so);
    d.alpha = a.alpha;
    d.alpha_residual = a.residual;
    d.f_alpha = water_function(w, a.alpha);
  }
  d.minimal = minimal_set(d.f_alpha, cfg.minimal_burn, cfg.minimal_count, CirclePoint(0.0));
  d.invariant = invariant_set(d.minimal, d.f_alpha, cfg.horizon, cfg.epsilon);
  auto h = std::make_shared<Semiconjugacy>(
      build_semiconjugacy(d.f_alpha, rho_target, cfg.table_size, CirclePoint(d.minimal.orbit.front())));
  if (h->defect > cfg.max_defect)
    throw Error(ErrorKind::SemiconjugacyDefectTooLarge,
                "defect " + std::to_string(h->defect) + " exceeds " + std::to_string(cfg.max_defect));
  d.h = h;
  for (double t : d.invariant.points)
    d.base_agreement = std::max(d.base_agreement, std::fabs(f.eval_unit(t) - d.f_alpha.eval_unit(t)));
  d.t_system = SkewSystem::over_lift(f, p, q);
  // The rotation paired by h is the one the sampled orbit actually realises (within
  // the order tolerance of the target); rotating by it keeps H o T = S o H exact on the table.
  d.s_rho = SkewSystem::over_rotation(h->rho, p, q, h);
  return d;
}

/// Evenly spaced picks (by index) from a sorted sample.
inline std::vector<double> spread_sample(const std::vector<double>& pts, std::size_t k) {
  std::vector<double> out;
  if (pts.empty() || k == 0) return out;
  k = std::min(k, pts.size());
  for (std::size_t i = 0; i < k; ++i) out.push_back(pts[i * pts.size() / k]);
  return out;
}

/// max over sampled theta in U and k <= n of |pi_x S^k(h(theta), x0) - pi_x T^k(theta, x0)|.
inline double conjugacy_defect(const SkewSystem& t_sys, const SkewSystem& s_sys, const ProductConjugacy& hc,
                               const InvariantSetSample& u, std::int64_t n, double x0, std::size_t samples = 32) {
  double worst = 0.0;
  for (double th : spread_sample(u.points, samples)) {
    double ta = th, xa = x0;
    double tb = (*hc.h)(th), xb = x0;
    for (std::int64_t k = 0; k < n; ++k) {
      std::tie(ta, xa) = step(t_sys, ta, xa);
      std::tie(tb, xb) = step(s_sys, tb, xb);
      worst = std::max(worst, std::fabs(xa - xb));
    }
  }
  return worst;
}

/// A multi-valued fiber assignment over a circle sample.
struct GraphCorrespondence {
  std::vector<double> support;              // sorted
  std::vector<std::vector<double>> values;  // sorted per support point
  std::size_t skipped = 0;                  // support points that fell in empty bins

  void flatten(std::vector<double>& t, std::vector<double>& x) const {
    t.clear();
    x.clear();
    for (std::size_t i = 0; i < support.size(); ++i)
      for (double v : values[i]) {
        t.push_back(support[i]);
        x.push_back(v);
      }
  }
};

/// Reads the rotation-side attractor at h(theta) for each theta of the support sample.
inline GraphCorrespondence lift_attractor(const AttractorSample& a_rot, const Semiconjugacy& h,
                                          const std::vector<double>& support) {
  GraphCorrespondence g;
  for (double th : support) {
    const auto& f = a_rot.fibers[a_rot.bin_of(h(th))];
    if (f.empty()) {
      ++g.skipped;
      continue;
    }
    g.support.push_back(th);
    g.values.push_back(f);
  }
  return g;
}

inline GraphCorrespondence lift_attractor(const AttractorSample& a_rot, const Semiconjugacy& h,
                                          const InvariantSetSample& u, std::size_t max_points = 4096) {
  return lift_attractor(a_rot, h, spread_sample(u.points, max_points));
}

struct ProbeResult {
  double theta = 0.0;
  double x = 0.0;
  double z = 0.0;
  double tail = 0.0;
  bool attracted = false;
};

struct TransportReport {
  double invariance_defect = 0.0;
  std::vector<ProbeResult> probes;
  double attracted_fraction = 0.0;
  double best_tail = 0.0;  // largest tail among attracted probes
  bool invariance_pass = false;
  bool attraction_pass = false;

  bool pass() const { return invariance_pass && attraction_pass; }
};

inline double nearest_value(const std::vector<double>& sorted, double x) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), x);
  if (it == sorted.end()) return sorted.back();
  if (it == sorted.begin()) return *it;
  return (x - *(it - 1) <= *it - x) ? *(it - 1) : *it;
}

/// Probe x values spread uniformly across K (across [-1, 1] for unbounded sides).
inline std::vector<double> uniform_probes(const FiberDomain& k, std::size_t m) {
  const double lo = std::isfinite(k.lo) ? k.lo : -1.0;
  const double hi = std::isfinite(k.hi) ? k.hi : 1.0;
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = lo + (hi - lo) * (static_cast<double>(i) + 0.5) / static_cast<double>(m);
  return out;
}

inline TransportReport verify_transport(const SkewSystem& t_sys, const GraphCorrespondence& g, std::int64_t n,
                                        const std::vector<double>& x_probes, const TransportConfig& cfg = {}) {
  TransportReport r;
  if (g.support.empty()) return r;
  const double scale = t_sys.p.domain.diameter();

  std::vector<double> gt, gx, it, ix;
  g.flatten(gt, gx);
  it.reserve(gt.size());
  ix.reserve(gx.size());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    auto [t1, x1] = step(t_sys, gt[i], gx[i]);
    it.push_back(t1);
    ix.push_back(x1);
  }
  r.invariance_defect = hausdorff_distance(it, ix, gt, gx, scale);
  r.invariance_pass = r.invariance_defect <= cfg.invariance_tol;

  const std::int64_t from = n - n / 4;
  std::size_t attracted = 0;
  for (std::size_t j = 0; j < x_probes.size(); ++j) {
    const std::size_t si = (j * g.support.size()) / std::max<std::size_t>(1, x_probes.size());
    ProbeResult pr;
    pr.theta = g.support[si];
    pr.x = x_probes[j];
    pr.z = nearest_value(g.values[si], pr.x);
    double ta = pr.theta, xa = pr.x, tb = pr.theta, xb = pr.z;
    for (std::int64_t k = 1; k <= n; ++k) {
      std::tie(ta, xa) = step(t_sys, ta, xa);
      std::tie(tb, xb) = step(t_sys, tb, xb);
      if (k >= from) pr.tail = std::max(pr.tail, std::fabs(xa - xb));
    }
    pr.attracted = pr.tail <= cfg.attraction_tol;
    if (pr.attracted) {
      ++attracted;
      r.best_tail = std::max(r.best_tail, pr.tail);
    }
    r.probes.push_back(pr);
  }
  r.attracted_fraction = x_probes.empty() ? 0.0 : static_cast<double>(attracted) / static_cast<double>(x_probes.size());
  r.attraction_pass = r.attracted_fraction >= cfg.min_basin_fraction;
  return r;
}

/// Fraction of close support neighbours whose fiber sets jump by more than lambda times their distance.
inline double strangeness_heuristic(const GraphCorrespondence& g, double delta, double lambda = 1e3) {
  std::size_t close = 0, jumps = 0;
  auto set_distance = [](const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (double v : a) d = std::max(d, std::fabs(v - nearest_value(b, v)));
    for (double v : b) d = std::max(d, std::fabs(v - nearest_value(a, v)));
    return d;
  };
  const std::size_t m = g.support.size();
  for (std::size_t i = 0; m > 2 && i < m; ++i) {
    const std::size_t j = (i + 1) % m;
    const double d = circle_distance(g.support[i], g.support[j]);
    if (d >= delta || d == 0.0) continue;
    ++close;
    if (set_distance(g.values[i], g.values[j]) > lambda * d) ++jumps;
  }
  return close == 0 ? 0.0 : static_cast<double>(jumps) / static_cast<double>(close);
}

/// Circle distance between the closest points of two sorted samples.
inline double min_support_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 1.0;
  for (double x : a) d = std::min(d, MinimalSetSample::nearest_distance(b, x));
  return d;
}

struct AtlasEntry {
  double rho_target = 0.0;
  double alpha = 0.0;
  double alpha_residual = 0.0;
  double defect = 0.0;
  double base_agreement = 0.0;
  double conjugacy_defect = 0.0;
  InvariantSetSample invariant;
  AttractorSample t_attractor;
  GraphCorrespondence lifted;
  double hausdorff = 0.0;
  LyapunovResult lyapunov;
  double pointwise_worst = 0.0;  // max |pointwise rho - target| - bound over seeds
  std::optional<TransportReport> report;
  std::shared_ptr<const Semiconjugacy> h;
  std::optional<ErrorKind> error_kind;
  std::string error;

  bool ok() const { return error.empty(); }
};

struct AttractorAtlas {
  std::vector<AtlasEntry> entries;  // sorted by rho_target
  double min_pairwise_distance = 1.0;
  bool disjoint = false;
};

/// Points of a T-orbit sample that lie on the support sample (within tol).
inline AttractorSample restrict_to(const AttractorSample& a, const std::vector<double>& support, double tol) {
  std::vector<double> t, x;
  for (std::size_t i = 0; i < a.theta.size(); ++i)
    if (MinimalSetSample::nearest_distance(support, a.theta[i]) <= tol) {
      t.push_back(a.theta[i]);
      x.push_back(a.x[i]);
    }
  return AttractorSample::from_points(std::move(t), std::move(x), a.bins());
}

/// Full pipeline for one target: derived system, conjugacy defect, attractors on both sides, transport check.
inline AtlasEntry atlas_entry(const CircleLift& f, const FiberMap& p, const ForcingMap& q, double rho,
                              const TransportConfig& cfg) {
  AtlasEntry e;
  e.rho_target = rho;
  try {
    DerivedSystem d = derive_forced_system(f, p, q, rho, cfg);
    e.alpha = d.alpha;
    e.alpha_residual = d.alpha_residual;
    e.defect = d.h->defect;
    e.h = d.h;
    e.base_agreement = d.base_agreement;
    e.invariant = d.invariant;
    e.conjugacy_defect = conjugacy_defect(d.t_system, d.s_rho, d.conjugacy(), d.invariant, cfg.conjugacy_steps,
                                          cfg.attractor_x0, cfg.conjugacy_samples);
    const double theta0 = d.invariant.points[d.invariant.points.size() / 2];
    AttractorSample a_rot =
        attractor_sample(d.s_rho, (*d.h)(theta0), cfg.attractor_x0, cfg.attractor_burn, cfg.attractor_count, cfg.bins);
    e.t_attractor =
        attractor_sample(d.t_system, theta0, cfg.attractor_x0, cfg.attractor_burn, cfg.attractor_count, cfg.bins);
    e.lifted = lift_attractor(a_rot, *d.h, d.invariant, cfg.graph_points);
    std::vector<double> gt, gx;
    e.lifted.flatten(gt, gx);
    AttractorSample direct = restrict_to(e.t_attractor, e.lifted.support, 1.0 / static_cast<double>(cfg.bins));
    e.hausdorff = hausdorff_distance(gt, gx, direct.theta, direct.x, p.domain.diameter());
    OrbitSample o = orbit(d.t_system, theta0, cfg.attractor_x0, cfg.attractor_burn, cfg.attractor_count);
    e.lyapunov = vertical_lyapunov(d.t_system, o);
    e.pointwise_worst = -1.0;
    for (double th : spread_sample(d.invariant.points, cfg.pointwise_seeds)) {
      const RotationEstimate r = pointwise_rotation_number(f, th, cfg.pointwise_iterations);
      e.pointwise_worst = std::max(e.pointwise_worst, std::fabs(r.value - rho) - (r.bound + cfg.solve_tol));
    }
    e.report = verify_transport(d.t_system, e.lifted, cfg.verify_steps, uniform_probes(p.domain, cfg.probes), cfg);
  } catch (const Error& ex) {
    e.error_kind = ex.kind();
    e.error = ex.what();
  } catch (const std::exception& ex) {
    e.error = ex.what();
  }
  return e;
}

/// Runs the pipeline for every target, up to `jobs` at a time, and checks support disjointness.
inline AttractorAtlas coexistence_atlas(const CircleLift& f, const FiberMap& p, const ForcingMap& q,
                                        std::vector<double> rhos, const TransportConfig& cfg = {}, unsigned jobs = 1) {
  std::sort(rhos.begin(), rhos.end());
  for (std::size_t i = 1; i < rhos.size(); ++i)
    if (rhos[i] == rhos[i - 1]) throw Error(ErrorKind::DuplicateTarget, "target " + std::to_string(rhos[i]) + " repeated");
  AttractorAtlas atlas;
  atlas.entries.resize(rhos.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < rhos.size(); i = next++) atlas.entries[i] = atlas_entry(f, p, q, rhos[i], cfg);
  };
  const unsigned nthreads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(rhos.size())));
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < nthreads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  bool all_ok = !atlas.entries.empty();
  for (std::size_t i = 0; i < atlas.entries.size(); ++i) {
    if (!atlas.entries[i].ok()) {
      all_ok = false;
      continue;
    }
    for (std::size_t j = i + 1; j < atlas.entries.size(); ++j) {
      if (!atlas.entries[j].ok()) continue;
      atlas.min_pairwise_distance = std::min(
          atlas.min_pairwise_distance,
          min_support_distance(atlas.entries[i].invariant.points, atlas.entries[j].invariant.points));
    }
  }
  atlas.disjoint = all_ok && atlas.min_pairwise_distance > cfg.support_separation;
  return atlas;
}

}  // namespace rotatlas
