#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <deque>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rotatlas/circle.hpp"
#include "rotatlas/error.hpp"

namespace rotatlas {

namespace detail {

/// out[s] = min(v[s], ..., v[s+w-1]) for every full window, via a monotone deque.
inline std::vector<double> sliding_min(std::span<const double> v, std::size_t w) {
  std::vector<double> out;
  if (w == 0 || v.size() < w) return out;
  out.resize(v.size() - w + 1);
  std::deque<std::size_t> dq;
  for (std::size_t j = 0; j < v.size(); ++j) {
    while (!dq.empty() && v[dq.back()] >= v[j]) dq.pop_back();
    dq.push_back(j);
    if (dq.front() + w <= j) dq.pop_front();
    if (j + 1 >= w) out[j + 1 - w] = v[dq.front()];
  }
  return out;
}

inline std::vector<double> sliding_max(std::span<const double> v, std::size_t w) {
  std::vector<double> neg(v.begin(), v.end());
  for (auto& x : neg) x = -x;
  auto out = sliding_min(neg, w);
  for (auto& x : out) x = -x;
  return out;
}

/// Drops interior nodes of exactly flat runs; the function is unchanged.
inline std::vector<Node> compress_flats(std::vector<Node> nodes, int degree) {
  const std::size_t m = nodes.size();
  if (m < 3) return nodes;
  std::vector<Node> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    double prev = i == 0 ? nodes[m - 1].y - degree : nodes[i - 1].y;
    double next = i + 1 == m ? nodes[0].y + degree : nodes[i + 1].y;
    if (prev == nodes[i].y && next == nodes[i].y) continue;
    out.push_back(nodes[i]);
  }
  if (out.empty()) out.push_back(nodes[0]);
  return out;
}

/// Shared tail of both envelopes. level[i] is the envelope at node i; inside
/// cell i the envelope is min(F, level[i+1]) (lower) or max(F, level[i])
/// (upper), which adds at most one crossing node per cell.
inline CircleLift assemble_envelope(const CircleLift& f, std::span<const double> level, bool lower) {
  const std::size_t m = f.size();
  std::vector<Node> nodes;
  nodes.reserve(m + 16);
  for (std::size_t i = 0; i < m; ++i) {
    const auto ii = static_cast<std::ptrdiff_t>(i);
    const double x0 = f.node_x(ii), x1 = f.node_x(ii + 1);
    const double y0 = f.node_y(ii), y1 = f.node_y(ii + 1);
    const double l_here = level[i];
    const double l_next = i + 1 < m ? level[i + 1] : level[0] + f.degree();
    nodes.push_back({x0, l_here});
    const double c = lower ? l_next : l_here;
    if (y0 < c && c < y1) {
      double t = x0 + (c - y0) / (y1 - y0) * (x1 - x0);
      if (t > x0 && t < x1) nodes.push_back({t, c});
    }
  }
  for (auto& nd : nodes) {
    if (nd.x >= 1.0) {
      nd.x -= 1.0;
      nd.y -= f.degree();
    }
  }
  std::sort(nodes.begin(), nodes.end(), [](const Node& a, const Node& b) { return a.x < b.x; });
  nodes.erase(std::unique(nodes.begin(), nodes.end(), [](const Node& a, const Node& b) { return a.x == b.x; }),
              nodes.end());
  return CircleLift::from_breakpoints(compress_flats(std::move(nodes), f.degree()), f.degree(),
                                      f.representation_error());
}

inline std::vector<double> lower_levels(const CircleLift& f) {
  const std::size_t m = f.size();
  std::vector<double> ext(2 * m - 1);
  for (std::size_t j = 0; j < ext.size(); ++j) ext[j] = f.node_y(static_cast<std::ptrdiff_t>(j));
  return sliding_min(ext, m);
}

inline std::vector<double> upper_levels(const CircleLift& f) {
  const std::size_t m = f.size();
  std::vector<double> ext(2 * m - 1);
  for (std::size_t j = 0; j < ext.size(); ++j)
    ext[j] = f.node_y(static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(m) + 1);
  return sliding_max(ext, m);
}

inline void require_degree_one(const CircleLift& f) {
  if (f.degree() != 1)
    throw Error(ErrorKind::DegreeError, "expected a degree-one lifting, got degree " + std::to_string(f.degree()));
}

}  // namespace detail

/// F_l(x) = inf{F(y) : y >= x}. Exact for the piecewise-linear lift.
inline CircleLift lower_envelope(const CircleLift& f) {
  detail::require_degree_one(f);
  auto levels = detail::lower_levels(f);
  return detail::assemble_envelope(f, levels, true);
}

/// F_u(x) = sup{F(y) : y <= x}. Exact for the piecewise-linear lift.
inline CircleLift upper_envelope(const CircleLift& f) {
  detail::require_degree_one(f);
  auto levels = detail::upper_levels(f);
  return detail::assemble_envelope(f, levels, false);
}

struct WaterFamily {
  CircleLift base;
  CircleLift lower;
  CircleLift upper;
  double span = 0.0;  // ||F - F_l||_inf
};

inline WaterFamily envelopes(const CircleLift& f) {
  detail::require_degree_one(f);
  auto lo_levels = detail::lower_levels(f);
  double span = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) span = std::max(span, f.ys()[i] - lo_levels[i]);
  return WaterFamily{f, detail::assemble_envelope(f, lo_levels, true), upper_envelope(f), span};
}

/// F_alpha = (min{F, F_l + alpha})_u for 0 <= alpha <= span.
inline CircleLift water_function(const WaterFamily& w, double alpha) {
  const double slack = 1e-15 * (1.0 + w.span);
  if (!(alpha >= 0.0) || alpha > w.span + slack)
    throw Error(ErrorKind::LevelOutOfRange,
                "level " + std::to_string(alpha) + " outside [0, " + std::to_string(w.span) + "]");
  alpha = std::min(alpha, w.span);

  // Both F and F_l are linear between consecutive merged abscissae.
  std::vector<double> xs;
  xs.reserve(w.base.size() + w.lower.size());
  std::merge(w.base.xs().begin(), w.base.xs().end(), w.lower.xs().begin(), w.lower.xs().end(),
             std::back_inserter(xs));
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

  const std::size_t m = xs.size();
  std::vector<double> fv(m), gv(m);
  for (std::size_t i = 0; i < m; ++i) {
    fv[i] = w.base.eval_unit(xs[i]);
    gv[i] = w.lower.eval_unit(xs[i]) + alpha;
  }
  std::vector<Node> nodes;
  nodes.reserve(m + 16);
  for (std::size_t i = 0; i < m; ++i) {
    nodes.push_back({xs[i], std::min(fv[i], gv[i])});
    const double x1 = i + 1 < m ? xs[i + 1] : xs[0] + 1.0;
    const double f1 = i + 1 < m ? fv[i + 1] : fv[0] + 1.0;
    const double g1 = i + 1 < m ? gv[i + 1] : gv[0] + 1.0;
    const double d0 = fv[i] - gv[i], d1 = f1 - g1;
    if ((d0 < 0.0 && d1 > 0.0) || (d0 > 0.0 && d1 < 0.0)) {
      const double s = d0 / (d0 - d1);
      const double t = xs[i] + s * (x1 - xs[i]);
      if (t > xs[i] && t < x1) nodes.push_back({t, gv[i] + s * (g1 - gv[i])});
    }
  }
  auto clipped = CircleLift::from_breakpoints(std::move(nodes), 1, w.base.representation_error());
  return upper_envelope(clipped);
}

struct RotationEstimate {
  double value = 0.0;
  double bound = 0.0;  // guaranteed half-width for non-decreasing lifts
  std::int64_t iterations = 0;
  double seed_point = 0.0;
  bool rigorous = true;
};

struct RotationInterval {
  RotationEstimate lo;
  RotationEstimate hi;

  bool degenerate() const { return hi.value - lo.value <= lo.bound + hi.bound; }
};

namespace detail {

/// Iterates the lift on fractional positions, counting whole turns separately so
/// the total displacement F^n(x0) - x0 = turns + t_n - t_0 carries no drift.
struct OrbitCursor {
  const CircleLift& f;
  double t;
  std::int64_t turns = 0;
  double t0;

  OrbitCursor(const CircleLift& lift, double x0) : f(lift), t(frac(x0)), t0(frac(x0)) {}

  void step() {
    const double y = f.eval_unit(t);
    const double k = std::floor(y);
    turns += static_cast<std::int64_t>(k);
    t = y - k;
    if (t >= 1.0) {
      t = 0.0;
      ++turns;
    }
  }

  double displacement() const { return static_cast<double>(turns) + (t - t0); }
};

}  // namespace detail

inline constexpr std::int64_t kDefaultRotationIterations = 100000;
inline constexpr std::int64_t kOracleRotationIterations = 10000000;

/// rho(F) = lim (F^n(x) - x)/n for non-decreasing F; |value - rho| <= 1/n for
/// the represented map, plus n times the representation error.
inline RotationEstimate rotation_number(const CircleLift& f, std::int64_t n = kDefaultRotationIterations,
                                        double x0 = 0.0) {
  detail::require_degree_one(f);
  if (n < 1) throw Error(ErrorKind::NotMonotone, "iteration count must be positive");
  const double dec = f.max_decrease();
  if (dec > 1e-12)
    throw Error(ErrorKind::NotMonotone, "lift decreases by " + std::to_string(dec) + " between nodes");
  detail::OrbitCursor cur(f, x0);
  for (std::int64_t k = 0; k < n; ++k) cur.step();
  const double dn = static_cast<double>(n);
  return {cur.displacement() / dn, 1.0 / dn + dn * f.representation_error(), n, x0, true};
}

/// Limsup proxy for the F-rotation number of x: the largest tail average
/// (F^k(x) - x)/k over k in [n/2, n]. Only rigorous for non-decreasing F.
inline RotationEstimate pointwise_rotation_number(const CircleLift& f, double x, std::int64_t n) {
  detail::require_degree_one(f);
  if (n < 1) n = 1;
  detail::OrbitCursor cur(f, x);
  const std::int64_t from = (n + 1) / 2;
  double best = -std::numeric_limits<double>::infinity();
  for (std::int64_t k = 1; k <= n; ++k) {
    cur.step();
    if (k >= from) best = std::max(best, cur.displacement() / static_cast<double>(k));
  }
  const double dn = static_cast<double>(n);
  return {best, 2.0 / dn + dn * f.representation_error(), n, x, f.non_decreasing()};
}

inline RotationInterval rotation_interval(const WaterFamily& w, std::int64_t n = kDefaultRotationIterations) {
  return {rotation_number(w.lower, n, 0.0), rotation_number(w.upper, n, 0.0)};
}

inline RotationInterval rotation_interval(const CircleLift& f, std::int64_t n = kDefaultRotationIterations) {
  return rotation_interval(envelopes(f), n);
}

struct SolveOptions {
  std::int64_t iterations = 0;  // 0: max(1e5, 2/tol), capped at 1e7
  int max_steps = 200;
  double alpha_width = 1e-12;
};

struct AlphaSolution {
  double alpha = 0.0;
  RotationEstimate rho;
  double residual = 0.0;
  int steps = 0;
};

inline std::int64_t solve_iterations(double tol, const SolveOptions& opt) {
  if (opt.iterations > 0) return opt.iterations;
  const double want = std::ceil(2.0 / tol);
  return static_cast<std::int64_t>(std::clamp(want, 1e5, 1e7));
}

/// Finds alpha with |rho(F_alpha) - target| < tol by bisection on the
/// non-decreasing level map. On rational plateaus alpha is not unique; the
/// bisection limit is returned.
inline AlphaSolution solve_alpha(const WaterFamily& w, double target, double tol,
                                 const SolveOptions& opt = {}) {
  if (!(tol > 0.0)) throw Error(ErrorKind::ConfigError, "tolerance must be positive");
  const std::int64_t n = solve_iterations(tol, opt);
  auto rho_at = [&](double a) { return rotation_number(water_function(w, a), n, 0.0); };

  const RotationEstimate lo = rho_at(0.0);
  const RotationEstimate hi = rho_at(w.span);
  if (target < lo.value - lo.bound || target > hi.value + hi.bound)
    throw Error(ErrorKind::TargetOutsideRotationSet,
                "target " + std::to_string(target) + " outside [" + std::to_string(lo.value) + ", " +
                    std::to_string(hi.value) + "]");

  AlphaSolution best{0.0, lo, std::fabs(lo.value - target), 0};
  if (best.residual < tol) return best;
  if (std::fabs(hi.value - target) < tol) return {w.span, hi, std::fabs(hi.value - target), 0};
  if (std::fabs(hi.value - target) < best.residual) best = {w.span, hi, std::fabs(hi.value - target), 0};

  double a = 0.0, b = w.span;
  int step = 0;
  for (; step < opt.max_steps && b - a >= opt.alpha_width; ++step) {
    const double mid = 0.5 * (a + b);
    if (mid <= a || mid >= b) break;
    const RotationEstimate r = rho_at(mid);
    const double res = std::fabs(r.value - target);
    if (res < best.residual) best = {mid, r, res, step + 1};
    if (res < tol) return {mid, r, res, step + 1};
    if (r.value < target) a = mid;
    else b = mid;
  }
  auto g = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::string(buf);
  };
  throw NoConvergenceError(best.alpha, best.residual,
                           "bisection stopped at level width " + g(b - a) + " after " + std::to_string(step) +
                               " steps; best residual " + g(best.residual) + " at alpha " + g(best.alpha));
}

}  // namespace rotatlas
