#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "rotatlas/circle.hpp"
#include "rotatlas/error.hpp"

namespace rotatlas {

inline constexpr double kRepeatResolution = 1e-12;
inline constexpr double kDefaultGapFactor = 5.0;

/// A complementary interval of a sampled invariant set; its endpoints are sample points.
struct Gap {
  double left = 0.0;
  double right = 0.0;

  double length() const { return forward_distance(left, right); }
  Arc arc() const { return {CirclePoint(left), CirclePoint(right)}; }
};

/// Median of the circular spacings of sorted points in [0,1).
inline double median_spacing(const std::vector<double>& sorted) {
  const std::size_t m = sorted.size();
  if (m < 2) return 1.0;
  std::vector<double> s(m);
  for (std::size_t i = 0; i + 1 < m; ++i) s[i] = sorted[i + 1] - sorted[i];
  s[m - 1] = sorted[0] + 1.0 - sorted[m - 1];
  auto mid = s.begin() + static_cast<std::ptrdiff_t>(m / 2);
  std::nth_element(s.begin(), mid, s.end());
  return *mid;
}

/// Spacings larger than factor times the median.
inline std::vector<Gap> detect_gaps(const std::vector<double>& sorted, double factor = kDefaultGapFactor) {
  std::vector<Gap> out;
  const std::size_t m = sorted.size();
  if (m < 2) return out;
  const double thr = factor * median_spacing(sorted);
  for (std::size_t i = 0; i < m; ++i) {
    const double a = sorted[i];
    const double b = i + 1 < m ? sorted[i + 1] : sorted[0];
    const double len = i + 1 < m ? b - a : b + 1.0 - a;
    if (len > thr) out.push_back({a, b});
  }
  return out;
}

struct MinimalSetSample {
  std::vector<double> points;  // sorted
  std::vector<double> orbit;   // in iteration order
  std::vector<Gap> gaps;
  std::int64_t burn_in = 0;
  std::int64_t count = 0;

  double max_gap() const {
    const std::size_t m = points.size();
    if (m == 0) return 1.0;
    double g = points[0] + 1.0 - points[m - 1];
    for (std::size_t i = 0; i + 1 < m; ++i) g = std::max(g, points[i + 1] - points[i]);
    return g;
  }

  /// Circle distance from x to the nearest sample point.
  double distance_to(double x) const { return nearest_distance(points, x); }

  static double nearest_distance(const std::vector<double>& sorted, double x) {
    if (sorted.empty()) return 1.0;
    x = frac(x);
    auto it = std::lower_bound(sorted.begin(), sorted.end(), x);
    const double a = it == sorted.end() ? sorted.front() : *it;
    const double b = it == sorted.begin() ? sorted.back() : *(it - 1);
    return std::min(circle_distance(a, x), circle_distance(b, x));
  }
};

/// Orbit tail of theta0 under the projection of f, approximating the minimal set.
inline MinimalSetSample minimal_set(const CircleLift& f, std::int64_t burn, std::int64_t count,
                                    CirclePoint theta0 = CirclePoint(0.0)) {
  if (f.degree() != 1) throw Error(ErrorKind::DegreeError, "minimal set requires a degree-one map");
  if (burn < 0 || count < 1) throw Error(ErrorKind::EmptyResult, "count must be positive");
  double t = theta0.value();
  for (std::int64_t k = 0; k < burn; ++k) t = frac(f.eval_unit(t));
  MinimalSetSample out;
  out.burn_in = burn;
  out.count = count;
  out.orbit.resize(static_cast<std::size_t>(count));
  for (std::int64_t k = 0; k < count; ++k) {
    out.orbit[static_cast<std::size_t>(k)] = t;
    t = frac(f.eval_unit(t));
  }
  std::vector<std::size_t> idx(out.orbit.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return out.orbit[a] < out.orbit[b]; });
  out.points.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out.points[i] = out.orbit[idx[i]];
  if (idx.size() > 1) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const std::size_t j = (i + 1) % idx.size();
      if (circle_distance(out.points[i], out.points[j]) < kRepeatResolution) {
        const std::size_t a = std::min(idx[i], idx[j]), b = std::max(idx[i], idx[j]);
        throw PeriodicOrbitError(b - a, "orbit returns within " + std::to_string(kRepeatResolution) +
                                            " after " + std::to_string(b - a) + " steps (index " +
                                            std::to_string(a) + ")");
      }
    }
  }
  out.gaps = detect_gaps(out.points);
  return out;
}

struct InvariantSetSample {
  std::vector<double> points;   // sorted
  std::vector<double> removed;  // sorted
  double epsilon = 0.0;
  std::int64_t horizon = 0;

  double removed_fraction() const {
    const double total = static_cast<double>(points.size() + removed.size());
    return total == 0.0 ? 0.0 : static_cast<double>(removed.size()) / total;
  }
};

/// Drops sample points whose forward orbit meets a gap boundary within the horizon.
inline InvariantSetSample invariant_set(const MinimalSetSample& p, const CircleLift& f,
                                        std::int64_t horizon = 1000, double epsilon = 1e-9) {
  std::vector<double> bounds;
  for (const auto& g : p.gaps) {
    bounds.push_back(g.left);
    bounds.push_back(g.right);
  }
  std::sort(bounds.begin(), bounds.end());
  bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());
  auto near = [&](double x) { return MinimalSetSample::nearest_distance(bounds, x) <= epsilon; };

  const std::size_t n = p.orbit.size();
  const std::size_t h = horizon > 0 ? static_cast<std::size_t>(horizon) : 0;
  std::vector<double> ext(p.orbit);
  if (!bounds.empty() && n > 0) {
    ext.reserve(n + h);
    double t = p.orbit.back();
    for (std::size_t k = 0; k < h; ++k) {
      t = frac(f.eval_unit(t));
      ext.push_back(t);
    }
  }
  // Sweep backwards remembering the next orbit index that lands near a boundary.
  std::vector<std::uint8_t> bad(n, 0);
  if (!bounds.empty()) {
    std::size_t next_hit = std::numeric_limits<std::size_t>::max();
    for (std::size_t k = ext.size(); k-- > 0;) {
      if (near(ext[k])) next_hit = k;
      if (k < n && next_hit != std::numeric_limits<std::size_t>::max() && next_hit - k <= h) bad[k] = 1;
    }
  }
  InvariantSetSample out;
  out.epsilon = epsilon;
  out.horizon = horizon;
  for (std::size_t k = 0; k < n; ++k) (bad[k] ? out.removed : out.points).push_back(p.orbit[k]);
  std::sort(out.points.begin(), out.points.end());
  std::sort(out.removed.begin(), out.removed.end());
  if (out.points.empty()) throw Error(ErrorKind::EmptyResult, "every sample point lies on a gap-boundary orbit");
  return out;
}

/// Monotone degree-one circle map h with h o f = R_rho o h on the sampled orbit.
/// Stored as sorted abscissae with lifted values; h is constant across detected
/// gaps except for a short ramp of one median spacing at the right end.
struct Semiconjugacy {
  std::vector<double> theta;   // sorted in [0,1)
  std::vector<double> lifted;  // non-decreasing, total increase below 1
  std::vector<std::uint8_t> gap_after;
  std::vector<Gap> gaps;
  double ramp = 0.0;
  double rho = 0.0;         // rotation used to pair the orbit
  double target_rho = 0.0;  // requested rotation number
  double defect = 0.0;
  double theta0 = 0.0;

  std::size_t size() const { return theta.size(); }

  double max_spacing() const {
    double s = theta.front() + 1.0 - theta.back();
    for (std::size_t i = 0; i + 1 < theta.size(); ++i) s = std::max(s, theta[i + 1] - theta[i]);
    return s;
  }

  /// Lifted value at x in [0,1); continuous and non-decreasing, with lift(x+1) = lift(x) + 1.
  double lift(double x) const {
    x = frac(x);
    const std::size_t m = theta.size();
    auto it = std::upper_bound(theta.begin(), theta.end(), x);
    // Points left of theta[0] sit in the wrap cell, shifted down one period.
    const bool wrap_left = it == theta.begin();
    const std::size_t i = wrap_left ? m - 1 : static_cast<std::size_t>(it - theta.begin()) - 1;
    const double shift = wrap_left ? -1.0 : 0.0;
    const double xa = theta[i] + shift;
    const double ha = lifted[i] + shift;
    const double xb = i + 1 < m ? theta[i + 1] : theta[0] + 1.0 + shift;
    const double hb = i + 1 < m ? lifted[i + 1] : lifted[0] + 1.0 + shift;
    if (x == xa || xb <= xa) return ha;
    const double start = cell_ramp_start(i, xa, xb);
    if (x <= start) return ha;
    return ha + (hb - ha) * (x - start) / (xb - start);
  }

  double operator()(double x) const { return frac(lift(x)); }

  /// Leftmost theta with h(theta) >= psi, inverting ramps and linear cells.
  double pseudo_inverse(double psi) const {
    const std::size_t m = theta.size();
    const double base = lifted[0];
    const double target = base + forward_distance(base, psi);
    auto it = std::lower_bound(lifted.begin(), lifted.end(), target);
    const auto j = static_cast<std::size_t>(it - lifted.begin());
    if (j < m && lifted[j] == target) return theta[j];
    if (j == 0) return theta[0];
    const std::size_t i = j - 1;
    const double xa = theta[i];
    const double xb = j < m ? theta[j] : theta[0] + 1.0;
    const double ha = lifted[i];
    const double hb = j < m ? lifted[j] : lifted[0] + 1.0;
    if (!(hb > ha)) return xa;
    const double start = cell_ramp_start(i, xa, xb);
    return frac(start + (target - ha) / (hb - ha) * (xb - start));
  }

 private:
  double cell_ramp_start(std::size_t i, double xa, double xb) const {
    if (!gap_after[i]) return xa;
    return xb - std::min(ramp, 0.5 * (xb - xa));
  }
};

inline double pseudo_inverse(const Semiconjugacy& h, CirclePoint psi) { return h.pseudo_inverse(psi.value()); }

struct SemiconjOptions {
  double order_tolerance = 1e-6;
  double gap_factor = kDefaultGapFactor;
};

/// Rotation numbers compatible with the circular order of a lifted orbit: every
/// pair of circular neighbours a, b (b ahead of a by k whole turns plus a
/// fraction) forces k < (b - a) rho < k + 1.
inline std::pair<double, double> order_consistent_rotations(const std::vector<double>& frac_pos,
                                                            const std::vector<std::int64_t>& turns) {
  const std::size_t n = frac_pos.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return frac_pos[a] < frac_pos[b]; });
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t a = idx[s];
    const std::size_t b = idx[(s + 1) % n];
    // Lifted positions L_b - L_a = (turns_b - turns_a) + (x_b - x_a); the wrap pair adds a turn.
    std::int64_t k = turns[b] - turns[a];
    if (s + 1 == n) k -= 1;
    const double d = static_cast<double>(static_cast<std::int64_t>(b) - static_cast<std::int64_t>(a));
    if (d == 0.0) continue;
    double c0 = static_cast<double>(k) / d, c1 = static_cast<double>(k + 1) / d;
    if (d < 0.0) std::swap(c0, c1);
    lo = std::max(lo, c0);
    hi = std::min(hi, c1);
  }
  return {lo, hi};
}

inline void mark_gaps(Semiconjugacy& h, double factor) {
  h.gaps = detect_gaps(h.theta, factor);
  h.ramp = median_spacing(h.theta);
  h.gap_after.assign(h.theta.size(), 0);
  for (const auto& g : h.gaps) {
    auto it = std::lower_bound(h.theta.begin(), h.theta.end(), g.left);
    h.gap_after[static_cast<std::size_t>(it - h.theta.begin())] = 1;
  }
}

/// Rebuilds h from a stored table of (theta, h(theta)) pairs sorted by theta.
inline Semiconjugacy semiconjugacy_from_table(const std::vector<double>& theta, const std::vector<double>& values,
                                              double rho, double gap_factor = kDefaultGapFactor) {
  if (theta.size() != values.size() || theta.size() < 2)
    throw Error(ErrorKind::ConfigError, "semiconjugacy table needs at least two (theta, h) rows");
  Semiconjugacy h;
  h.rho = rho;
  h.target_rho = rho;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double x = frac(theta[i]);
    if (!h.theta.empty() && !(x > h.theta.back()))
      throw Error(ErrorKind::OrderViolation, "table abscissae must be strictly increasing in [0,1)");
    const double v = frac(values[i]);
    h.lifted.push_back(h.lifted.empty() ? v : h.lifted.back() + forward_distance(frac(h.lifted.back()), v));
    h.theta.push_back(x);
  }
  if (h.lifted.back() - h.lifted.front() >= 1.0) throw Error(ErrorKind::OrderViolation, "table wraps more than once");
  h.theta0 = h.theta[0];
  mark_gaps(h, gap_factor);
  return h;
}

/// Pairs the orbit theta_n = f^n(theta0) with psi_n = n rho (mod 1) and sorts by theta.
inline Semiconjugacy build_semiconjugacy(const CircleLift& f, double rho, std::int64_t n,
                                         CirclePoint theta0 = CirclePoint(0.0), const SemiconjOptions& opt = {}) {
  if (f.degree() != 1) throw Error(ErrorKind::DegreeError, "semiconjugacy requires a degree-one map");
  if (n < 2) throw Error(ErrorKind::EmptyResult, "need at least two orbit points");
  const auto count = static_cast<std::size_t>(n);
  std::vector<double> th(count);
  std::vector<std::int64_t> turns(count);
  double t = theta0.value();
  std::int64_t w = 0;
  for (std::size_t k = 0; k < count; ++k) {
    th[k] = t;
    turns[k] = w;
    const double y = f.eval_unit(t);
    const double fl = std::floor(y);
    w += static_cast<std::int64_t>(fl);
    t = y - fl;
    if (t >= 1.0) {
      t = 0.0;
      ++w;
    }
  }

  const auto [lo, hi] = order_consistent_rotations(th, turns);
  if (!(lo < hi))
    throw Error(ErrorKind::OrderViolation, "orbit order admits no rotation number (interval [" +
                                               std::to_string(lo) + ", " + std::to_string(hi) + "] is empty)");
  double pair_rho = rho;
  if (!(rho > lo && rho < hi)) {
    const double miss = rho <= lo ? lo - rho : rho - hi;
    if (miss > opt.order_tolerance)
      throw Error(ErrorKind::OrderViolation, "orbit order is consistent only with rotations in (" +
                                                 std::to_string(lo) + ", " + std::to_string(hi) + "), not " +
                                                 std::to_string(rho));
    const double inset = 0.1 * (hi - lo);
    pair_rho = rho <= lo ? lo + inset : hi - inset;
  }

  std::vector<double> psi(count);
  double p = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    psi[k] = p;
    p = frac(p + pair_rho);
  }

  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return th[a] < th[b]; });

  Semiconjugacy h;
  h.rho = pair_rho;
  h.target_rho = rho;
  h.theta0 = theta0.value();
  for (std::size_t s = 0; s < count; ++s) {
    const double x = th[idx[s]];
    if (!h.theta.empty() && x == h.theta.back()) continue;  // repeated point: keep the first pairing
    const double v = psi[idx[s]];
    h.lifted.push_back(h.lifted.empty() ? v : h.lifted.back() + forward_distance(frac(h.lifted.back()), v));
    h.theta.push_back(x);
  }
  if (h.theta.size() < 2) throw Error(ErrorKind::OrderViolation, "orbit collapsed to a single point");
  if (h.lifted.back() - h.lifted.front() >= 1.0)
    throw Error(ErrorKind::OrderViolation, "paired table wraps more than once");

  mark_gaps(h, opt.gap_factor);

  double defect = 0.0;
  auto check = [&](double x) {
    defect = std::max(defect, circle_distance(h(f.eval_unit(x)), h(x) + rho));
  };
  for (std::size_t i = 0; i < h.theta.size(); ++i) {
    check(h.theta[i]);
    if (!h.gap_after[i]) {
      const double xb = i + 1 < h.theta.size() ? h.theta[i + 1] : h.theta[0] + 1.0;
      check(frac(0.5 * (h.theta[i] + xb)));
    }
  }
  h.defect = defect;
  return h;
}

}  // namespace rotatlas
