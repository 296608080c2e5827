#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "rotatlas/circle.hpp"
#include "rotatlas/error.hpp"
#include "rotatlas/function.hpp"
#include "rotatlas/semiconj.hpp"

namespace rotatlas {

/// The fiber K: a closed interval [lo, hi] with lo <= 0 <= hi, a half-line, or R.
struct FiberDomain {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  static FiberDomain line() { return {}; }
  static FiberDomain half_line() { return {0.0, std::numeric_limits<double>::infinity()}; }
  static FiberDomain interval(double a, double b) {
    if (!(a <= 0.0 && 0.0 <= b)) throw Error(ErrorKind::ConfigError, "fiber interval must contain 0");
    return {a, b};
  }

  bool bounded() const { return std::isfinite(lo) && std::isfinite(hi); }
  double diameter() const { return bounded() ? hi - lo : 1.0; }

  bool contains(double x, double tol = 0.0) const {
    return !std::isnan(x) && x >= lo - tol && x <= hi + tol;
  }
};

struct FiberMap {
  std::string name;
  std::function<double(double)> eval;
  std::function<double(double)> deriv;  // empty when no analytic derivative is known
  FiberDomain domain;
  double lipschitz = std::numeric_limits<double>::infinity();

  double operator()(double x) const { return eval(x); }

  static FiberMap from_piecewise(std::string name, PiecewiseFunction p, FiberDomain k,
                                 double lip = std::numeric_limits<double>::infinity()) {
    auto shared = std::make_shared<const PiecewiseFunction>(std::move(p));
    FiberMap m{std::move(name), [shared](double x) { return (*shared)(x); },
               [shared](double x) { return shared->derivative(x); }, k, lip};
    m.validate();
    return m;
  }

  /// p(0) = 0, and p maps a dense sample of K into K.
  void validate() const {
    const double z = eval(0.0);
    if (std::fabs(z) > 1e-14) throw Error(ErrorKind::ConfigError, name + ": p(0) = " + std::to_string(z) + ", expected 0");
    if (!domain.bounded()) return;
    for (int i = 0; i <= 1024; ++i) {
      const double x = domain.lo + (domain.hi - domain.lo) * i / 1024.0;
      if (!domain.contains(eval(x), 1e-12))
        throw Error(ErrorKind::ConfigError, name + " maps " + std::to_string(x) + " outside K");
    }
  }
};

enum class Side { Both, Left, Right };

inline std::string_view side_name(Side s) {
  switch (s) {
    case Side::Both: return "both";
    case Side::Left: return "left";
    case Side::Right: return "right";
  }
  return "?";
}

/// A zero of q; Left/Right mark zeros only reached as a one-sided limit at a branch boundary.
struct ZeroPoint {
  double theta = 0.0;
  Side side = Side::Both;
};

struct ForcingMap {
  std::string name;
  PiecewiseFunction q;
  std::vector<ZeroPoint> zero_set;

  double operator()(double theta) const { return q(frac(theta)); }

  static ForcingMap make(std::string name, PiecewiseFunction q, double tol = 1e-9) {
    ForcingMap m{std::move(name), std::move(q), {}};
    m.zero_set = find_zeros(m.q, tol);
    return m;
  }

  /// Zeros of |q| on [0,1) by dense sampling of each branch plus golden-section refinement.
  static std::vector<ZeroPoint> find_zeros(const PiecewiseFunction& q, double tol, int samples = 4096) {
    std::vector<ZeroPoint> raw;
    for (const auto& b : q.branches()) {
      const double lo = std::max(b.from, 0.0), hi = std::min(b.to, 1.0);
      if (!(lo < hi)) continue;
      auto g = [&](double t) { return std::fabs(b.expr(t)); };
      std::vector<double> v(static_cast<std::size_t>(samples) + 1);
      for (int i = 0; i <= samples; ++i) v[static_cast<std::size_t>(i)] = g(lo + (hi - lo) * i / samples);
      if (*std::max_element(v.begin(), v.end()) <= tol) {  // identically zero branch
        raw.push_back({frac(lo), Side::Both});
        continue;
      }
      for (int i = 0; i <= samples; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const bool left_ok = i == 0 || v[ui] <= v[ui - 1];
        const bool right_ok = i == samples || v[ui] < v[ui + 1];
        if (!(left_ok && right_ok)) continue;
        double a = lo + (hi - lo) * std::max(0, i - 1) / samples;
        double c = lo + (hi - lo) * std::min(samples, i + 1) / samples;
        const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
        for (int it = 0; it < 200 && c - a > 1e-15; ++it) {
          const double x1 = c - phi * (c - a), x2 = a + phi * (c - a);
          if (g(x1) <= g(x2)) c = x2;
          else a = x1;
        }
        double t = 0.5 * (a + c);
        if (g(lo) <= g(t) && std::fabs(t - lo) < 1e-9) t = lo;
        if (g(hi) <= g(t) && std::fabs(t - hi) < 1e-9) t = hi;
        if (g(t) > tol) continue;
        Side s = Side::Both;
        if (t == lo && b.from >= 0.0) s = Side::Right;
        if (t == hi) s = Side::Left;
        raw.push_back({frac(t), s});
      }
    }
    std::sort(raw.begin(), raw.end(), [](const ZeroPoint& a, const ZeroPoint& b) { return a.theta < b.theta; });
    std::vector<ZeroPoint> out;
    for (const auto& z : raw) {
      if (!out.empty() && circle_distance(out.back().theta, z.theta) < 1e-9) {
        if (out.back().side != z.side) out.back().side = Side::Both;
        continue;
      }
      out.push_back(z);
    }
    if (out.size() > 1 && circle_distance(out.front().theta, out.back().theta) < 1e-9) {
      if (out.front().side != out.back().side) out.front().side = Side::Both;
      out.pop_back();
    }
    return out;
  }
};

/// (theta, x) -> (f(theta), p(x) q(theta)) over a circle map, or over a rigid
/// rotation with forcing q o h^{-1} when a semiconjugacy is attached.
struct SkewSystem {
  enum class BaseKind { Lift, Rotation };

  BaseKind kind = BaseKind::Rotation;
  CircleLift base = CircleLift::rigid(0.0);
  double rho = 0.0;
  std::shared_ptr<const Semiconjugacy> h;
  FiberMap p;
  ForcingMap q;
  double escape_tolerance = 1e-9;

  static SkewSystem over_lift(CircleLift f, FiberMap p, ForcingMap q) {
    if (f.degree() != 1) throw Error(ErrorKind::DegreeError, "base map must have degree one");
    SkewSystem s;
    s.kind = BaseKind::Lift;
    s.base = std::move(f);
    s.p = std::move(p);
    s.q = std::move(q);
    return s;
  }

  static SkewSystem over_rotation(double rho, FiberMap p, ForcingMap q,
                                  std::shared_ptr<const Semiconjugacy> h = nullptr) {
    SkewSystem s;
    s.kind = BaseKind::Rotation;
    s.rho = rho;
    s.base = CircleLift::rigid(rho);
    s.h = std::move(h);
    s.p = std::move(p);
    s.q = std::move(q);
    return s;
  }

  double base_step(double theta) const {
    return kind == BaseKind::Lift ? frac(base.eval_unit(theta)) : frac(theta + rho);
  }

  double forcing(double theta) const { return h ? q(h->pseudo_inverse(theta)) : q(theta); }
};

inline std::pair<double, double> step(const SkewSystem& s, double theta, double x) {
  const double x1 = s.p(x) * s.forcing(theta);
  if (!s.p.domain.contains(x1, s.escape_tolerance * std::max(1.0, std::fabs(x1))))
    throw Error(ErrorKind::FiberEscape, "p(" + std::to_string(x) + ") q(" + std::to_string(theta) +
                                            ") = " + std::to_string(x1) + " leaves K");
  return {s.base_step(theta), x1};
}

struct OrbitSample {
  std::vector<double> theta;
  std::vector<double> x;
  double theta0 = 0.0;
  double x0 = 0.0;
  std::int64_t burn_in = 0;

  std::size_t size() const { return theta.size(); }
};

inline OrbitSample orbit(const SkewSystem& s, double theta0, double x0, std::int64_t burn, std::int64_t count) {
  if (!s.p.domain.contains(x0)) throw Error(ErrorKind::FiberEscape, "seed outside K");
  OrbitSample o;
  o.theta0 = frac(theta0);
  o.x0 = x0;
  o.burn_in = burn;
  double t = o.theta0, x = x0;
  for (std::int64_t k = 0; k < burn; ++k) std::tie(t, x) = step(s, t, x);
  const auto n = static_cast<std::size_t>(std::max<std::int64_t>(count, 0));
  o.theta.resize(n);
  o.x.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    o.theta[k] = t;
    o.x[k] = x;
    std::tie(t, x) = step(s, t, x);
  }
  return o;
}

inline constexpr std::size_t kDefaultBins = 4096;

/// A finite sample of an attracting set with its points binned by theta.
struct AttractorSample {
  std::vector<double> theta;
  std::vector<double> x;
  std::vector<std::vector<double>> fibers;  // sorted x values per theta-bin
  double theta0 = 0.0;
  double x0 = 0.0;
  std::int64_t burn_in = 0;
  std::int64_t count = 0;

  std::size_t bins() const { return fibers.size(); }
  double bin_width() const { return 1.0 / static_cast<double>(fibers.size()); }
  std::size_t bin_of(double t) const {
    return std::min(fibers.size() - 1, static_cast<std::size_t>(frac(t) * static_cast<double>(fibers.size())));
  }
  double bin_center(std::size_t b) const { return (static_cast<double>(b) + 0.5) * bin_width(); }

  static AttractorSample from_points(std::vector<double> theta, std::vector<double> x,
                                     std::size_t bins = kDefaultBins) {
    AttractorSample a;
    a.theta = std::move(theta);
    a.x = std::move(x);
    a.count = static_cast<std::int64_t>(a.theta.size());
    a.rebin(bins);
    return a;
  }

  void rebin(std::size_t bins) {
    fibers.assign(std::max<std::size_t>(bins, 1), {});
    for (std::size_t i = 0; i < theta.size(); ++i) fibers[bin_of(theta[i])].push_back(x[i]);
    for (auto& f : fibers) std::sort(f.begin(), f.end());
  }
};

inline AttractorSample attractor_sample(const SkewSystem& s, double theta0, double x0, std::int64_t burn,
                                        std::int64_t count, std::size_t bins = kDefaultBins) {
  OrbitSample o = orbit(s, theta0, x0, burn, count);
  AttractorSample a = AttractorSample::from_points(std::move(o.theta), std::move(o.x), bins);
  a.theta0 = frac(theta0);
  a.x0 = x0;
  a.burn_in = burn;
  return a;
}

inline AttractorSample merge(const AttractorSample& a, const AttractorSample& b) {
  std::vector<double> t(a.theta), x(a.x);
  t.insert(t.end(), b.theta.begin(), b.theta.end());
  x.insert(x.end(), b.x.begin(), b.x.end());
  auto m = AttractorSample::from_points(std::move(t), std::move(x), a.bins());
  m.theta0 = a.theta0;
  m.x0 = a.x0;
  m.burn_in = a.burn_in;
  return m;
}

/// For each pair i < j of seeds, the largest |x_i - x_j| over the last quarter of n steps.
inline std::vector<double> convergence_check(const SkewSystem& s, double theta0, const std::vector<double>& xs,
                                             std::int64_t n) {
  const std::size_t m = xs.size();
  std::vector<std::vector<double>> tails(m);
  const std::int64_t from = n - n / 4;
  for (std::size_t i = 0; i < m; ++i) {
    double t = frac(theta0), x = xs[i];
    for (std::int64_t k = 1; k <= n; ++k) {
      std::tie(t, x) = step(s, t, x);
      if (k >= from) tails[i].push_back(x);
    }
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < tails[i].size(); ++k) d = std::max(d, std::fabs(tails[i][k] - tails[j][k]));
      out.push_back(d);
    }
  return out;
}

struct LyapunovResult {
  double value = 0.0;
  bool pinched = false;
  std::int64_t floored_terms = 0;
  std::int64_t terms = 0;
};

inline constexpr double kLogFloor = -1e3;

/// Birkhoff average of log|p'(x_k) q(theta_k)| along a stored orbit.
inline LyapunovResult vertical_lyapunov(const SkewSystem& s, const OrbitSample& o) {
  if (!s.p.deriv) throw Error(ErrorKind::UndefinedDerivative, s.p.name + " has no analytic derivative");
  LyapunovResult r;
  double sum = 0.0, c = 0.0;
  for (std::size_t k = 0; k < o.size(); ++k) {
    const double arg = std::fabs(s.p.deriv(o.x[k]) * s.forcing(o.theta[k]));
    double term;
    if (arg < 1e-300) {
      term = kLogFloor;
      r.pinched = true;
      ++r.floored_terms;
    } else {
      term = std::log(arg);
    }
    const double y = term - c;  // compensated sum
    const double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
  r.terms = static_cast<std::int64_t>(o.size());
  r.value = o.size() ? sum / static_cast<double>(o.size()) : 0.0;
  return r;
}

/// Transversal exponent of the zero section: p(0) = 0 keeps the orbit on x = 0.
inline LyapunovResult zero_section_exponent(const SkewSystem& s, double theta0, std::int64_t n) {
  return vertical_lyapunov(s, orbit(s, theta0, 0.0, 0, n));
}

/// Centers of non-empty bins whose whole fiber lies within tol of 0.
inline std::vector<CirclePoint> pinching_detect(const AttractorSample& a, double tol) {
  std::vector<CirclePoint> out;
  for (std::size_t b = 0; b < a.bins(); ++b) {
    const auto& f = a.fibers[b];
    if (f.empty()) continue;
    if (std::fabs(f.front()) <= tol && std::fabs(f.back()) <= tol) out.emplace_back(a.bin_center(b));
  }
  return out;
}

/// Whether the sample is pinched at theta: every point within half a bin of theta
/// (on the given side only, for one-sided zeros) lies within tol of 0, and at least
/// one such point exists.
inline bool pinched_near(const AttractorSample& a, double theta, Side side, double tol) {
  const double w = 0.5 * a.bin_width();
  const double lo = side == Side::Right ? 0.0 : -w;
  const double hi = side == Side::Left ? 0.0 : w;
  std::size_t seen = 0;
  const auto b0 = static_cast<std::ptrdiff_t>(a.bin_of(theta));
  const auto nb = static_cast<std::ptrdiff_t>(a.bins());
  // Points are binned by theta only, so scan the original arrays restricted to nearby bins.
  for (std::size_t i = 0; i < a.theta.size(); ++i) {
    const auto b = static_cast<std::ptrdiff_t>(a.bin_of(a.theta[i]));
    const std::ptrdiff_t db = std::min({std::abs(b - b0), std::abs(b - b0 + nb), std::abs(b - b0 - nb)});
    if (db > 1) continue;
    double d = frac(a.theta[i] - theta + 0.5) - 0.5;
    if (d < lo || d > hi) continue;
    if (side != Side::Both && d == 0.0) continue;
    ++seen;
    if (std::fabs(a.x[i]) > tol) return false;
  }
  return seen > 0;
}

struct SplitOptions {
  double tol = 1e-9;
  double fraction = 0.99;
};

/// 2 if the fibers separate into two components, by sign or by a persistent gap,
/// across the required fraction of non-pinched bins; otherwise 1.
inline int split_detect(const AttractorSample& a, const SplitOptions& opt = {}) {
  std::size_t eligible = 0, signed_split = 0, gapped = 0;
  for (const auto& f : a.fibers) {
    if (f.empty()) continue;
    if (std::fabs(f.front()) <= opt.tol && std::fabs(f.back()) <= opt.tol) continue;
    ++eligible;
    if (f.front() < -opt.tol && f.back() > opt.tol) ++signed_split;
    const double range = f.back() - f.front();
    double g = 0.0;
    for (std::size_t i = 1; i < f.size(); ++i) g = std::max(g, f[i] - f[i - 1]);
    if (f.size() >= 2 && range > opt.tol && g >= 0.5 * range) ++gapped;
  }
  if (eligible == 0) return 1;
  const double need = opt.fraction * static_cast<double>(eligible);
  return static_cast<double>(signed_split) >= need || static_cast<double>(gapped) >= need ? 2 : 1;
}

// ---- registries -------------------------------------------------------------

inline FiberMap fiber_tanh() {
  return FiberMap::from_piecewise("tanh", PiecewiseFunction::single(Primitive::tanh_affine(1.0, 0.0, 0.0, 1.0)),
                                  FiberDomain::line(), 1.0);
}

/// tanh x for x >= 0, (tanh(x-2) + tanh 2)/(1 - tanh^2 2) for x < 0.
inline FiberMap fiber_tanh_shifted() {
  const double t2 = std::tanh(2.0);
  PiecewiseFunction p({Branch{-std::numeric_limits<double>::infinity(), 0.0,
                              Primitive::tanh_affine(1.0, -2.0, t2, 1.0 / (1.0 - t2 * t2))},
                       Branch{0.0, std::numeric_limits<double>::infinity(), Primitive::tanh_affine(1.0, 0.0, 0.0, 1.0)}});
  return FiberMap::from_piecewise("tanh_shifted", std::move(p), FiberDomain::line(), 1.0);
}

inline FiberMap fiber_logistic_unimodal() {
  return FiberMap::from_piecewise("logistic_unimodal", PiecewiseFunction::single(Primitive::poly({0.0, 1.0, -1.0})),
                                  FiberDomain::interval(0.0, 1.0), 1.0);
}

/// 1/2 x (x+1)(x+2) = x + 3/2 x^2 + 1/2 x^3.
inline FiberMap fiber_cubic_bimodal() {
  return FiberMap::from_piecewise("cubic_bimodal",
                                  PiecewiseFunction::single(Primitive::poly({0.0, 1.0, 1.5, 0.5})),
                                  FiberDomain::interval(-1.0, 0.0), 1.0);
}

/// x(1-x) for x >= 0, 1/2 x(x+1)(x+2) for x < 0, on K = [-1, 1].
inline FiberMap fiber_logistic_cubic() {
  PiecewiseFunction p({Branch{-std::numeric_limits<double>::infinity(), 0.0, Primitive::poly({0.0, 1.0, 1.5, 0.5})},
                       Branch{0.0, std::numeric_limits<double>::infinity(), Primitive::poly({0.0, 1.0, -1.0})}});
  return FiberMap::from_piecewise("logistic_cubic", std::move(p), FiberDomain::interval(-1.0, 1.0), 1.0);
}

inline ForcingMap forcing_const(double c) {
  return ForcingMap::make(c == 0.0 ? "zero" : "const", PiecewiseFunction::single(Primitive::constant(c)));
}

inline ForcingMap forcing_zero() { return forcing_const(0.0); }

/// c + cos(2 pi theta).
inline ForcingMap forcing_cos_shift(double c) {
  return ForcingMap::make("cos_shift", PiecewiseFunction::single(Primitive::trig(PrimitiveKind::Cos, 1.0, c)));
}

/// 7(cos 2 pi theta - 2) on [0, 1/2), 5(cos 2 pi theta - 4) on [1/2, 1).
inline ForcingMap forcing_fig1() {
  return ForcingMap::make("fig1", PiecewiseFunction({Branch{0.0, 0.5, Primitive::trig(PrimitiveKind::Cos, 7.0, -14.0)},
                                                     Branch{0.5, 1.0, Primitive::trig(PrimitiveKind::Cos, 5.0, -20.0)}}));
}

/// 2.1 |cos 2 pi theta| on [0, 1/2), 2.5 |sin 2 pi theta| on [1/2, 1).
inline ForcingMap forcing_fig2() {
  return ForcingMap::make("fig2", PiecewiseFunction({Branch{0.0, 0.5, Primitive::trig(PrimitiveKind::AbsCos, 2.1)},
                                                     Branch{0.5, 1.0, Primitive::trig(PrimitiveKind::AbsSin, 2.5)}}));
}

}  // namespace rotatlas
