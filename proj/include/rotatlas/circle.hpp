#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rotatlas/error.hpp"

namespace rotatlas {

/// Fractional part in [0,1). Guards the x = -tiny case where x - floor(x) rounds to 1.
inline double frac(double x) {
  double r = x - std::floor(x);
  return r >= 1.0 ? 0.0 : r;
}

/// A point of the circle R/Z, stored as its representative in [0,1).
class CirclePoint {
 public:
  constexpr CirclePoint() = default;
  explicit CirclePoint(double x) : value_(frac(x)) {}

  double value() const noexcept { return value_; }

  friend bool operator==(CirclePoint a, CirclePoint b) { return a.value_ == b.value_; }
  friend bool operator<(CirclePoint a, CirclePoint b) { return a.value_ < b.value_; }

 private:
  double value_ = 0.0;
};

/// d(a,b) = min(|a-b|, 1-|a-b|) on representatives.
inline double circle_distance(double a, double b) {
  double d = std::fabs(frac(a) - frac(b));
  return std::min(d, 1.0 - d);
}

inline double circle_distance(CirclePoint a, CirclePoint b) {
  return circle_distance(a.value(), b.value());
}

/// Forward (counter-clockwise) distance from a to b, in [0,1).
inline double forward_distance(double a, double b) { return frac(b - a); }

/// Open arc travelled forward from start to end. start == end denotes the whole circle.
struct Arc {
  CirclePoint start;
  CirclePoint end;

  double length() const {
    double l = forward_distance(start.value(), end.value());
    return l == 0.0 ? 1.0 : l;
  }

  bool contains(double x, double slack = 0.0) const {
    const double l = length();
    if (l >= 1.0) return true;
    const double d = forward_distance(start.value(), x);
    if (d > 0.0 && d < l) return true;
    if (slack <= 0.0) return false;
    return d == 0.0 || d <= l + slack || d >= 1.0 - slack;
  }
};

struct Node {
  double x;
  double y;
};

/// A continuous lifting F: R -> R with F(x+1) = F(x) + degree, stored as a
/// piecewise-linear interpolant of nodes on [0,1). A uniform grid is the
/// special case x_i = i/N and gets O(1) cell lookup; other node sets use a
/// bucket index so evaluation stays O(1) on average.
class CircleLift {
 public:
  static constexpr double kDegreeTolerance = 1e-9;

  /// y_i = F(i/N); the value at x = 1 is y_0 + degree by periodic extension.
  static CircleLift from_grid(std::vector<double> values, int degree = 1,
                              double representation_error = 0.0) {
    const std::size_t n = values.size();
    if (n == 0) throw Error(ErrorKind::NotALiftError, "empty grid");
    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = static_cast<double>(i) / static_cast<double>(n);
    return CircleLift(std::move(xs), std::move(values), degree, true, representation_error);
  }

  /// Nodes may be given anywhere on R; they are folded into [0,1) using the
  /// degree, sorted, and must then have distinct abscissae.
  static CircleLift from_breakpoints(std::vector<Node> nodes, int degree = 1,
                                     double representation_error = 0.0) {
    if (nodes.empty()) throw Error(ErrorKind::NotALiftError, "empty breakpoint list");
    for (auto& nd : nodes) {
      if (!std::isfinite(nd.x) || !std::isfinite(nd.y))
        throw Error(ErrorKind::NotALiftError, "non-finite breakpoint");
      double k = std::floor(nd.x);
      if (k != 0.0) {
        nd.x -= k;
        nd.y -= k * degree;
        if (nd.x >= 1.0) {  // x was -tiny
          nd.x = 0.0;
          nd.y += degree;
        }
      }
    }
    std::sort(nodes.begin(), nodes.end(), [](const Node& a, const Node& b) { return a.x < b.x; });
    std::vector<double> xs, ys;
    xs.reserve(nodes.size());
    ys.reserve(nodes.size());
    for (const auto& nd : nodes) {
      if (!xs.empty() && !(nd.x > xs.back()))
        throw Error(ErrorKind::NotALiftError, "breakpoint abscissae must be strictly increasing");
      xs.push_back(nd.x);
      ys.push_back(nd.y);
    }
    return CircleLift(std::move(xs), std::move(ys), degree, false, representation_error);
  }

  /// Rigid rotation x + rho, represented by the single node (0, rho) so that
  /// evaluation at t in [0,1) is exactly the rounded sum t + rho.
  static CircleLift rigid(double rho) { return from_breakpoints({{0.0, rho}}, 1); }

  /// Samples fn on a uniform grid of n cells. The degree is read off fn(1) - fn(0)
  /// and must be an integer within kDegreeTolerance. The representation error is
  /// estimated from midpoint residuals.
  template <class Fn>
  static CircleLift sample(Fn&& fn, std::size_t n) {
    if (n == 0) throw Error(ErrorKind::NotALiftError, "grid size must be positive");
    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = fn(static_cast<double>(i) / static_cast<double>(n));
    const double span = fn(1.0) - ys[0];
    const double d = std::round(span);
    if (!std::isfinite(span) || std::fabs(span - d) > kDegreeTolerance)
      throw Error(ErrorKind::NotALiftError,
                  "F(1) - F(0) = " + std::to_string(span) + " is not an integer");
    const int degree = static_cast<int>(d);
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double y1 = (i + 1 < n) ? ys[i + 1] : ys[0] + degree;
      double mid = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      err = std::max(err, std::fabs(fn(mid) - 0.5 * (ys[i] + y1)));
    }
    return from_grid(std::move(ys), degree, err);
  }

  double operator()(double x) const {
    const double k = std::floor(x);
    const double t = x - k;
    const double v = eval_unit(t >= 1.0 ? 0.0 : t);
    return k == 0.0 ? v : v + k * degree_;
  }

  /// Evaluation for t already in [0,1); the hot path of orbit iteration.
  double eval_unit(double t) const {
    if (t < xs_.front()) {
      const std::size_t i = xs_.size() - 1;
      return (ys_[i] - degree_) + (t - (xs_[i] - 1.0)) * slopes_[i];
    }
    const std::size_t i = locate(t);
    return ys_[i] + (t - xs_[i]) * slopes_[i];
  }

  int degree() const noexcept { return degree_; }
  bool uniform() const noexcept { return uniform_; }
  std::size_t size() const noexcept { return xs_.size(); }
  std::span<const double> xs() const noexcept { return xs_; }
  std::span<const double> ys() const noexcept { return ys_; }

  /// Sup-norm distance to the function this lift was sampled from (0 for
  /// lifts that are exactly the piecewise-linear map they describe).
  double representation_error() const noexcept { return repr_err_; }

  /// Node value with periodic extension: y(i) for any integer index.
  double node_y(std::ptrdiff_t i) const {
    const auto m = static_cast<std::ptrdiff_t>(xs_.size());
    std::ptrdiff_t q = i >= 0 ? i / m : -((-i + m - 1) / m);
    return ys_[static_cast<std::size_t>(i - q * m)] + static_cast<double>(q) * degree_;
  }

  double node_x(std::ptrdiff_t i) const {
    const auto m = static_cast<std::ptrdiff_t>(xs_.size());
    std::ptrdiff_t q = i >= 0 ? i / m : -((-i + m - 1) / m);
    return xs_[static_cast<std::size_t>(i - q * m)] + static_cast<double>(q);
  }

  /// Largest nodewise decrease, including the wrap cell; 0 for non-decreasing lifts.
  double max_decrease() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < xs_.size(); ++i) {
      double next = (i + 1 < xs_.size()) ? ys_[i + 1] : ys_[0] + degree_;
      worst = std::max(worst, ys_[i] - next);
    }
    return worst;
  }

  bool non_decreasing(double tol = 1e-12) const { return max_decrease() <= tol; }

  CircleLift to_grid(std::size_t n) const {
    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = eval_unit(static_cast<double>(i) / static_cast<double>(n));
    double err = repr_err_;
    if (!(uniform_ && n == xs_.size())) {
      double interp = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double y1 = (i + 1 < n) ? ys[i + 1] : ys[0] + degree_;
        double mid = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        interp = std::max(interp, std::fabs(eval_unit(mid) - 0.5 * (ys[i] + y1)));
      }
      err += interp;
    }
    return from_grid(std::move(ys), degree_, err);
  }

  CircleLift to_breakpoints() const {
    return CircleLift(xs_, ys_, degree_, false, repr_err_);
  }

  std::vector<Node> nodes() const {
    std::vector<Node> out(xs_.size());
    for (std::size_t i = 0; i < xs_.size(); ++i) out[i] = {xs_[i], ys_[i]};
    return out;
  }

  /// A copy shifted vertically by an integer-free constant: (F + c)(x) = F(x) + c.
  CircleLift shifted(double c) const {
    std::vector<double> ys = ys_;
    for (auto& y : ys) y += c;
    return CircleLift(xs_, std::move(ys), degree_, uniform_, repr_err_);
  }

 private:
  CircleLift(std::vector<double> xs, std::vector<double> ys, int degree, bool uniform,
             double repr_err)
      : xs_(std::move(xs)), ys_(std::move(ys)), degree_(degree), uniform_(uniform),
        repr_err_(repr_err) {
    const std::size_t m = xs_.size();
    if (m != ys_.size() || m == 0) throw Error(ErrorKind::NotALiftError, "node arrays mismatch");
    if (xs_.front() < 0.0 || xs_.back() >= 1.0)
      throw Error(ErrorKind::NotALiftError, "breakpoint abscissae must lie in [0,1)");
    slopes_.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      if (!std::isfinite(ys_[i])) throw Error(ErrorKind::NotALiftError, "non-finite node value");
      if (m == 1) {
        slopes_[i] = degree_;
        continue;
      }
      double x1 = (i + 1 < m) ? xs_[i + 1] : xs_[0] + 1.0;
      double y1 = (i + 1 < m) ? ys_[i + 1] : ys_[0] + degree_;
      slopes_[i] = (y1 - ys_[i]) / (x1 - xs_[i]);
    }
    if (!uniform_) build_buckets();
  }

  void build_buckets() {
    const std::size_t m = xs_.size();
    const std::size_t nb = std::max<std::size_t>(1, std::min<std::size_t>(m, std::size_t{1} << 22));
    buckets_.assign(nb, 0);
    std::size_t i = 0;
    for (std::size_t b = 0; b < nb; ++b) {
      double left = static_cast<double>(b) / static_cast<double>(nb);
      while (i + 1 < m && xs_[i + 1] <= left) ++i;
      buckets_[b] = static_cast<std::uint32_t>(i);
    }
  }

  std::size_t locate(double t) const {
    const std::size_t m = xs_.size();
    std::size_t i;
    if (uniform_) {
      i = std::min(m - 1, static_cast<std::size_t>(t * static_cast<double>(m)));
      while (i > 0 && xs_[i] > t) --i;
    } else {
      const std::size_t nb = buckets_.size();
      i = buckets_[std::min(nb - 1, static_cast<std::size_t>(t * static_cast<double>(nb)))];
    }
    while (i + 1 < m && xs_[i + 1] <= t) ++i;
    return i;
  }

  std::vector<double> xs_;
  std::vector<double> ys_;
  std::vector<double> slopes_;
  std::vector<std::uint32_t> buckets_;
  int degree_ = 1;
  bool uniform_ = false;
  double repr_err_ = 0.0;
};

inline double eval_lift(const CircleLift& f, double x) { return f(x); }

inline int degree_of(const CircleLift& f) { return f.degree(); }

/// Degree of an arbitrary callable lifting, read from F(x+1) - F(x) at a few
/// sample points; non-integer or inconsistent differences raise NotALiftError.
template <class Fn>
int degree_of(Fn&& fn, int probes = 16) {
  double d0 = std::numeric_limits<double>::quiet_NaN();
  for (int k = 0; k < probes; ++k) {
    double x = static_cast<double>(k) / probes + 0.0137;
    double span = fn(x + 1.0) - fn(x);
    double d = std::round(span);
    if (!std::isfinite(span) || std::fabs(span - d) > CircleLift::kDegreeTolerance)
      throw Error(ErrorKind::NotALiftError, "F(x+1) - F(x) = " + std::to_string(span));
    if (k == 0) d0 = d;
    else if (d != d0) throw Error(ErrorKind::NotALiftError, "inconsistent degree across probes");
  }
  return static_cast<int>(d0);
}

/// The circle map F^e = e o F o (e|[0,1))^{-1}.
inline CirclePoint project(const CircleLift& f, CirclePoint theta) {
  if (f.degree() != 1)
    throw Error(ErrorKind::DegreeError, "projection requires degree one, got " + std::to_string(f.degree()));
  return CirclePoint(f.eval_unit(theta.value()));
}

struct PlateauSet {
  std::vector<Arc> intervals;
  double tolerance = 0.0;

  bool empty() const { return intervals.empty(); }

  bool contains(double x, double slack = 0.0) const {
    return std::any_of(intervals.begin(), intervals.end(),
                       [&](const Arc& a) { return a.contains(x, slack); });
  }

  double total_length() const {
    double s = 0.0;
    for (const auto& a : intervals) s += a.length();
    return s;
  }
};

/// Exact flats in breakpoint form; half a cell's rigid increment on a grid.
inline double default_flat_tolerance(const CircleLift& f) {
  return f.uniform() ? 0.5 / static_cast<double>(f.size()) : 1e-12;
}

/// Maximal arcs made of consecutive cells on which F changes by less than tol.
/// Arcs are open, pairwise disjoint, and grow monotonically with tol.
inline PlateauSet plateau_set(const CircleLift& f, double tol) {
  PlateauSet out;
  out.tolerance = tol;
  const std::size_t m = f.size();
  auto flat = [&](std::size_t i) {
    return std::fabs(f.node_y(static_cast<std::ptrdiff_t>(i) + 1) - f.node_y(static_cast<std::ptrdiff_t>(i))) < tol;
  };
  std::size_t first_steep = m;
  for (std::size_t i = 0; i < m; ++i) {
    if (!flat(i)) {
      first_steep = i;
      break;
    }
  }
  if (first_steep == m) {
    out.intervals.push_back({CirclePoint(f.xs()[0]), CirclePoint(f.xs()[0])});
    return out;
  }
  // Walk the cells once around, starting just after a steep cell so no run is split.
  std::size_t k = 1;
  while (k <= m) {
    std::size_t cell = (first_steep + k) % m;
    if (!flat(cell)) {
      ++k;
      continue;
    }
    std::size_t run_start = cell;
    std::size_t len = 0;
    while (k <= m && flat((first_steep + k) % m)) {
      ++len;
      ++k;
    }
    double x0 = f.node_x(static_cast<std::ptrdiff_t>(run_start));
    double x1 = f.node_x(static_cast<std::ptrdiff_t>(run_start + len));
    out.intervals.push_back({CirclePoint(x0), CirclePoint(x1)});
  }
  std::sort(out.intervals.begin(), out.intervals.end(),
            [](const Arc& a, const Arc& b) { return a.start < b.start; });
  return out;
}

inline PlateauSet plateau_set(const CircleLift& f) { return plateau_set(f, default_flat_tolerance(f)); }

}  // namespace rotatlas
