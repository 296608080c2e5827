#pragma once

// Reference computations used only by the tests. They share no code with the
// library: envelopes come from the closed-form critical points of the sine
// family, window extrema from direct scans, rotation numbers from long double
// iteration of the analytic envelopes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace oracle {

// Frozen outputs of rotation(Sine{}.lower / .upper, n, 0) below, x86-64 long double.
constexpr double kRhoLower1e6 = 0.19999996420707389;
constexpr double kRhoUpper1e6 = 0.25000017981159435;
constexpr double kRhoLower1e7 = 0.19999999642070739;
constexpr double kRhoUpper1e7 = 0.25000001798115944;

constexpr long double kTwoPi = 2.0L * std::numbers::pi_v<long double>;

struct Sine {
  long double a = 0.3L;
  long double b = 0.25L;

  long double operator()(long double x) const { return x + a + b * std::sin(kTwoPi * x); }

  // F' = 1 + 2 pi b cos(2 pi x) vanishes where cos(2 pi x) = -1/(2 pi b).
  long double u() const { return std::acos(-1.0L / (kTwoPi * b)); }
  long double local_max() const { return u() / kTwoPi; }
  long double local_min() const { return 1.0L - u() / kTwoPi; }

  /// inf of F over [x, x+1]: the endpoint x or the one local minimum inside.
  long double lower(long double x) const {
    const long double m = local_min();
    return std::min((*this)(x), (*this)(m + std::ceil(x - m)));
  }
  /// sup of F over [x-1, x].
  long double upper(long double x) const {
    const long double m = local_max();
    return std::max((*this)(x), (*this)(m + std::floor(x - m)));
  }
};

/// (G^n(x0) - x0)/n for a non-decreasing degree-one G, fractional part and turns kept apart.
template <class G>
long double rotation(const G& g, std::int64_t n, long double x0 = 0.0L) {
  long double t = x0 - std::floor(x0);
  std::int64_t turns = 0;
  for (std::int64_t k = 0; k < n; ++k) {
    const long double y = g(t);
    const long double fl = std::floor(y);
    turns += static_cast<std::int64_t>(fl);
    t = y - fl;
  }
  return (static_cast<long double>(turns) + t - (x0 - std::floor(x0))) / static_cast<long double>(n);
}

/// min over j in [i, i+n] of ys[j mod n] + floor(j / n), by direct scan.
inline std::vector<double> window_min(const std::vector<double>& ys) {
  const std::size_t n = ys.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double m = ys[i];
    for (std::size_t j = i; j <= i + n; ++j) m = std::min(m, ys[j % n] + static_cast<double>(j / n));
    out[i] = m;
  }
  return out;
}

/// max over j in [i-n, i] of ys[j mod n] + floor(j / n), by direct scan.
inline std::vector<double> window_max(const std::vector<double>& ys) {
  const std::size_t n = ys.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double m = ys[i];
    for (std::size_t j = i + n; j >= i; --j) {
      const double v = ys[j % n] + static_cast<double>(static_cast<std::ptrdiff_t>(j / n) - 1);
      m = std::max(m, v);
      if (j == 0) break;
    }
    out[i] = m;
  }
  return out;
}

}  // namespace oracle
