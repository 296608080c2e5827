#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <vector>

#include "rotatlas/circle.hpp"
#include "rotatlas/figures.hpp"
#include "rotatlas/skew.hpp"

namespace fixtures {

inline constexpr std::size_t kGrid = std::size_t{1} << 17;
inline constexpr double kSineA = 0.3;
inline constexpr double kSineB = 0.25;

/// x + a + b sin 2 pi x on a uniform grid.
inline rotatlas::CircleLift sine_lift(double a = kSineA, double b = kSineB, std::size_t n = kGrid) {
  return rotatlas::CircleLift::sample([a, b](double x) { return x + a + b * std::sin(2.0 * std::numbers::pi * x); },
                                      n);
}

/// Subcritical Arnold map (a homeomorphism) whose rotation number sits near the golden mean.
inline rotatlas::CircleLift arnold_lift(std::size_t n = kGrid) { return sine_lift(0.6127590585, 0.1, n); }

/// Random degree-one grid lift: i/n + periodic noise of the given amplitude.
inline rotatlas::CircleLift random_lift(std::mt19937_64& rng, std::size_t n, double amp = 0.3) {
  std::uniform_real_distribution<double> u(-amp, amp);
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = static_cast<double>(i) / static_cast<double>(n) + u(rng);
  return rotatlas::CircleLift::from_grid(std::move(ys));
}

/// Golden-section offsets lo + frac(k g) (hi - lo), k = 1..count.
inline std::vector<double> golden_targets(double lo, double hi, int count) {
  std::vector<double> out;
  for (int k = 1; k <= count; ++k) out.push_back(lo + rotatlas::frac(k * rotatlas::kGoldenMean) * (hi - lo));
  return out;
}

/// Largest |f - g| over the breakpoints of both (exact for piecewise-linear lifts).
inline double lift_distance(const rotatlas::CircleLift& f, const rotatlas::CircleLift& g) {
  double d = 0.0;
  for (double x : f.xs()) d = std::max(d, std::fabs(f.eval_unit(x) - g.eval_unit(x)));
  for (double x : g.xs()) d = std::max(d, std::fabs(f.eval_unit(x) - g.eval_unit(x)));
  return d;
}

}  // namespace fixtures
