#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "rotatlas/rotation.hpp"

using namespace rotatlas;

TEST(Envelopes, SlidingMinMatchesScan) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(300);
  for (auto& x : v) x = u(rng);
  for (std::size_t w : {1u, 2u, 7u, 64u, 300u}) {
    const auto lo = detail::sliding_min(v, w);
    const auto hi = detail::sliding_max(v, w);
    ASSERT_EQ(lo.size(), v.size() - w + 1);
    for (std::size_t i = 0; i < lo.size(); ++i) {
      EXPECT_EQ(lo[i], *std::min_element(v.begin() + i, v.begin() + i + w));
      EXPECT_EQ(hi[i], *std::max_element(v.begin() + i, v.begin() + i + w));
    }
  }
}

TEST(Envelopes, RandomGridsMatchBruteForce) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    const CircleLift f = fixtures::random_lift(rng, 256);
    const std::vector<double> ys(f.ys().begin(), f.ys().end());
    const auto lo = oracle::window_min(ys);
    const auto hi = oracle::window_max(ys);
    const CircleLift fl = lower_envelope(f), fu = upper_envelope(f);
    EXPECT_TRUE(fl.non_decreasing(0.0));
    EXPECT_TRUE(fu.non_decreasing(0.0));
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const double x = f.xs()[i];
      EXPECT_EQ(fl.eval_unit(x), lo[i]) << "node " << i;
      EXPECT_EQ(fu.eval_unit(x), hi[i]) << "node " << i;
    }
  }
}

TEST(Envelopes, SineFamilyMatchesClosedForm) {
  const CircleLift f = fixtures::sine_lift();
  const WaterFamily w = envelopes(f);
  const oracle::Sine s;
  double worst_lo = 0.0, worst_hi = 0.0;
  for (int i = 0; i < 4096; ++i) {
    const double x = (i + 0.37) / 4096.0;
    worst_lo = std::max(worst_lo, std::fabs(w.lower.eval_unit(x) - static_cast<double>(s.lower(x))));
    worst_hi = std::max(worst_hi, std::fabs(w.upper.eval_unit(x) - static_cast<double>(s.upper(x))));
  }
  // Piecewise-linear interpolation on 2^17 cells: curvature error below 1e-9.
  EXPECT_LT(worst_lo, 1e-9);
  EXPECT_LT(worst_hi, 1e-9);
  long double span = 0.0L;
  for (int i = 0; i < 200000; ++i) {
    const long double x = i / 200000.0L;
    span = std::max(span, s.upper(x) - s.lower(x));
  }
  EXPECT_NEAR(w.span, static_cast<double>(span), 1e-8);
}

TEST(Envelopes, MonotoneInputIsFixed) {
  const CircleLift f = fixtures::arnold_lift(4096);
  ASSERT_TRUE(f.non_decreasing());
  const WaterFamily w = envelopes(f);
  EXPECT_EQ(w.span, 0.0);
  EXPECT_EQ(fixtures::lift_distance(w.lower, f), 0.0);
  EXPECT_EQ(fixtures::lift_distance(w.upper, f), 0.0);
}

TEST(Envelopes, RejectsOtherDegrees) {
  const CircleLift f = CircleLift::from_grid({0.0, 0.9}, 2);
  EXPECT_THROW(lower_envelope(f), Error);
}

TEST(Water, EndpointsAreEnvelopes) {
  const WaterFamily w = envelopes(fixtures::sine_lift());
  EXPECT_LE(fixtures::lift_distance(water_function(w, 0.0), w.lower), 1e-12);
  EXPECT_LE(fixtures::lift_distance(water_function(w, w.span), w.upper), 1e-12);
  EXPECT_THROW(water_function(w, -0.1), Error);
  EXPECT_THROW(water_function(w, w.span + 0.01), Error);
}

TEST(Water, SweepIsMonotone) {
  const WaterFamily w = envelopes(fixtures::sine_lift(0.3, 0.25, 4096));
  CircleLift prev = water_function(w, 0.0);
  for (int k = 1; k <= 20; ++k) {
    const CircleLift cur = water_function(w, w.span * k / 20.0);
    EXPECT_TRUE(cur.non_decreasing());
    for (double x : cur.xs()) EXPECT_GE(cur.eval_unit(x), prev.eval_unit(x) - 1e-12);
    for (double x : prev.xs()) EXPECT_GE(cur.eval_unit(x), prev.eval_unit(x) - 1e-12);
    prev = cur;
  }
}

TEST(Water, AgreesWithMapOffPlateaus) {
  const CircleLift f = fixtures::sine_lift(0.3, 0.25, 4096);
  const WaterFamily w = envelopes(f);
  const CircleLift fa = water_function(w, 0.4 * w.span);
  const PlateauSet flats = plateau_set(fa);
  EXPECT_FALSE(flats.empty());
  const double cell = 1.0 / 4096.0;
  std::size_t checked = 0;
  for (double x : f.xs()) {
    if (flats.contains(x, cell)) continue;
    ++checked;
    EXPECT_NEAR(fa.eval_unit(x), f.eval_unit(x), 1e-12) << "x = " << x;
  }
  EXPECT_GT(checked, 1000u);
}

TEST(Rotation, RigidIsExact) {
  for (double rho : {0.0, 0.25, kGoldenMean, 0.999}) {
    const RotationEstimate r = rotation_number(CircleLift::rigid(rho), 100000);
    EXPECT_NEAR(r.value, rho, 1e-15);
    EXPECT_LE(r.bound, 1.0 / 100000 + 1e-18);
    EXPECT_TRUE(r.rigorous);
  }
}

TEST(Rotation, SineIntervalMatchesOracle) {
  const RotationInterval ri = rotation_interval(fixtures::sine_lift(), 1000000);
  EXPECT_NEAR(ri.lo.value, oracle::kRhoLower1e6, 1e-6);
  EXPECT_NEAR(ri.hi.value, oracle::kRhoUpper1e6, 1e-6);
  EXPECT_FALSE(ri.degenerate());
}

TEST(Rotation, OracleReproducesFrozenValues) {
  const oracle::Sine s;
  EXPECT_EQ(static_cast<double>(oracle::rotation([&](long double x) { return s.lower(x); }, 1000000)),
            oracle::kRhoLower1e6);
  EXPECT_EQ(static_cast<double>(oracle::rotation([&](long double x) { return s.upper(x); }, 1000000)),
            oracle::kRhoUpper1e6);
}

TEST(Rotation, RejectsNonMonotone) { EXPECT_THROW(rotation_number(fixtures::sine_lift(0.3, 0.25, 512)), Error); }

TEST(Rotation, PointwiseOnRigidMap) {
  const RotationEstimate r = pointwise_rotation_number(CircleLift::rigid(0.3), 0.7, 10000);
  EXPECT_NEAR(r.value, 0.3, 1e-12);
  EXPECT_TRUE(r.rigorous);
}

TEST(Rotation, PointwiseInsideInterval) {
  const CircleLift f = fixtures::sine_lift(0.3, 0.25, 4096);
  const RotationInterval ri = rotation_interval(f, 100000);
  for (double x : {0.0, 0.3, 0.77}) {
    const RotationEstimate r = pointwise_rotation_number(f, x, 100000);
    EXPECT_GE(r.value, ri.lo.value - ri.lo.bound - r.bound);
    EXPECT_LE(r.value, ri.hi.value + ri.hi.bound + r.bound);
  }
}

TEST(SolveAlpha, HitsRationalPlateau) {
  const WaterFamily w = envelopes(fixtures::sine_lift());
  const AlphaSolution a = solve_alpha(w, 0.22, 1e-6);
  EXPECT_LE(a.residual, 1e-6);
  EXPECT_NEAR(rotation_number(water_function(w, a.alpha), 1000000).value, 0.22, 1e-6);
}

TEST(SolveAlpha, OutsideIntervalIsRejected) {
  const WaterFamily w = envelopes(fixtures::sine_lift(0.3, 0.25, 4096));
  try {
    solve_alpha(w, 0.9, 1e-6);
    FAIL() << "expected TargetOutsideRotationSet";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TargetOutsideRotationSet);
  }
}

TEST(SolveAlpha, DegenerateFamily) {
  const WaterFamily w = envelopes(CircleLift::rigid(0.4));
  EXPECT_EQ(w.span, 0.0);
  const AlphaSolution a = solve_alpha(w, 0.4, 1e-6);
  EXPECT_EQ(a.alpha, 0.0);
  EXPECT_LE(a.residual, 1e-6);
}

TEST(SolveAlpha, IterationsFollowTolerance) {
  EXPECT_EQ(solve_iterations(1e-6, {}), 2000000);
  EXPECT_EQ(solve_iterations(1e-2, {}), 100000);
  EXPECT_EQ(solve_iterations(1e-9, {}), 10000000);
  SolveOptions o;
  o.iterations = 1234;
  EXPECT_EQ(solve_iterations(1e-6, o), 1234);
}
