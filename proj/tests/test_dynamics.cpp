#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "overtake/dynamics.hpp"

using namespace overtake;

TEST(SlipAngle, ZeroSteer) { EXPECT_EQ(slip_angle(0.0, {}), 0.0); }

TEST(SlipAngle, SymmetricWheelbaseHalvesRatio) {
  EXPECT_DOUBLE_EQ(slip_angle(0.2, {1.4, 1.4}), std::atan(0.5 * std::tan(0.2)));
}

TEST(SlipAngle, AsymmetricWheelbase) {
  const double expected = std::atan(1.6 / (1.2 + 1.6) * std::tan(0.3));
  EXPECT_NEAR(slip_angle(0.3, {1.2, 1.6}), expected, 1e-15);
}

TEST(Derivative, StraightLine) {
  const StateVector d = derivative({0, 0, 0, 5}, {0, 0}, {});
  EXPECT_DOUBLE_EQ(d(0), 5.0);
  EXPECT_DOUBLE_EQ(d(1), 0.0);
  EXPECT_DOUBLE_EQ(d(2), 0.0);
  EXPECT_DOUBLE_EQ(d(3), 0.0);
}

TEST(Derivative, StandstillOnlyAccelerates) {
  const StateVector d = derivative({0, 0, 0.3, 0}, {1.0, 0.4}, {});
  EXPECT_EQ(d(0), 0.0);
  EXPECT_EQ(d(1), 0.0);
  EXPECT_EQ(d(2), 0.0);
  EXPECT_EQ(d(3), 1.0);
}

TEST(Derivative, MatchesScalarFormula) {
  const auto ref = oracle::rates({0, 0, 0.1, 10}, 0.5, 0.05, {1.4, 1.4});
  const StateVector d = derivative({0, 0, 0.1, 10}, {0.5, 0.05}, {});
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(d(i), ref[i], 1e-14);
}

TEST(Step, ConstantVelocityIsExact) {
  const VehicleState s = step({0, 0, 0, 10}, {0, 0}, {}, 0.1);
  EXPECT_EQ(s.x, 1.0);
  EXPECT_EQ(s.y, 0.0);
  EXPECT_EQ(s.psi, 0.0);
  EXPECT_EQ(s.v, 10.0);
}

TEST(Step, SpeedClampedAtZero) {
  const VehicleState s = step({0, 0, 0, 2}, {-2 / 0.1, 0}, {}, 0.1);
  EXPECT_EQ(s.v, 0.0);
  const VehicleState t = step({0, 0, 0, 2}, {-5, 0}, {}, 1.0);
  EXPECT_EQ(t.v, 0.0);
}

TEST(Step, HeadingWrapped) {
  VehicleState s{0, 0, 3.1, 10};
  for (int i = 0; i < 20; ++i) s = step(s, {0, 0.5}, {}, 0.1);
  EXPECT_GT(s.psi, -std::numbers::pi);
  EXPECT_LE(s.psi, std::numbers::pi);
}

TEST(Step, CircleMatchesClosedFormArc) {
  VehicleState s{0, 0, 0, 10};
  for (int i = 0; i < 200; ++i) s = step(s, {0, 0.1}, {}, 0.05);
  const oracle::P end = oracle::arc_endpoint(0, 0, 0, 10, 0.1, {1.4, 1.4}, 10.0);
  EXPECT_LT(std::hypot(s.x - end.x, s.y - end.y), 1e-3);
}

TEST(Step, MatchesIndependentRk4) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 100; ++i) {
    const VehicleState x{10 * u(rng), 10 * u(rng), 3 * u(rng), 10 + 8 * u(rng)};
    const ControlInput c{3 * u(rng), 0.5 * u(rng)};
    const VehicleState y = step(x, c, {}, 0.1);
    const auto r = oracle::rk4({x.x, x.y, x.psi, x.v}, c.a, c.delta, {1.4, 1.4}, 0.1);
    EXPECT_NEAR(y.x, r[0], 1e-12);
    EXPECT_NEAR(y.y, r[1], 1e-12);
    EXPECT_NEAR(wrap_angle(y.psi - r[2]), 0.0, 1e-12);
    EXPECT_NEAR(y.v, r[3], 1e-12);
  }
}

TEST(Step, JacobiansMatchFiniteDifferences) {
  const VehicleState x{1, 2, 0.3, 8};
  const ControlInput u{0.7, 0.12};
  StateJacobian A;
  ControlJacobian B;
  step(x, u, {}, 0.1, &A, &B);
  const double h = 1e-6;
  for (int j = 0; j < 4; ++j) {
    StateVector xp = to_vector(x), xm = to_vector(x);
    xp(j) += h;
    xm(j) -= h;
    const StateVector fd = (to_vector(step(to_state(xp), u, {}, 0.1)) -
                            to_vector(step(to_state(xm), u, {}, 0.1))) / (2 * h);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(A(i, j), fd(i), 1e-6) << i << ',' << j;
  }
  for (int j = 0; j < 2; ++j) {
    ControlInput up = u, um = u;
    (j == 0 ? up.a : up.delta) += h;
    (j == 0 ? um.a : um.delta) -= h;
    const StateVector fd =
        (to_vector(step(x, up, {}, 0.1)) - to_vector(step(x, um, {}, 0.1))) / (2 * h);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(B(i, j), fd(i), 1e-6) << i << ',' << j;
  }
}

TEST(ControlLimits, ClampAndContains) {
  const ControlLimits lim;
  EXPECT_TRUE(lim.contains({3.0, -0.6}));
  EXPECT_FALSE(lim.contains({3.1, 0}));
  const ControlInput c = lim.clamp({-9, 2});
  EXPECT_EQ(c.a, -5.0);
  EXPECT_EQ(c.delta, 0.6);
}
