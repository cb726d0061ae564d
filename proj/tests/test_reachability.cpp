#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "overtake/reachability.hpp"

using namespace overtake;

namespace {

const ControlLimits kLimits;
const VehicleGeometry kGeom;

std::vector<oracle::P> to_oracle(const Polygon& poly) {
  std::vector<oracle::P> out;
  for (Vec2 v : poly) out.push_back({v.x, v.y});
  return out;
}

}  // namespace

TEST(Reachable, StraightEndpointTenMetresAhead) {
  const ReachablePolygon r = reachable_polygon({0, 0, 0, 3}, 10.0, kLimits, kGeom, 1.0);
  ASSERT_EQ(r.boundary.size(), 1u + 10 + 19 + 10);
  const Vec2 mid = r.boundary[20];
  EXPECT_NEAR(mid.x, 10.0, 1e-12);
  EXPECT_NEAR(mid.y, 0.0, 1e-12);
  EXPECT_FALSE(r.degenerate);
}

TEST(Reachable, StraightEndpointFollowsHeading) {
  const ReachablePolygon r = reachable_polygon({5, -2, 0.7, 3}, 10.0, kLimits, kGeom, 1.0);
  const Vec2 mid = r.boundary[20];
  EXPECT_NEAR(mid.x, 5 + 10 * std::cos(0.7), 1e-12);
  EXPECT_NEAR(mid.y, -2 + 10 * std::sin(0.7), 1e-12);
}

TEST(Reachable, SymmetricAboutHeadingAxis) {
  const ReachablePolygon r = reachable_polygon({0, 0, 0, 8}, 10.0, kLimits, kGeom, 1.0);
  const std::size_t n = r.boundary.size();
  // Vertex k (after the ego) mirrors vertex n - k.
  for (std::size_t k = 1; k < n; ++k) {
    EXPECT_NEAR(r.boundary[k].x, r.boundary[n - k].x, 1e-9);
    EXPECT_NEAR(r.boundary[k].y, -r.boundary[n - k].y, 1e-9);
  }
  EXPECT_TRUE(is_simple(r.boundary));
}

TEST(Reachable, LeftEndpointMatchesClosedFormArc) {
  const ReachablePolygon r = reachable_polygon({0, 0, 0, 8}, 10.0, kLimits, kGeom, 1.0);
  const oracle::P end = oracle::arc_endpoint(0, 0, 0, 10, 0.6, {1.4, 1.4}, 1.0);
  const Vec2 left = r.boundary[10];
  EXPECT_LT(std::hypot(left.x - end.x, left.y - end.y), 1e-3);
}

TEST(Reachable, ZeroSpeedDegenerates) {
  const ReachablePolygon r = reachable_polygon({3, 4, 0, 8}, 0.0, kLimits, kGeom, 1.0);
  EXPECT_TRUE(r.degenerate);
  for (Vec2 p : r.boundary) EXPECT_NEAR(distance(p, {3, 4}), 1e-3, 1e-12);
}

TEST(Intersect, CoveringPolygonKeepsSafeSet) {
  SafeSet safe;
  for (int i = 0; i < 10; ++i) safe.points.push_back({0.5 * i, 0.25 * i});
  ReachablePolygon all;
  all.boundary = {{-10, -10}, {10, -10}, {10, 10}, {-10, 10}};
  const SafeReachableSet out = intersect(safe, all);
  EXPECT_EQ(out.points, safe.points);
}

TEST(Intersect, EmptySafeSet) {
  const ReachablePolygon r = reachable_polygon({0, 0, 0, 8}, 10.0, kLimits, kGeom, 1.0);
  EXPECT_TRUE(intersect(SafeSet{}, r).empty());
}

TEST(Intersect, CountMatchesBruteForce) {
  SafeSet safe;
  for (int j = -40; j <= 40; ++j) {
    for (int i = -40; i <= 40; ++i) safe.points.push_back({0.5 * i, 0.5 * j});
  }
  ReachablePolygon half;
  half.boundary = {{-25, -25}, {25, 25}, {-25, 25}};
  const auto ref = to_oracle(half.boundary);
  std::size_t expected = 0;
  for (Vec2 p : safe.points) expected += oracle::inside({p.x, p.y}, ref) ? 1 : 0;
  EXPECT_EQ(intersect(safe, half).size(), expected);

  const ReachablePolygon r = reachable_polygon({0.1, 0.2, 0.3, 8}, 10.0, kLimits, kGeom, 1.0);
  const auto rref = to_oracle(r.boundary);
  expected = 0;
  for (Vec2 p : safe.points) expected += oracle::inside({p.x, p.y}, rref) ? 1 : 0;
  EXPECT_EQ(intersect(safe, r).size(), expected);
}

TEST(Reachable, PolygonCsv) {
  std::ostringstream out;
  write_polygon_csv(out, {{0, 0}, {1, 0.5}});
  EXPECT_EQ(out.str(), "index,x,y\n0,0.000000,0.000000\n1,1.000000,0.500000\n");
}
