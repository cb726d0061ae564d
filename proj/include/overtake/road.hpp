#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "overtake/geometry.hpp"

namespace overtake {

/// Road-aligned coordinates: arc length along the centreline and left-positive offset.
struct Frenet {
  double s = 0.0;
  double offset = 0.0;
};

/// Multi-lane road described by the centreline of lane 0; lanes are stacked to the left.
class RoadModel {
 public:
  RoadModel() : RoadModel(2, 4.0, {{0.0, 0.0}, {10000.0, 0.0}}) {}

  RoadModel(int lane_count, double lane_width, std::vector<Vec2> centerline)
      : lane_count_(lane_count), lane_width_(lane_width), centerline_(std::move(centerline)) {
    if (lane_count_ < 1) throw std::invalid_argument("road.lane_count must be >= 1");
    if (!(lane_width_ > 0.0)) throw std::invalid_argument("road.lane_width must be > 0");
    if (centerline_.size() < 2) throw std::invalid_argument("road.centerline needs >= 2 points");
    cumulative_.assign(centerline_.size(), 0.0);
    for (std::size_t i = 1; i < centerline_.size(); ++i) {
      const double len = distance(centerline_[i], centerline_[i - 1]);
      if (len <= 0.0) throw std::invalid_argument("road.centerline has repeated points");
      cumulative_[i] = cumulative_[i - 1] + len;
    }
  }

  int lane_count() const { return lane_count_; }
  double lane_width() const { return lane_width_; }
  const std::vector<Vec2>& centerline() const { return centerline_; }

  double lower_edge() const { return -0.5 * lane_width_; }
  double upper_edge() const { return (lane_count_ - 0.5) * lane_width_; }
  double lane_offset(int lane) const { return lane * lane_width_; }

  Frenet to_frenet(Vec2 p) const {
    double best = std::numeric_limits<double>::infinity();
    Frenet out;
    const std::size_t segments = centerline_.size() - 1;
    for (std::size_t i = 0; i < segments; ++i) {
      const Vec2 a = centerline_[i];
      const Vec2 ab = centerline_[i + 1] - a;
      const double len = cumulative_[i + 1] - cumulative_[i];
      double t = dot(p - a, ab) / (len * len);
      // Extrapolate past the polyline ends rather than clamping.
      if (i != 0) t = std::max(t, 0.0);
      if (i + 1 != segments) t = std::min(t, 1.0);
      const Vec2 foot = a + t * ab;
      const double d = distance(p, foot);
      if (d < best) {
        best = d;
        out.s = cumulative_[i] + t * len;
        out.offset = cross(ab, p - a) / len;
      }
    }
    return out;
  }

  Vec2 from_frenet(Frenet f) const {
    const std::size_t i = segment_at(f.s);
    const Vec2 a = centerline_[i];
    const Vec2 ab = centerline_[i + 1] - a;
    const double len = cumulative_[i + 1] - cumulative_[i];
    const Vec2 t = (1.0 / len) * ab;
    return a + (f.s - cumulative_[i]) * t + f.offset * Vec2{-t.y, t.x};
  }

  double heading_at(double s) const {
    const std::size_t i = segment_at(s);
    const Vec2 ab = centerline_[i + 1] - centerline_[i];
    return std::atan2(ab.y, ab.x);
  }

  Vec2 lane_center(int lane, double s) const { return from_frenet({s, lane_offset(lane)}); }

  /// Lane index containing a lateral offset, or -1 when off the road.
  int lane_of(double offset) const {
    if (offset < lower_edge() || offset > upper_edge()) return -1;
    return std::min(lane_count_ - 1, static_cast<int>(std::floor(offset / lane_width_ + 0.5)));
  }

  bool on_road(Vec2 p) const {
    const double off = to_frenet(p).offset;
    return off >= lower_edge() && off <= upper_edge();
  }

  /// Distance to the nearest road boundary; negative when off the road.
  double edge_distance(Vec2 p) const {
    const double off = to_frenet(p).offset;
    return std::min(off - lower_edge(), upper_edge() - off);
  }

 private:
  std::size_t segment_at(double s) const {
    std::size_t i = 0;
    while (i + 2 < centerline_.size() && s > cumulative_[i + 1]) ++i;
    return i;
  }

  int lane_count_;
  double lane_width_;
  std::vector<Vec2> centerline_;
  std::vector<double> cumulative_;
};

}  // namespace overtake
