#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "overtake/geometry.hpp"

namespace overtake {

/// Pose and speed of a vehicle's centre of mass in the world frame.
struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;  // wrapped to (-pi, pi]
  double v = 0.0;    // >= 0

  Vec2 position() const { return {x, y}; }
  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

struct ControlInput {
  double a = 0.0;      // m/s^2
  double delta = 0.0;  // front steering angle, rad
  friend bool operator==(const ControlInput&, const ControlInput&) = default;
};

struct VehicleGeometry {
  double l_f = 1.4;
  double l_r = 1.4;
  double length = 4.5;
  double width = 1.8;

  double wheelbase() const { return l_f + l_r; }
  bool valid() const {
    return l_f > 0 && l_r > 0 && length > 0 && width > 0 && l_f + l_r <= length;
  }
};

struct ControlLimits {
  double a_min = -5.0;
  double a_max = 3.0;
  double delta_min = -0.6;
  double delta_max = 0.6;

  bool valid() const { return a_min < 0 && a_max > 0 && delta_max > 0 && delta_min == -delta_max; }
  bool contains(const ControlInput& u, double tol = 1e-9) const {
    return u.a >= a_min - tol && u.a <= a_max + tol && u.delta >= delta_min - tol &&
           u.delta <= delta_max + tol;
  }
  ControlInput clamp(const ControlInput& u) const {
    return {std::clamp(u.a, a_min, a_max), std::clamp(u.delta, delta_min, delta_max)};
  }
};

using StateVector = Eigen::Vector4d;
using StateJacobian = Eigen::Matrix4d;
using ControlJacobian = Eigen::Matrix<double, 4, 2>;

inline StateVector to_vector(const VehicleState& s) { return {s.x, s.y, s.psi, s.v}; }
inline VehicleState to_state(const StateVector& v) { return {v(0), v(1), v(2), v(3)}; }

/// Angle of the centre-of-mass velocity relative to the body axis.
inline double slip_angle(double delta, const VehicleGeometry& geom) {
  return std::atan(geom.l_r * std::tan(delta) / geom.wheelbase());
}

/// Kinematic bicycle time derivative (x', y', psi', v').
inline StateVector derivative(const VehicleState& s, const ControlInput& u,
                              const VehicleGeometry& geom) {
  const double beta = slip_angle(u.delta, geom);
  return {s.v * std::cos(s.psi + beta), s.v * std::sin(s.psi + beta),
          s.v / geom.wheelbase() * std::cos(beta) * std::tan(u.delta), u.a};
}

namespace detail {

inline StateVector derivative_jac(const StateVector& s, const ControlInput& u,
                                  const VehicleGeometry& geom, StateJacobian& fs,
                                  ControlJacobian& fu) {
  const double L = geom.wheelbase();
  const double k = geom.l_r / L;
  const double tan_d = std::tan(u.delta);
  const double sec2_d = 1.0 + tan_d * tan_d;
  const double beta = std::atan(k * tan_d);
  const double dbeta = k * sec2_d / (1.0 + k * k * tan_d * tan_d);
  const double c = std::cos(s(2) + beta);
  const double sn = std::sin(s(2) + beta);
  const double cb = std::cos(beta);
  const double sb = std::sin(beta);
  const double v = s(3);

  fs.setZero();
  fs(0, 2) = -v * sn;
  fs(0, 3) = c;
  fs(1, 2) = v * c;
  fs(1, 3) = sn;
  fs(2, 3) = cb * tan_d / L;

  fu.setZero();
  fu(0, 1) = -v * sn * dbeta;
  fu(1, 1) = v * c * dbeta;
  fu(2, 1) = v / L * (-sb * dbeta * tan_d + cb * sec2_d);
  fu(3, 0) = 1.0;

  return {v * c, v * sn, v / L * cb * tan_d, u.a};
}

}  // namespace detail

/// One RK4 step of the bicycle model, followed by heading wrap and a speed floor at zero.
/// When `A`/`B` are non-null they receive d(next)/d(state) and d(next)/d(control).
inline VehicleState step(const VehicleState& state, const ControlInput& u,
                         const VehicleGeometry& geom, double dt, StateJacobian* A = nullptr,
                         ControlJacobian* B = nullptr) {
  const StateVector s = to_vector(state);
  StateJacobian f1s, f2s, f3s, f4s;
  ControlJacobian f1u, f2u, f3u, f4u;
  const double h = dt;
  const StateVector k1 = detail::derivative_jac(s, u, geom, f1s, f1u);
  const StateVector k2 = detail::derivative_jac(s + 0.5 * h * k1, u, geom, f2s, f2u);
  const StateVector k3 = detail::derivative_jac(s + 0.5 * h * k2, u, geom, f3s, f3u);
  const StateVector k4 = detail::derivative_jac(s + h * k3, u, geom, f4s, f4u);
  StateVector next = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

  if (A != nullptr || B != nullptr) {
    const StateJacobian I = StateJacobian::Identity();
    const StateJacobian d1s = f1s;
    const StateJacobian d2s = f2s * (I + 0.5 * h * d1s);
    const StateJacobian d3s = f3s * (I + 0.5 * h * d2s);
    const StateJacobian d4s = f4s * (I + h * d3s);
    const ControlJacobian d1u = f1u;
    const ControlJacobian d2u = f2s * (0.5 * h * d1u) + f2u;
    const ControlJacobian d3u = f3s * (0.5 * h * d2u) + f3u;
    const ControlJacobian d4u = f4s * (h * d3u) + f4u;
    StateJacobian a = I + (h / 6.0) * (d1s + 2.0 * d2s + 2.0 * d3s + d4s);
    ControlJacobian b = (h / 6.0) * (d1u + 2.0 * d2u + 2.0 * d3u + d4u);
    if (next(3) < 0.0) {
      a.row(3).setZero();
      b.row(3).setZero();
    }
    if (A != nullptr) *A = a;
    if (B != nullptr) *B = b;
  }

  next(2) = wrap_angle(next(2));
  next(3) = std::max(next(3), 0.0);
  return to_state(next);
}

}  // namespace overtake
