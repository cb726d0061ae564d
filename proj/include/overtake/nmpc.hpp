#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "overtake/dynamics.hpp"
#include "overtake/geometry.hpp"
#include "overtake/qp.hpp"
#include "overtake/riskmap.hpp"

namespace overtake {

/// Rotated superellipse |u1|^n + |u2|^n = 1 around an obstacle (n even).
struct ObstacleEllipse {
  double x_e = 0.0;
  double y_e = 0.0;
  double a = 1.0;
  double b = 1.0;
  double phi = 0.0;
  int n = 4;
  int id = 0;
};

/// Ellipse around the obstacle body padded by the ego footprint and scaled by `alpha`.
/// The velocity triangles of the risk map are deliberately not part of it.
inline ObstacleEllipse ellipse_for(const ObstacleVehicle& obs, const VehicleGeometry& ego_geom,
                                   double alpha, int n) {
  return {obs.state.x,
          obs.state.y,
          alpha * (obs.geom.length + ego_geom.length) / 2.0,
          alpha * (obs.geom.width + ego_geom.width) / 2.0,
          obs.state.psi,
          n,
          obs.id};
}

namespace detail {

inline void ellipse_coords(double x, double y, const ObstacleEllipse& e, double& u1, double& u2) {
  const double dx = x - e.x_e;
  const double dy = y - e.y_e;
  const double c = std::cos(e.phi);
  const double s = std::sin(e.phi);
  u1 = (dx * c + dy * s) / e.a;
  u2 = (dx * s - dy * c) / e.b;
}

}  // namespace detail

/// g >= 0 outside the superellipse, -1 at its centre.
inline double constraint_value(const VehicleState& x, const ObstacleEllipse& e) {
  double u1, u2;
  detail::ellipse_coords(x.x, x.y, e, u1, u2);
  return std::pow(u1, e.n) + std::pow(u2, e.n) - 1.0;
}

/// Gradient of constraint_value with respect to (x, y).
inline Vec2 constraint_gradient(const VehicleState& x, const ObstacleEllipse& e) {
  double u1, u2;
  detail::ellipse_coords(x.x, x.y, e, u1, u2);
  const double g1 = e.n * std::pow(u1, e.n - 1) / e.a;
  const double g2 = e.n * std::pow(u2, e.n - 1) / e.b;
  const double c = std::cos(e.phi);
  const double s = std::sin(e.phi);
  return {g1 * c + g2 * s, g1 * s - g2 * c};
}

using Weight4 = Eigen::Vector4d;  // diagonal of Q
using Weight2 = Eigen::Vector2d;  // diagonal of R

/// Reference state the horizon is steered towards.
struct StateReference {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  double v = 0.0;
};

struct StateBounds {
  Eigen::Vector4d lower{-std::numeric_limits<double>::infinity(),
                        -std::numeric_limits<double>::infinity(),
                        -std::numeric_limits<double>::infinity(), 0.0};
  Eigen::Vector4d upper{std::numeric_limits<double>::infinity(),
                        std::numeric_limits<double>::infinity(),
                        std::numeric_limits<double>::infinity(), 25.0};
};

struct HorizonProblem {
  VehicleState x0;
  StateReference reference;
  int horizon = 10;
  double dt = 0.1;
  std::vector<Weight4> stage_weights;    // Q_0 .. Q_{N-1}
  std::vector<Weight2> control_weights;  // R_0 .. R_{N-1}
  Weight4 terminal_weight = Weight4::Zero();
  StateBounds state_bounds;
  ControlLimits control_limits;
  VehicleGeometry geometry;
  std::vector<ObstacleEllipse> ellipses;
};

/// Stage and control weights used for the overtaking planner (N = 10). Stages past the
/// tabulated ten reuse the last entry.
inline void apply_default_weights(HorizonProblem& p) {
  p.stage_weights.clear();
  p.control_weights.clear();
  for (int k = 0; k < p.horizon; ++k) {
    if (k <= 4) {
      p.stage_weights.emplace_back(0.0, 5.0, 20.0, 10.0);
    } else if (k <= 6) {
      p.stage_weights.emplace_back(0.0, 10.0, 20.0, 10.0);
    } else if (k <= 8) {
      p.stage_weights.emplace_back(0.0, 10.0, 50.0, 10.0);
    } else {
      p.stage_weights.emplace_back(0.0, 50.0, 50.0, 30.0);
    }
    p.control_weights.emplace_back(5.0, 50.0);
  }
  p.terminal_weight = Weight4(0.0, 50.0, 50.0, 30.0);
}

enum class SolverStatus { converged, max_iter, infeasible_fallback };

inline std::string_view to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::converged: return "converged";
    case SolverStatus::max_iter: return "max_iter";
    case SolverStatus::infeasible_fallback: return "infeasible_fallback";
  }
  return "unknown";
}

struct HorizonSolution {
  std::vector<VehicleState> states;     // x_1 .. x_N
  std::vector<ControlInput> controls;   // u_0 .. u_{N-1}
  double objective = 0.0;
  double kkt_residual = 0.0;
  double max_violation = 0.0;
  int iterations = 0;
  SolverStatus status = SolverStatus::converged;
};

struct SolverOptions {
  int max_iterations = 60;
  double kkt_tolerance = 1e-4;
  double violation_tolerance = 1e-6;  // g_tol
  double elastic_penalty = 1e4;
  double hessian_step = 1e-5;
  double eigenvalue_floor = 1e-2;
  // With obstacles present, also start from constant left and right steering and keep
  // the best converged result: passing on either side gives separate local minima.
  bool side_starts = true;
  double side_start_steer = 0.5;  // fraction of the steering limit
};

// ---------------------------------------------------------------------------------------
// Rollout, cost and derivatives (single shooting: dynamics eliminated through `step`).

using ControlVector = Eigen::VectorXd;  // [a_0, delta_0, a_1, delta_1, ...]

inline ControlInput control_at(const ControlVector& u, int k) { return {u(2 * k), u(2 * k + 1)}; }

inline std::vector<VehicleState> rollout(const HorizonProblem& p, const ControlVector& u) {
  std::vector<VehicleState> xs;
  xs.reserve(p.horizon);
  VehicleState x = p.x0;
  for (int k = 0; k < p.horizon; ++k) {
    x = step(x, control_at(u, k), p.geometry, p.dt);
    xs.push_back(x);
  }
  return xs;
}

namespace detail {

inline Eigen::Vector4d tracking_error(const StateReference& r, const VehicleState& x) {
  return {r.x - x.x, r.y - x.y, wrap_angle(r.psi - x.psi), r.v - x.v};
}

}  // namespace detail

/// Terminal plus stage costs along a trajectory (`states` holds x_1..x_N).
inline double trajectory_cost(const HorizonProblem& p, const std::vector<VehicleState>& states,
                              const ControlVector& u) {
  double cost = 0.0;
  for (int k = 0; k < p.horizon; ++k) {
    const VehicleState& xk = k == 0 ? p.x0 : states[k - 1];
    const Eigen::Vector4d e = detail::tracking_error(p.reference, xk);
    const Eigen::Vector2d uk(u(2 * k), u(2 * k + 1));
    cost += e.dot(p.stage_weights[k].cwiseProduct(e)) +
            uk.dot(p.control_weights[k].cwiseProduct(uk));
  }
  const Eigen::Vector4d eN = detail::tracking_error(p.reference, states.back());
  cost += eN.dot(p.terminal_weight.cwiseProduct(eN));
  return cost;
}

inline double objective(const HorizonProblem& p, const ControlVector& u) {
  return trajectory_cost(p, rollout(p, u), u);
}

/// Inequality constraints c(u) >= 0, ordered stage-major: for k = 1..N the ellipses
/// then finite lower and upper state bounds.
inline Eigen::VectorXd constraint_values(const HorizonProblem& p,
                                         const std::vector<VehicleState>& states) {
  std::vector<double> c;
  for (int k = 0; k < p.horizon; ++k) {
    const VehicleState& x = states[k];
    const Eigen::Vector4d xv = to_vector(x);
    for (const ObstacleEllipse& e : p.ellipses) c.push_back(constraint_value(x, e));
    for (int i = 0; i < 4; ++i) {
      if (std::isfinite(p.state_bounds.lower(i))) c.push_back(xv(i) - p.state_bounds.lower(i));
      if (std::isfinite(p.state_bounds.upper(i))) c.push_back(p.state_bounds.upper(i) - xv(i));
    }
  }
  return Eigen::Map<Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
}

struct Derivatives {
  double objective = 0.0;
  Eigen::VectorXd gradient;
  Eigen::VectorXd constraints;
  Eigen::MatrixXd jacobian;  // d constraints / d u
  std::vector<VehicleState> states;
};

/// Objective gradient by a reverse (adjoint) sweep through the RK4 rollout; constraint
/// Jacobians from forward sensitivities of each predicted state.
inline Derivatives analytic_gradients(const HorizonProblem& p, const ControlVector& u) {
  const int N = p.horizon;
  const Eigen::Index nu = 2 * N;
  std::vector<StateJacobian> A(N);
  std::vector<ControlJacobian> B(N);
  Derivatives out;
  out.states.reserve(N);
  VehicleState x = p.x0;
  for (int k = 0; k < N; ++k) {
    x = step(x, control_at(u, k), p.geometry, p.dt, &A[k], &B[k]);
    out.states.push_back(x);
  }
  out.objective = trajectory_cost(p, out.states, u);

  // Reverse sweep. adj holds dJ/dx_{k+1}.
  out.gradient = Eigen::VectorXd::Zero(nu);
  Eigen::Vector4d adj = -2.0 * p.terminal_weight.cwiseProduct(
                                   detail::tracking_error(p.reference, out.states[N - 1]));
  for (int k = N - 1; k >= 0; --k) {
    const Eigen::Vector2d uk(u(2 * k), u(2 * k + 1));
    out.gradient.segment<2>(2 * k) =
        2.0 * p.control_weights[k].cwiseProduct(uk) + B[k].transpose() * adj;
    if (k > 0) {
      const Eigen::Vector4d e = detail::tracking_error(p.reference, out.states[k - 1]);
      adj = -2.0 * p.stage_weights[k].cwiseProduct(e) + A[k].transpose() * adj;
    }
  }

  // Forward sensitivities S_k = d x_k / d u.
  out.constraints = constraint_values(p, out.states);
  out.jacobian = Eigen::MatrixXd::Zero(out.constraints.size(), nu);
  Eigen::Matrix<double, 4, Eigen::Dynamic> S = Eigen::Matrix<double, 4, Eigen::Dynamic>::Zero(4, nu);
  Eigen::Index row = 0;
  for (int k = 0; k < N; ++k) {
    S = A[k] * S;
    S.block<4, 2>(0, 2 * k) += B[k];
    for (const ObstacleEllipse& e : p.ellipses) {
      const Vec2 g = constraint_gradient(out.states[k], e);
      out.jacobian.row(row++) = g.x * S.row(0) + g.y * S.row(1);
    }
    for (int i = 0; i < 4; ++i) {
      if (std::isfinite(p.state_bounds.lower(i))) out.jacobian.row(row++) = S.row(i);
      if (std::isfinite(p.state_bounds.upper(i))) out.jacobian.row(row++) = -S.row(i);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------------------
// SQP solver.

namespace detail {

inline double violation(const Eigen::VectorXd& c) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < c.size(); ++i) v = std::max(v, -c(i));
  return v;
}

inline double l1_violation(const Eigen::VectorXd& c) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < c.size(); ++i) v += std::max(0.0, -c(i));
  return v;
}

/// Hessian of the Lagrangian by central differences of the analytic derivatives,
/// symmetrised and with eigenvalues floored so the QP stays strictly convex.
inline Eigen::MatrixXd lagrangian_hessian(const HorizonProblem& p, const ControlVector& u,
                                          const Eigen::VectorXd& lambda,
                                          const SolverOptions& opt) {
  const Eigen::Index n = u.size();
  Eigen::MatrixXd H(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    ControlVector up = u, um = u;
    up(j) += opt.hessian_step;
    um(j) -= opt.hessian_step;
    const Derivatives dp = analytic_gradients(p, up);
    const Derivatives dm = analytic_gradients(p, um);
    Eigen::VectorXd gp = dp.gradient, gm = dm.gradient;
    if (lambda.size() > 0) {
      gp -= dp.jacobian.transpose() * lambda;
      gm -= dm.jacobian.transpose() * lambda;
    }
    H.col(j) = (gp - gm) / (2.0 * opt.hessian_step);
  }
  H = 0.5 * (H + H.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H);
  Eigen::VectorXd values = eig.eigenvalues().cwiseMax(opt.eigenvalue_floor);
  return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace detail

/// Shifts a previous solution one stage forward, repeating its last control.
inline ControlVector shifted_warm_start(const HorizonSolution& prev, int horizon) {
  ControlVector u = ControlVector::Zero(2 * horizon);
  if (prev.controls.empty()) return u;
  for (int k = 0; k < horizon; ++k) {
    const std::size_t src = std::min<std::size_t>(k + 1, prev.controls.size() - 1);
    u(2 * k) = prev.controls[src].a;
    u(2 * k + 1) = prev.controls[src].delta;
  }
  return u;
}

inline HorizonSolution make_solution(const HorizonProblem& p, const ControlVector& u) {
  HorizonSolution s;
  s.states = rollout(p, u);
  for (int k = 0; k < p.horizon; ++k) s.controls.push_back(control_at(u, k));
  s.objective = trajectory_cost(p, s.states, u);
  s.max_violation = detail::violation(constraint_values(p, s.states));
  return s;
}

/// Full braking, straight steering.
inline HorizonSolution braking_fallback(const HorizonProblem& p) {
  ControlVector u(2 * p.horizon);
  for (int k = 0; k < p.horizon; ++k) {
    u(2 * k) = p.control_limits.a_min;
    u(2 * k + 1) = 0.0;
  }
  HorizonSolution s = make_solution(p, u);
  s.status = SolverStatus::infeasible_fallback;
  return s;
}

/// Sequential quadratic programming over the control sequence with an l1 merit line
/// search. `warm_start` is used as given; callers shift it beforehand.
namespace detail {

inline HorizonSolution solve_local(const HorizonProblem& p,
                                   const std::optional<ControlVector>& warm_start,
                                   const SolverOptions& opt) {
  const int N = p.horizon;
  const Eigen::Index nu = 2 * N;
  Eigen::VectorXd lb(nu), ub(nu);
  for (int k = 0; k < N; ++k) {
    lb(2 * k) = p.control_limits.a_min;
    ub(2 * k) = p.control_limits.a_max;
    lb(2 * k + 1) = p.control_limits.delta_min;
    ub(2 * k + 1) = p.control_limits.delta_max;
  }

  ControlVector u = ControlVector::Zero(nu);
  if (warm_start && warm_start->size() == nu) u = *warm_start;
  u = u.cwiseMax(lb).cwiseMin(ub);

  Derivatives cur = analytic_gradients(p, u);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(cur.constraints.size());
  double merit_weight = 10.0;
  double kkt = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;

  ControlVector best_u = u;
  double best_obj = std::numeric_limits<double>::infinity();
  double best_viol = std::numeric_limits<double>::infinity();
  auto consider_best = [&](const ControlVector& cand, double obj, double viol) {
    const bool cand_ok = viol <= opt.violation_tolerance;
    const bool best_ok = best_viol <= opt.violation_tolerance;
    if ((cand_ok && !best_ok) || (cand_ok == best_ok && (cand_ok ? obj < best_obj : viol < best_viol))) {
      best_u = cand;
      best_obj = obj;
      best_viol = viol;
    }
  };
  consider_best(u, cur.objective, detail::violation(cur.constraints));

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    iterations = iter + 1;
    ElasticQp qp;
    qp.H = detail::lagrangian_hessian(p, u, lambda, opt);
    qp.c = cur.gradient;
    qp.lower = lb - u;
    qp.upper = ub - u;
    // Rows are normalised so the elastic penalty and interior-point scaling see
    // comparable constraints; multipliers are mapped back afterwards.
    Eigen::VectorXd row_scale(cur.constraints.size());
    for (Eigen::Index i = 0; i < row_scale.size(); ++i) {
      row_scale(i) = 1.0 / std::max(cur.jacobian.row(i).norm(), 1e-8);
    }
    qp.A = row_scale.asDiagonal() * cur.jacobian;
    qp.b = -row_scale.cwiseProduct(cur.constraints);
    qp.penalty = opt.elastic_penalty;
    ElasticQpResult sub = solve_elastic_qp(qp);
    sub.lambda = sub.lambda.cwiseProduct(row_scale);
    sub.t = sub.t.cwiseQuotient(row_scale);

    // KKT residual at u with the subproblem multipliers: stationarity equals -H d, and
    // complementarity is measured against the current constraint values.
    const double viol = detail::violation(cur.constraints);
    double compl_res = 0.0;
    for (Eigen::Index i = 0; i < cur.constraints.size(); ++i) {
      compl_res = std::max(compl_res, std::abs(sub.lambda(i) * std::max(cur.constraints(i), 0.0)));
    }
    for (Eigen::Index i = 0; i < nu; ++i) {
      compl_res = std::max(compl_res, std::abs(sub.lambda_lower(i) * (u(i) - lb(i))));
      compl_res = std::max(compl_res, std::abs(sub.lambda_upper(i) * (ub(i) - u(i))));
    }
    kkt = std::max((qp.H * sub.d).lpNorm<Eigen::Infinity>(), compl_res);
    if (kkt <= opt.kkt_tolerance && viol <= opt.violation_tolerance) {
      converged = true;
      lambda = sub.lambda;
      break;
    }

    merit_weight = std::max(merit_weight, 1.5 * (sub.lambda.size() ? sub.lambda.maxCoeff() : 0.0) + 1.0);
    const double phi0 = cur.objective + merit_weight * detail::l1_violation(cur.constraints);
    const double dphi = cur.gradient.dot(sub.d) -
                        merit_weight * std::max(0.0, detail::l1_violation(cur.constraints) - sub.t.sum());

    double alpha = 1.0;
    bool accepted = false;
    Derivatives trial;
    for (int ls = 0; ls < 30; ++ls) {
      const ControlVector cand = (u + alpha * sub.d).cwiseMax(lb).cwiseMin(ub);
      trial = analytic_gradients(p, cand);
      const double phi = trial.objective + merit_weight * detail::l1_violation(trial.constraints);
      if (phi <= phi0 + 1e-4 * alpha * std::min(dphi, 0.0)) {
        u = cand;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // No merit decrease along d: stationary for the merit function up to round-off.
      lambda = sub.lambda;
      break;
    }
    cur = std::move(trial);
    lambda = sub.lambda;
    consider_best(u, cur.objective, detail::violation(cur.constraints));
  }

  HorizonSolution sol;
  if (converged) {
    sol = make_solution(p, u);
    sol.status = SolverStatus::converged;
  } else {
    if (best_viol > opt.violation_tolerance) {
      sol = braking_fallback(p);
    } else {
      sol = make_solution(p, best_u);
      sol.status = SolverStatus::max_iter;
    }
  }
  sol.kkt_residual = kkt;
  sol.iterations = iterations;
  return sol;
}

}  // namespace detail

/// Solves the horizon problem by SQP from the warm start (or zero controls). With
/// `side_starts` and at least one ellipse, two more starts steering left and right are
/// solved; the lowest-objective converged solution wins, then the warm-started one.
inline HorizonSolution solve(const HorizonProblem& p,
                             const std::optional<ControlVector>& warm_start = std::nullopt,
                             const SolverOptions& opt = {}) {
  HorizonSolution best = detail::solve_local(p, warm_start, opt);
  if (!opt.side_starts || p.ellipses.empty()) return best;
  int iterations = best.iterations;
  for (double side : {1.0, -1.0}) {
    ControlVector seed(2 * p.horizon);
    const double delta = side * opt.side_start_steer *
                         (side > 0 ? p.control_limits.delta_max : -p.control_limits.delta_min);
    for (int k = 0; k < p.horizon; ++k) {
      seed(2 * k) = 0.0;
      seed(2 * k + 1) = delta;
    }
    HorizonSolution cand = detail::solve_local(p, seed, opt);
    iterations += cand.iterations;
    const bool cand_ok = cand.status == SolverStatus::converged;
    const bool best_ok = best.status == SolverStatus::converged;
    if ((cand_ok && !best_ok) || (cand_ok && best_ok && cand.objective < best.objective - 1e-9)) {
      best = std::move(cand);
    }
  }
  best.iterations = iterations;
  return best;
}

}  // namespace overtake
