#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace overtake {

/// Convex QP with box bounds and elastic general inequalities:
///
///   min  1/2 d'Hd + c'd + penalty * sum(t)
///   s.t. lower <= d <= upper,  A d + t >= b,  t >= 0
///
/// The elastic variables t keep every instance feasible; they are zero whenever the
/// linearised constraints can be met and `penalty` exceeds the optimal multipliers.
struct ElasticQp {
  Eigen::MatrixXd H;
  Eigen::VectorXd c;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  double penalty = 1e4;
};

struct ElasticQpResult {
  Eigen::VectorXd d;
  Eigen::VectorXd t;
  Eigen::VectorXd lambda;        // multipliers of A d + t >= b
  Eigen::VectorXd lambda_lower;  // multipliers of d >= lower
  Eigen::VectorXd lambda_upper;  // multipliers of d <= upper
  int iterations = 0;
  bool converged = false;
};

/// Mehrotra predictor-corrector interior point method. Every inequality block is
/// diagonal in its own variable, so each Newton step reduces to one n x n Cholesky solve.
inline ElasticQpResult solve_elastic_qp(const ElasticQp& qp, int max_iterations = 100,
                                        double tolerance = 1e-10) {
  using Eigen::VectorXd;
  const Eigen::Index n = qp.H.rows();
  const Eigen::Index m = qp.A.rows();

  VectorXd d = VectorXd::Zero(n).cwiseMax(qp.lower).cwiseMin(qp.upper);

  VectorXd sl = (d - qp.lower).cwiseMax(1.0);
  VectorXd su = (qp.upper - d).cwiseMax(1.0);
  VectorXd t = (qp.b - qp.A * d).cwiseMax(0.0).array() + 1.0;
  VectorXd sg = (qp.A * d + t - qp.b).cwiseMax(1.0);
  VectorXd ll = VectorXd::Ones(n), lu = VectorXd::Ones(n);
  VectorXd lg = VectorXd::Constant(m, std::min(1.0, 0.5 * qp.penalty));
  VectorXd lt = VectorXd::Constant(m, qp.penalty) - lg;

  const double scale = 1.0 + std::max({qp.H.cwiseAbs().maxCoeff(), qp.c.cwiseAbs().maxCoeff(),
                                       m > 0 ? qp.b.cwiseAbs().maxCoeff() : 0.0});
  const double count = static_cast<double>(2 * n + 2 * m);

  ElasticQpResult out;
  Eigen::LDLT<Eigen::MatrixXd> ldlt;

  auto max_step = [](const VectorXd& v, const VectorXd& dv) {
    double alpha = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (dv(i) < 0.0) alpha = std::min(alpha, -v(i) / dv(i));
    }
    return alpha;
  };

  // Primal-dual residuals reach a round-off floor well before complementarity does, so
  // complementarity gets its own tighter target and the best iterate seen is returned.
  const double mu_tolerance = 1e-4 * tolerance * scale;
  struct Iterate {
    VectorXd d, t, ll, lu, lg;
  };
  Iterate best{d, t, ll, lu, lg};
  double best_merit = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < max_iterations; ++iter) {
    out.iterations = iter + 1;
    const VectorXd rd = qp.H * d + qp.c - ll + lu - qp.A.transpose() * lg;
    const VectorXd rt = VectorXd::Constant(m, qp.penalty) - lg - lt;
    const VectorXd rl = sl - (d - qp.lower);
    const VectorXd ru = su - (qp.upper - d);
    const VectorXd rg = sg - (qp.A * d + t - qp.b);
    const double mu =
        (sl.dot(ll) + su.dot(lu) + sg.dot(lg) + t.dot(lt)) / std::max(count, 1.0);

    const double res = std::max({rd.lpNorm<Eigen::Infinity>(),
                                 m > 0 ? rt.lpNorm<Eigen::Infinity>() : 0.0,
                                 rl.lpNorm<Eigen::Infinity>(), ru.lpNorm<Eigen::Infinity>(),
                                 m > 0 ? rg.lpNorm<Eigen::Infinity>() : 0.0});
    const double merit = std::max(res / (tolerance * scale), mu / mu_tolerance);
    if (merit < best_merit) {
      best_merit = merit;
      best = {d, t, ll, lu, lg};
    }
    if (merit <= 1.0) {
      out.converged = true;
      break;
    }
    if (merit > 1e3 * best_merit) break;

    const VectorXd wl = ll.cwiseQuotient(sl);
    const VectorXd wu = lu.cwiseQuotient(su);
    const VectorXd wg = lg.cwiseQuotient(sg);
    const VectorXd wt = lt.cwiseQuotient(t);
    const VectorXd dd = wg + wt;
    const VectorXd e = wg.cwiseProduct(wt).cwiseQuotient(dd);

    Eigen::MatrixXd K = qp.H;
    K.diagonal() += wl + wu;
    if (m > 0) K.noalias() += qp.A.transpose() * e.asDiagonal() * qp.A;
    ldlt.compute(K);

    // Solves the reduced Newton system for given complementarity targets.
    struct Step {
      VectorXd d, t, sl, su, sg, ll, lu, lg, lt;
    };
    auto newton = [&](const VectorXd& cl, const VectorXd& cu, const VectorXd& cg,
                      const VectorXd& ct) {
      Step s;
      const VectorXd qt = -cg.cwiseQuotient(sg) + wg.cwiseProduct(rg) - ct.cwiseQuotient(t) - rt;
      const VectorXd pg = -cg.cwiseQuotient(sg) + wg.cwiseProduct(rg) -
                          wg.cwiseProduct(qt).cwiseQuotient(dd);
      VectorXd rhs = -rd - cl.cwiseQuotient(sl) + wl.cwiseProduct(rl) + cu.cwiseQuotient(su) -
                     wu.cwiseProduct(ru);
      if (m > 0) rhs += qp.A.transpose() * pg;
      s.d = ldlt.solve(rhs);
      const VectorXd ad = qp.A * s.d;
      s.t = (qt - wg.cwiseProduct(ad)).cwiseQuotient(dd);
      s.lg = pg - e.cwiseProduct(ad);
      s.lt = -ct.cwiseQuotient(t) - wt.cwiseProduct(s.t);
      s.sl = s.d - rl;
      s.su = -s.d - ru;
      s.sg = ad + s.t - rg;
      s.ll = -cl.cwiseQuotient(sl) - wl.cwiseProduct(s.sl);
      s.lu = -cu.cwiseQuotient(su) - wu.cwiseProduct(s.su);
      return s;
    };
    auto step_length = [&](const Step& s) {
      return std::min({max_step(sl, s.sl), max_step(su, s.su), max_step(sg, s.sg),
                       max_step(t, s.t), max_step(ll, s.ll), max_step(lu, s.lu),
                       max_step(lg, s.lg), max_step(lt, s.lt)});
    };

    const Step aff = newton(sl.cwiseProduct(ll), su.cwiseProduct(lu), sg.cwiseProduct(lg),
                            t.cwiseProduct(lt));
    const double a_aff = step_length(aff);
    const double mu_aff = ((sl + a_aff * aff.sl).dot(ll + a_aff * aff.ll) +
                           (su + a_aff * aff.su).dot(lu + a_aff * aff.lu) +
                           (sg + a_aff * aff.sg).dot(lg + a_aff * aff.lg) +
                           (t + a_aff * aff.t).dot(lt + a_aff * aff.lt)) /
                          std::max(count, 1.0);
    double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);
    if (a_aff < 0.1) sigma = std::max(sigma, 0.5);
    const double target = sigma * mu;

    Step cor = newton(
        (sl.cwiseProduct(ll) + aff.sl.cwiseProduct(aff.ll)).array() - target,
        (su.cwiseProduct(lu) + aff.su.cwiseProduct(aff.lu)).array() - target,
        (sg.cwiseProduct(lg) + aff.sg.cwiseProduct(aff.lg)).array() - target,
        (t.cwiseProduct(lt) + aff.t.cwiseProduct(aff.lt)).array() - target);
    double alpha = std::min(1.0, 0.995 * step_length(cor));
    const auto mu_after = [&](const Step& s, double a) {
      return ((sl + a * s.sl).dot(ll + a * s.ll) + (su + a * s.su).dot(lu + a * s.lu) +
              (sg + a * s.sg).dot(lg + a * s.lg) + (t + a * s.t).dot(lt + a * s.lt)) /
             std::max(count, 1.0);
    };
    // Off the central path the second-order term can make complementarity grow and the
    // iteration cycle; a plain centring step restores progress.
    if (mu_after(cor, alpha) > (1.0 - 0.1 * alpha) * mu) {
      const double centre = std::max(sigma, 0.3) * mu;
      cor = newton(sl.cwiseProduct(ll).array() - centre, su.cwiseProduct(lu).array() - centre,
                   sg.cwiseProduct(lg).array() - centre, t.cwiseProduct(lt).array() - centre);
      alpha = std::min(1.0, 0.995 * step_length(cor));
    }

    // Past round-off the Newton system degenerates; keep the last sound iterate.
    const auto sound = [&](const VectorXd& v, const VectorXd& dv) {
      return (v + alpha * dv).allFinite() && (v + alpha * dv).minCoeff() > 0.0;
    };
    if (!(alpha > 0.0) || !(d + alpha * cor.d).allFinite() || !sound(sl, cor.sl) ||
        !sound(su, cor.su) || !sound(ll, cor.ll) || !sound(lu, cor.lu) ||
        (m > 0 && (!sound(sg, cor.sg) || !sound(t, cor.t) || !sound(lg, cor.lg) ||
                   !sound(lt, cor.lt)))) {
      break;
    }

    d += alpha * cor.d;
    t += alpha * cor.t;
    sl += alpha * cor.sl;
    su += alpha * cor.su;
    sg += alpha * cor.sg;
    ll += alpha * cor.ll;
    lu += alpha * cor.lu;
    lg += alpha * cor.lg;
    lt += alpha * cor.lt;
  }

  out.d = best.d;
  out.t = best.t;
  out.lambda = best.lg;
  out.lambda_lower = best.ll;
  out.lambda_upper = best.lu;
  return out;
}

}  // namespace overtake
