#pragma once

/**
 * @file
 * @brief Direct single-shooting lane-keeping optimizer with tightened lane
 * constraints.
 *
 * Decision variables are steer increments dd_k, boxed by |dd_k| <= ddelta_max dt.
 * Steer is accumulated from the previously applied steer and clamped to
 * +-delta_max, so both steering constraints hold for every iterate. The lane
 * slack has a closed-form minimiser and is substituted into the cost:
 *
 *   S_k = max(0, |n_k| - (lane_half_width - eps_k)).
 *
 * The cost is a sum of squared residuals, minimised by Gauss-Newton: each
 * step solves the box-constrained quadratic model exactly (primal active
 * set), then an Armijo search runs along that feasible direction.
 */

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mact/dual.hpp"
#include "mact/integrator.hpp"
#include "mact/mismatch.hpp"
#include "mact/reference_path.hpp"
#include "mact/tightening.hpp"
#include "mact/vehicle_models.hpp"

namespace mact {

struct CostWeights {
  double lateral{10.0};     ///< w_n
  double heading{1.0};      ///< w_psi
  double steer{0.1};        ///< w_u
  double steer_rate{1.0};   ///< w_du
  double slack{1000.0};     ///< w_S
};

/// Where the curvature fed to the tightening comes from.
enum class CurvatureSource {
  rollout,    ///< kinematic-equivalent tan(delta_k) / L of the planned steer
  reference,  ///< the scenario's reference curvature
};

struct ShootingProblem {
  int horizon{20};
  double dt{0.05};
  int substeps{2};  ///< RK4 sub-steps per shooting interval
  double speed{15.0};
  double kappa_ref{0.0};
  CostWeights weights;
  double delta_max{0.35};
  double ddelta_max{1.5};
  double lane_half_width{0.16};
  TighteningPolicy policy;
  AdaptiveEstimatorState estimator;
  CurvatureSource curvature_source{CurvatureSource::rollout};
  ModelKind model{ModelKind::dynamic};
  DynState initial;
  double previous_steer{0.0};
  VehicleParams vehicle;

  double max_increment() const { return ddelta_max * dt; }

  void validate() const {
    if (horizon < 1) throw std::invalid_argument("ShootingProblem: horizon must be >= 1");
    if (!(dt > 0.0)) throw std::invalid_argument("ShootingProblem: dt must be positive");
    if (substeps < 1) throw std::invalid_argument("ShootingProblem: substeps must be >= 1");
    if (!(delta_max > 0.0)) throw std::invalid_argument("ShootingProblem: delta_max must be positive");
    if (!(ddelta_max > 0.0)) throw std::invalid_argument("ShootingProblem: ddelta_max must be positive");
    if (model == ModelKind::dynamic && !(speed > 0.0)) {
      throw std::invalid_argument("ShootingProblem: dynamic rollout needs positive speed");
    }
    const auto& w = weights;
    if (w.lateral < 0 || w.heading < 0 || w.steer < 0 || w.steer_rate < 0 || w.slack < 0) {
      throw std::invalid_argument("ShootingProblem: weights must be non-negative");
    }
    vehicle.validate();
  }
};

/// Relative cost tolerance for steps whose predicted decrease is below rounding.
inline constexpr double kRoundingAllowance = 100.0 * std::numeric_limits<double>::epsilon();

struct SolverOptions {
  double tolerance{1e-6};  ///< projected-gradient norm
  int max_iterations{100};
};

struct Rollout {
  std::vector<DynState> states;        ///< N+1, states[0] = initial
  std::vector<double> lateral;         ///< N+1 cross-track n_k
  std::vector<double> heading_error;   ///< N+1
  std::vector<double> kappa;           ///< N, curvature read by the tightening at step k
  std::vector<double> epsilon;         ///< N, margin on states[k+1]
  std::vector<double> slack;           ///< N, S on states[k+1]
};

struct ShootingSolution {
  std::vector<double> steer;       ///< delta_0 .. delta_{N-1}
  std::vector<double> increments;  ///< decision variables
  Rollout rollout;
  double cost{0.0};
  int iterations{0};
  bool converged{false};
  double projected_gradient_norm{0.0};
  std::vector<double> cost_history;  ///< cost of every accepted iterate, starting point first
};

namespace detail {

template <typename Scalar, typename SteerScalar>
DynStateT<Scalar> model_derivative(ModelKind kind, const DynStateT<Scalar>& s, double v, const SteerScalar& delta,
                                   const VehicleParams& p) {
  if (kind == ModelKind::dynamic) return dyn_derivative(s, v, delta, p);
  const auto k = kin_derivative(KinStateT<Scalar>{s.x, s.y, s.psi}, v, delta, p);
  return {k.x, k.y, k.psi, Scalar(0.0), Scalar(0.0)};
}

inline DynState advance(const ShootingProblem& pb, DynState s, double delta) {
  const double h = pb.dt / pb.substeps;
  for (int i = 0; i < pb.substeps; ++i) {
    s = rk4_step(s, [&](const DynState& q) { return model_derivative(pb.model, q, pb.speed, delta, pb.vehicle); }, h);
  }
  return s;
}

struct StepJacobian {
  DynState next;
  Eigen::Matrix<double, 5, 5> A;
  Eigen::Matrix<double, 5, 1> B;
};

inline StepJacobian advance_with_jacobian(const ShootingProblem& pb, const DynState& s0, double delta) {
  using D = Dual<6>;
  DynStateT<D> s{D::variable(s0.x, 0), D::variable(s0.y, 1), D::variable(s0.psi, 2), D::variable(s0.v_y, 3),
                 D::variable(s0.r, 4)};
  const D d = D::variable(delta, 5);
  const double h = pb.dt / pb.substeps;
  for (int i = 0; i < pb.substeps; ++i) {
    s = rk4_step(s, [&](const DynStateT<D>& q) { return model_derivative(pb.model, q, pb.speed, d, pb.vehicle); }, h);
  }
  StepJacobian out;
  int row = 0;
  for (auto m : DynStateT<D>::fields()) {
    const D& c = s.*m;
    for (int j = 0; j < 5; ++j) out.A(row, j) = c.d[static_cast<std::size_t>(j)];
    out.B(row) = c.d[5];
    ++row;
  }
  out.next = DynState{s.x.v, s.y.v, s.psi.v, s.v_y.v, s.r.v};
  return out;
}

inline double step_curvature(const ShootingProblem& pb, double delta) {
  return pb.curvature_source == CurvatureSource::rollout ? std::tan(delta) / pb.vehicle.wheelbase() : pb.kappa_ref;
}

constexpr int kResidualsPerStep = 5;

}  // namespace detail

/// Steer sequence from increments: accumulate from previous_steer, clamp to +-delta_max.
inline std::vector<double> steer_from_increments(const ShootingProblem& pb, std::span<const double> increments) {
  std::vector<double> steer(increments.size());
  double prev = pb.previous_steer;
  for (std::size_t k = 0; k < increments.size(); ++k) {
    prev = std::clamp(prev + increments[k], -pb.delta_max, pb.delta_max);
    steer[k] = prev;
  }
  return steer;
}

/**
 * @brief Roll the planner model forward under `steer` and evaluate the
 * per-step path errors, tightening margins and slacks.
 */
inline Rollout rollout(const ShootingProblem& pb, std::span<const double> steer) {
  if (static_cast<int>(steer.size()) != pb.horizon) throw std::invalid_argument("rollout: steer length != horizon");
  Rollout ro;
  const std::size_t n = steer.size();
  ro.states.reserve(n + 1);
  ro.states.push_back(pb.initial);
  auto record = [&](const DynState& s) {
    const auto e = path_error(s.x, s.y, s.psi, pb.kappa_ref);
    ro.lateral.push_back(e.lateral);
    ro.heading_error.push_back(e.heading);
  };
  record(pb.initial);
  for (std::size_t k = 0; k < n; ++k) {
    const DynState next = detail::advance(pb, ro.states.back(), steer[k]);
    if (!all_finite(next)) throw SimulationError("rollout: non-finite state", static_cast<long>(k + 1));
    ro.states.push_back(next);
    record(next);
    const double kappa = detail::step_curvature(pb, steer[k]);
    const double eps = epsilon(pb.policy, pb.speed, kappa, &pb.estimator);
    ro.kappa.push_back(kappa);
    ro.epsilon.push_back(eps);
    ro.slack.push_back(std::max(0.0, std::abs(ro.lateral.back()) - (pb.lane_half_width - eps)));
  }
  return ro;
}

struct CostEvaluation {
  double cost{0.0};
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;  ///< d residuals / d steer (empty unless requested)
  Rollout rollout;
};

/**
 * @brief Residual vector (and optionally its steer Jacobian) of the
 * reduced lane-keeping cost; cost = ||residuals||^2.
 */
inline CostEvaluation evaluate(const ShootingProblem& pb, std::span<const double> steer, bool with_jacobian) {
  const int n = pb.horizon;
  if (static_cast<int>(steer.size()) != n) throw std::invalid_argument("evaluate: steer length != horizon");
  const auto& w = pb.weights;
  const double sw_n = std::sqrt(w.lateral);
  const double sw_psi = std::sqrt(w.heading);
  const double sw_s = std::sqrt(w.slack);
  const double sw_u = std::sqrt(w.steer);
  const double sw_du = std::sqrt(w.steer_rate);

  CostEvaluation ev;
  ev.residuals.resize(detail::kResidualsPerStep * n);
  if (with_jacobian) ev.jacobian = Eigen::MatrixXd::Zero(detail::kResidualsPerStep * n, n);

  Rollout& ro = ev.rollout;
  ro.states.reserve(static_cast<std::size_t>(n) + 1);
  ro.states.push_back(pb.initial);
  {
    const auto e0 = path_error(pb.initial.x, pb.initial.y, pb.initial.psi, pb.kappa_ref);
    ro.lateral.push_back(e0.lateral);
    ro.heading_error.push_back(e0.heading);
  }
  Eigen::Matrix<double, 5, Eigen::Dynamic> sens;  // d state_k / d steer
  if (with_jacobian) sens = Eigen::Matrix<double, 5, Eigen::Dynamic>::Zero(5, n);

  for (int k = 0; k < n; ++k) {
    const double delta = steer[static_cast<std::size_t>(k)];
    DynState next;
    if (with_jacobian) {
      const auto sj = detail::advance_with_jacobian(pb, ro.states.back(), delta);
      next = sj.next;
      sens = sj.A * sens;
      sens.col(k) += sj.B;
    } else {
      next = detail::advance(pb, ro.states.back(), delta);
    }
    if (!all_finite(next)) throw SimulationError("evaluate: non-finite state", static_cast<long>(k + 1));
    ro.states.push_back(next);

    using D3 = Dual<3>;
    const auto pe = path_error(D3::variable(next.x, 0), D3::variable(next.y, 1), D3::variable(next.psi, 2),
                               pb.kappa_ref);
    ro.lateral.push_back(pe.lateral.v);
    ro.heading_error.push_back(pe.heading.v);

    const double kappa = detail::step_curvature(pb, delta);
    const double eps = epsilon(pb.policy, pb.speed, kappa, &pb.estimator);
    const double bound = pb.lane_half_width - eps;
    const double n_k = pe.lateral.v;
    const double slack = std::max(0.0, std::abs(n_k) - bound);
    ro.kappa.push_back(kappa);
    ro.epsilon.push_back(eps);
    ro.slack.push_back(slack);

    const double prev = k == 0 ? pb.previous_steer : steer[static_cast<std::size_t>(k - 1)];
    const int base = detail::kResidualsPerStep * k;
    ev.residuals(base + 0) = sw_n * n_k;
    ev.residuals(base + 1) = sw_psi * pe.heading.v;
    ev.residuals(base + 2) = sw_s * slack;
    ev.residuals(base + 3) = sw_u * delta;
    ev.residuals(base + 4) = sw_du * (delta - prev);

    if (with_jacobian) {
      Eigen::RowVector3d grad_n(pe.lateral.d[0], pe.lateral.d[1], pe.lateral.d[2]);
      Eigen::RowVector3d grad_e(pe.heading.d[0], pe.heading.d[1], pe.heading.d[2]);
      const Eigen::RowVectorXd dn = grad_n * sens.topRows<3>();
      ev.jacobian.row(base + 0) = sw_n * dn;
      ev.jacobian.row(base + 1) = sw_psi * (grad_e * sens.topRows<3>());
      if (slack > 0.0) {
        const double sign_n = n_k >= 0.0 ? 1.0 : -1.0;
        ev.jacobian.row(base + 2) = sw_s * sign_n * dn;
        if (pb.curvature_source == CurvatureSource::rollout) {
          const double t = std::tan(delta);
          const double dkappa = (1.0 + t * t) / pb.vehicle.wheelbase();
          ev.jacobian(base + 2, k) += sw_s * epsilon_kappa_slope(pb.policy, pb.speed, kappa, &pb.estimator) * dkappa;
        }
      }
      ev.jacobian(base + 3, k) = sw_u;
      ev.jacobian(base + 4, k) = sw_du;
      if (k > 0) ev.jacobian(base + 4, k - 1) = -sw_du;
    }
  }
  ev.cost = ev.residuals.squaredNorm();
  return ev;
}

/// Cost of a steer sequence.
inline double cost(const ShootingProblem& pb, std::span<const double> steer) {
  return evaluate(pb, steer, false).cost;
}

/// Gradient of cost() with respect to the steer sequence.
inline Eigen::VectorXd cost_gradient(const ShootingProblem& pb, std::span<const double> steer) {
  const auto ev = evaluate(pb, steer, true);
  return 2.0 * ev.jacobian.transpose() * ev.residuals;
}

namespace detail {

/// d steer / d increments for the accumulate-and-clamp map.
inline Eigen::MatrixXd steer_map_jacobian(const ShootingProblem& pb, std::span<const double> increments) {
  const int n = static_cast<int>(increments.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  double prev = pb.previous_steer;
  for (int k = 0; k < n; ++k) {
    const double raw = prev + increments[static_cast<std::size_t>(k)];
    const bool saturated = raw > pb.delta_max || raw < -pb.delta_max;
    if (!saturated) {
      if (k > 0) d.row(k) = d.row(k - 1);
      d(k, k) = 1.0;
    }
    prev = std::clamp(raw, -pb.delta_max, pb.delta_max);
  }
  return d;
}

inline Eigen::VectorXd project(const Eigen::VectorXd& z, double bound) {
  return z.cwiseMax(-bound).cwiseMin(bound);
}

/**
 * @brief min g'd + d'Hd/2 subject to lo <= d <= hi, with H positive definite
 * and lo <= 0 <= hi. Primal active-set method started from d = 0.
 */
inline Eigen::VectorXd box_qp(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                              const Eigen::VectorXd& hi) {
  const auto n = static_cast<int>(g.size());
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
  std::vector<int> state(static_cast<std::size_t>(n), 0);  // -1 at lo, +1 at hi, 0 free
  for (int i = 0; i < n; ++i) {
    if (lo(i) >= 0.0 && g(i) > 0.0) state[static_cast<std::size_t>(i)] = -1;
    if (hi(i) <= 0.0 && g(i) < 0.0) state[static_cast<std::size_t>(i)] = 1;
  }
  for (int iter = 0; iter < 4 * n + 8; ++iter) {
    std::vector<int> free_idx;
    Eigen::VectorXd target = d;
    for (int i = 0; i < n; ++i) {
      const int st = state[static_cast<std::size_t>(i)];
      if (st == 0) free_idx.push_back(i);
      else target(i) = st < 0 ? lo(i) : hi(i);
    }
    if (!free_idx.empty()) {
      const int nf = static_cast<int>(free_idx.size());
      Eigen::VectorXd fixed = target;
      for (int i : free_idx) fixed(i) = 0.0;
      const Eigen::VectorXd rhs_all = -(g + h * fixed);
      Eigen::MatrixXd hf(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (int a = 0; a < nf; ++a) {
        rhs(a) = rhs_all(free_idx[a]);
        for (int b = 0; b < nf; ++b) hf(a, b) = h(free_idx[a], free_idx[b]);
      }
      const Eigen::VectorXd x = hf.ldlt().solve(rhs);
      for (int a = 0; a < nf; ++a) target(free_idx[a]) = x(a);
    }

    // Longest feasible fraction of the step towards the subspace minimiser.
    double alpha = 1.0;
    int blocking = -1;
    for (int i : free_idx) {
      const double p = target(i) - d(i);
      if (p > 0.0 && d(i) + p > hi(i)) {
        const double a = (hi(i) - d(i)) / p;
        if (a < alpha) alpha = a, blocking = i;
      } else if (p < 0.0 && d(i) + p < lo(i)) {
        const double a = (lo(i) - d(i)) / p;
        if (a < alpha) alpha = a, blocking = i;
      }
    }
    if (blocking >= 0) {
      d += alpha * (target - d);
      const bool upper = target(blocking) > d(blocking);
      d(blocking) = upper ? hi(blocking) : lo(blocking);
      state[static_cast<std::size_t>(blocking)] = upper ? 1 : -1;
      continue;
    }
    d = target;

    // Release the bound whose multiplier has the wrong sign, if any.
    const Eigen::VectorXd grad_q = g + h * d;
    int release = -1;
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      const int st = state[static_cast<std::size_t>(i)];
      const double violation = st < 0 ? -grad_q(i) : st > 0 ? grad_q(i) : 0.0;
      if (violation > worst) worst = violation, release = i;
    }
    if (release < 0) break;
    state[static_cast<std::size_t>(release)] = 0;
  }
  return d.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace detail

/// Warm start for the next control period: drop the first increment, repeat a zero at the end.
inline std::vector<double> shift_warm_start(std::span<const double> increments) {
  std::vector<double> out(increments.size(), 0.0);
  for (std::size_t k = 1; k < increments.size(); ++k) out[k - 1] = increments[k];
  return out;
}

/**
 * @brief Minimise the reduced lane-keeping cost over steer increments.
 *
 * Stops when the projected-gradient norm falls below options.tolerance or
 * after options.max_iterations accepted steps; the best (last accepted)
 * iterate is returned either way with `converged` set accordingly.
 */
inline ShootingSolution solve(const ShootingProblem& pb, std::span<const double> warm_start = {},
                              const SolverOptions& options = {}) {
  pb.validate();
  const int n = pb.horizon;
  const double bound = pb.max_increment();
  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  if (!warm_start.empty()) {
    if (static_cast<int>(warm_start.size()) != n) throw std::invalid_argument("solve: warm start length != horizon");
    for (int i = 0; i < n; ++i) z(i) = warm_start[static_cast<std::size_t>(i)];
    z = detail::project(z, bound);
  }
  auto as_span = [](const Eigen::VectorXd& v) { return std::span<const double>(v.data(), static_cast<std::size_t>(v.size())); };

  struct Point {
    Eigen::VectorXd z;
    std::vector<double> steer;
    CostEvaluation ev;
    Eigen::VectorXd grad;
    Eigen::MatrixXd jz;
  };
  auto linearise = [&](const Eigen::VectorXd& zz) {
    Point p;
    p.z = zz;
    p.steer = steer_from_increments(pb, as_span(zz));
    p.ev = evaluate(pb, p.steer, true);
    // The dual-number pass can differ from the plain pass in the last bits;
    // line-search comparisons must all use the same evaluation.
    p.ev.cost = cost(pb, p.steer);
    p.jz = p.ev.jacobian * detail::steer_map_jacobian(pb, as_span(zz));
    p.grad = 2.0 * p.jz.transpose() * p.ev.residuals;
    return p;
  };
  auto pg_norm = [&](const Point& p) { return (p.z - detail::project(p.z - p.grad, bound)).norm(); };

  ShootingSolution sol;
  Point cur = linearise(z);
  sol.cost_history.push_back(cur.ev.cost);
  double pg = pg_norm(cur);
  int iter = 0;
  while (pg >= options.tolerance && iter < options.max_iterations) {
    Eigen::MatrixXd h = 2.0 * cur.jz.transpose() * cur.jz;
    const double mu = 1e-10 * std::max(1.0, h.trace() / n);
    h.diagonal().array() += mu;
    const Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -bound) - cur.z;
    const Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, bound) - cur.z;
    Eigen::VectorXd dir = detail::box_qp(h, cur.grad, lo.cwiseMin(0.0), hi.cwiseMax(0.0));
    if (!(cur.grad.dot(dir) < 0.0) || !dir.allFinite()) dir = -cur.grad / std::max(h.diagonal().maxCoeff(), 1e-12);

    // Armijo search; the direction is feasible, projection only removes rounding.
    bool accepted = false;
    std::optional<Point> rounding_step;
    double step = 1.0;
    Eigen::VectorXd trial;
    double trial_cost = 0.0;
    for (int ls = 0; ls < 40; ++ls) {
      trial = detail::project(cur.z + step * dir, bound);
      try {
        trial_cost = cost(pb, steer_from_increments(pb, as_span(trial)));
      } catch (const SimulationError&) {
        trial_cost = std::numeric_limits<double>::infinity();
      }
      const double predicted = cur.grad.dot(trial - cur.z);

      if (trial_cost <= cur.ev.cost + 1e-4 * predicted) {
        accepted = true;
        break;
      }
      // Predicted decrease below cost rounding: sufficient decrease cannot
      // be verified, so accept a step that shrinks the projected gradient
      // and stays within the rounding allowance.
      if (ls == 0 && -predicted < kRoundingAllowance * std::abs(cur.ev.cost) &&
          trial_cost <= cur.ev.cost + kRoundingAllowance * std::abs(cur.ev.cost)) {
        Point cand = linearise(trial);
        if (pg_norm(cand) < pg) {
          rounding_step = std::move(cand);
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!accepted) break;
    cur = rounding_step ? std::move(*rounding_step) : linearise(trial);
    ++iter;
    sol.cost_history.push_back(cur.ev.cost);
    pg = pg_norm(cur);
  }

  sol.increments.assign(cur.z.data(), cur.z.data() + n);
  sol.steer = cur.steer;
  sol.cost = cur.ev.cost;
  sol.rollout = std::move(cur.ev.rollout);
  sol.iterations = iter;
  sol.projected_gradient_norm = pg;
  sol.converged = pg < options.tolerance;
  return sol;
}

}  // namespace mact
