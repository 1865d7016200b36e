#pragma once

/**
 * @file
 * @brief Receding-horizon lane keeping: one MPC step and a closed-loop run
 * against the dynamic plant with zero-order-hold steering.
 */

#include <chrono>
#include <cmath>
#include <cstddef>
#include <vector>

#include "mact/errors.hpp"
#include "mact/integrator.hpp"
#include "mact/reference_path.hpp"
#include "mact/shooting.hpp"
#include "mact/tightening.hpp"
#include "mact/vehicle_models.hpp"

namespace mact {

struct ControllerState {
  std::vector<double> warm_increments;  ///< empty before the first solve
  double last_steer{0.0};
  AdaptiveEstimatorState estimator;
  double time{0.0};  ///< time of the next control update [s]
};

struct MpcStep {
  double steer{0.0};
  double epsilon{0.0};  ///< margin applied in this solve
  double solve_ms{0.0};
  ShootingSolution solution;
  ControllerState next;
};

/**
 * @brief Solve from the current plant state and return the steer to hold for
 * one control period (template.dt).
 *
 * The adaptive estimator sees the plant cross-track at every update after the
 * first, so its elapsed time equals the time since scenario start.
 */
inline MpcStep mpc_step(const ControllerState& ctrl, const DynState& plant, const ShootingProblem& tmpl,
                        const TighteningPolicy& policy, const SolverOptions& options = {}) {
  if (!all_finite(plant)) throw SimulationError("mpc_step: non-finite plant state", -1);
  MpcStep out;
  out.next = ctrl;
  ControllerState& nx = out.next;
  if (policy.kind == PolicyKind::adaptive && ctrl.time > 0.0) {
    const double n = cross_track(plant.x, plant.y, tmpl.kappa_ref);
    nx.estimator = adaptive_update(nx.estimator, policy, n, tmpl.speed, tmpl.kappa_ref, tmpl.dt);
  }

  ShootingProblem pb = tmpl;
  pb.policy = policy;
  pb.estimator = nx.estimator;
  pb.initial = plant;
  pb.previous_steer = ctrl.last_steer;

  const auto t0 = std::chrono::steady_clock::now();
  out.solution = solve(pb, ctrl.warm_increments, options);
  const auto t1 = std::chrono::steady_clock::now();
  out.solve_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

  out.steer = out.solution.steer.front();
  out.epsilon = out.solution.rollout.epsilon.front();
  nx.warm_increments = shift_warm_start(out.solution.increments);
  nx.last_steer = out.steer;
  nx.time = ctrl.time + tmpl.dt;
  return out;
}

struct ClosedLoopScenario {
  double speed{15.0};
  double kappa{0.012};
  double entry_offset{-0.08};  ///< initial world y [m]
  double duration{3.0};
  double plant_dt{0.005};
};

struct ClosedLoopTrace {
  PolicyKind policy{PolicyKind::none};
  double speed{0.0};
  double kappa{0.0};
  // One entry per control update.
  std::vector<double> control_time;
  std::vector<double> steer;
  std::vector<double> epsilon;
  std::vector<double> a2_hat;
  std::vector<double> solve_ms;
  std::vector<int> iterations;
  std::vector<char> converged;
  // One entry per plant sample, t = 0 included.
  std::vector<double> plant_time;
  std::vector<double> crosstrack;

  double peak_abs_crosstrack() const {
    double m = 0.0;
    for (double n : crosstrack) m = std::max(m, std::abs(n));
    return m;
  }
  /// Largest outward (positive) cross-track at or after `t_from`.
  double peak_outward_after(double t_from) const {
    double m = 0.0;
    for (std::size_t i = 0; i < crosstrack.size(); ++i) {
      if (plant_time[i] >= t_from - 1e-12) m = std::max(m, crosstrack[i]);
    }
    return m;
  }
  double mean_epsilon() const {
    if (epsilon.empty()) return 0.0;
    double s = 0.0;
    for (double e : epsilon) s += e;
    return s / static_cast<double>(epsilon.size());
  }
  double max_epsilon() const {
    double m = 0.0;
    for (double e : epsilon) m = std::max(m, e);
    return m;
  }
  double max_solve_ms() const {
    double m = 0.0;
    for (double e : solve_ms) m = std::max(m, e);
    return m;
  }
};

/**
 * @brief Run the MPC against the dynamic plant (RK4 at plant_dt, steer held
 * between updates). Throws SimulationError when the plant leaves the road
 * by more than `divergence_limit` metres.
 */
inline ClosedLoopTrace run_closed_loop(const ClosedLoopScenario& sc, const ShootingProblem& tmpl,
                                       const TighteningPolicy& policy, const SolverOptions& options = {},
                                       double divergence_limit = 2.0) {
  if (!(sc.plant_dt > 0.0) || !(sc.duration > 0.0)) throw std::invalid_argument("run_closed_loop: bad timing");
  const auto sub = static_cast<long>(std::lround(tmpl.dt / sc.plant_dt));
  if (sub < 1 || std::abs(static_cast<double>(sub) * sc.plant_dt - tmpl.dt) > 1e-12) {
    throw std::invalid_argument("run_closed_loop: control period must be a multiple of plant_dt");
  }
  const auto updates = static_cast<long>(std::lround(sc.duration / tmpl.dt));

  ShootingProblem pb = tmpl;
  pb.speed = sc.speed;
  pb.kappa_ref = sc.kappa;

  ClosedLoopTrace tr;
  tr.policy = policy.kind;
  tr.speed = sc.speed;
  tr.kappa = sc.kappa;
  DynState plant{0.0, sc.entry_offset, 0.0, 0.0, 0.0};
  tr.plant_time.push_back(0.0);
  tr.crosstrack.push_back(cross_track(plant.x, plant.y, sc.kappa));

  ControllerState ctrl;
  long plant_step = 0;
  for (long u = 0; u < updates; ++u) {
    const MpcStep st = mpc_step(ctrl, plant, pb, policy, options);
    tr.control_time.push_back(ctrl.time);
    tr.steer.push_back(st.steer);
    tr.epsilon.push_back(st.epsilon);
    tr.a2_hat.push_back(st.next.estimator.a2_hat);
    tr.solve_ms.push_back(st.solve_ms);
    tr.iterations.push_back(st.solution.iterations);
    tr.converged.push_back(st.solution.converged ? 1 : 0);
    ctrl = st.next;
    for (long j = 0; j < sub; ++j) {
      plant = rk4_step(plant, [&](const DynState& q) { return dyn_derivative(q, sc.speed, st.steer, pb.vehicle); },
                       sc.plant_dt);
      ++plant_step;
      const double n = cross_track(plant.x, plant.y, sc.kappa);
      if (!all_finite(plant) || std::abs(n) > divergence_limit) {
        throw SimulationError("run_closed_loop: plant diverged", plant_step);
      }
      tr.plant_time.push_back(static_cast<double>(plant_step) * sc.plant_dt);
      tr.crosstrack.push_back(n);
    }
  }
  return tr;
}

}  // namespace mact
