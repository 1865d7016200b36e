#pragma once

/**
 * @file
 * @brief Classical fixed-step RK4 and trajectory simulation.
 */

#include <cmath>
#include <functional>
#include <vector>

#include "mact/errors.hpp"
#include "mact/vehicle_models.hpp"

namespace mact {

template <typename State>
State add_scaled(State s, double a, const State& k) {
  for (auto m : State::fields()) s.*m += a * k.*m;
  return s;
}

/// One classical RK4 step. `f` maps a state to its time derivative.
template <typename State, typename Deriv>
State rk4_step(const State& s, Deriv&& f, double dt) {
  if (!(dt > 0.0)) throw ModelDomainError("rk4_step: dt must be positive");
  const State k1 = f(s);
  const State k2 = f(add_scaled(s, 0.5 * dt, k1));
  const State k3 = f(add_scaled(s, 0.5 * dt, k2));
  const State k4 = f(add_scaled(s, dt, k3));
  State out = s;
  for (auto m : State::fields()) {
    out.*m += (dt / 6.0) * (k1.*m + 2.0 * k2.*m + 2.0 * k3.*m + k4.*m);
  }
  return out;
}

template <typename State>
struct Trajectory {
  double dt{0.0};
  std::vector<double> time;
  std::vector<State> states;

  std::size_t size() const { return states.size(); }
  const State& back() const { return states.back(); }
};

/// Number of samples (including t = 0) for horizon T at step dt.
inline std::size_t sample_count(double dt, double horizon) {
  // The small bias absorbs T/dt landing a hair below an integer in floating point.
  return static_cast<std::size_t>(std::floor(horizon / dt + 1e-9)) + 1;
}

/**
 * @brief Integrate `deriv(t, state)` from `x0` with RK4.
 *
 * Returns floor(T/dt)+1 samples starting at t = 0. A non-finite state or a
 * model-domain failure aborts with SimulationError carrying the step index.
 */
template <typename State, typename Deriv>
Trajectory<State> simulate(const State& x0, Deriv&& deriv, double dt, double horizon) {
  if (!(dt > 0.0)) throw ModelDomainError("simulate: dt must be positive");
  if (!(horizon >= dt)) throw ModelDomainError("simulate: horizon must be at least one step");
  const std::size_t n = sample_count(dt, horizon);
  Trajectory<State> traj;
  traj.dt = dt;
  traj.time.reserve(n);
  traj.states.reserve(n);
  traj.time.push_back(0.0);
  traj.states.push_back(x0);
  State s = x0;
  for (std::size_t k = 1; k < n; ++k) {
    const double t0 = static_cast<double>(k - 1) * dt;
    try {
      s = rk4_step(s, [&](const State& q) { return deriv(t0, q); }, dt);
    } catch (const CapsizeError& e) {
      throw CapsizeError(e.message(), static_cast<long>(k));
    } catch (const ModelDomainError& e) {
      throw SimulationError(e.what(), static_cast<long>(k));
    }
    if (!all_finite(s)) throw SimulationError("simulate: non-finite state", static_cast<long>(k));
    traj.time.push_back(static_cast<double>(k) * dt);
    traj.states.push_back(s);
  }
  return traj;
}

/// Steering input as a function of time.
using SteerProfile = std::function<double(double)>;

inline Trajectory<KinState> simulate_kinematic(const KinState& x0, double v, const SteerProfile& steer,
                                               const VehicleParams& p, double dt, double horizon) {
  return simulate(
      x0, [&](double t, const KinState& s) { return kin_derivative(s, v, steer(t), p); }, dt, horizon);
}

inline Trajectory<DynState> simulate_dynamic(const DynState& x0, double v, const SteerProfile& steer,
                                             const VehicleParams& p, double dt, double horizon) {
  return simulate(
      x0, [&](double t, const DynState& s) { return dyn_derivative(s, v, steer(t), p); }, dt, horizon);
}

inline Trajectory<LeanState> simulate_lean(const LeanState& x0, const LeanCommand& cmd, const LeanBikeParams& p,
                                           double dt, double horizon) {
  return simulate(
      x0,
      [&](double, const LeanState& s) { return lean_derivative(s, cmd.speed, cmd.phi_ref, cmd.delta_tgt, p); },
      dt, horizon);
}

}  // namespace mact
