#pragma once

/**
 * @file
 * @brief Kinematic-vs-dynamic mismatch: closed forms, the peak outward
 * deviation, scaling fits and horizon propagation bounds.
 */

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "mact/errors.hpp"
#include "mact/integrator.hpp"
#include "mact/reference_path.hpp"
#include "mact/vehicle_models.hpp"

namespace mact {

enum class ModelKind { kinematic, dynamic };

/// Lateral settling time under the two eigenvalue conventions in use.
struct SettlingTime {
  double speed{0.0};           ///< speed the lateral system was evaluated at [m/s]
  double slowest_real{0.0};    ///< Re(lambda) of the slowest lateral pole [1/s]
  double five_over_lambda{0.0};
  double two_over_lambda{0.0};
};

struct MismatchConstants {
  double v_c{0.0};  ///< characteristic speed [m/s]
  double K_u{0.0};  ///< understeer gradient [s^2/m^2]
  SettlingTime tau_s;
};

inline double characteristic_speed(const VehicleParams& p) {
  p.validate();
  return std::sqrt(p.avg_stiffness() * p.wheelbase() / p.mass);
}

inline double understeer_gradient(const VehicleParams& p) {
  p.validate();
  const double L = p.wheelbase();
  return p.mass * (p.dist_rear / p.stiffness_rear - p.dist_front / p.stiffness_front) / (L * L);
}

inline SettlingTime settling_time(double v_x, const VehicleParams& p) {
  const auto sys = lateral_system(v_x, p);
  const Eigen::EigenSolver<Eigen::Matrix2d> es(sys.A, false);
  const auto ev = es.eigenvalues();
  const double slowest = std::max(ev[0].real(), ev[1].real());  // closest to the imaginary axis
  return {v_x, slowest, 5.0 / std::abs(slowest), 2.0 / std::abs(slowest)};
}

inline MismatchConstants mismatch_constants(const VehicleParams& p) {
  MismatchConstants c;
  c.v_c = characteristic_speed(p);
  c.K_u = understeer_gradient(p);
  c.tau_s = settling_time(c.v_c, p);
  return c;
}

/**
 * @brief Lateral-acceleration gap (dynamic minus kinematic) at t = 0+ for a
 * start from rest under the kinematic-equivalent steer arctan(L kappa).
 *
 * Positive means the dynamic vehicle initially moves inward of the plan.
 */
inline double initial_accel_deficit(double v, double kappa, const VehicleParams& p) {
  if (!(v > 0.0)) throw ModelDomainError("initial_accel_deficit: v must be positive");
  if (kappa < 0.0) throw ModelDomainError("initial_accel_deficit: kappa must be non-negative");
  return p.avg_stiffness() * std::atan(p.wheelbase() * kappa) / p.mass - v * v * kappa;
}

/// Steady-state shortfall K_u v^2 kappa / (1 + K_u v^2) of the dynamic response, as a
/// curvature [1/m]; the yaw-rate gap to v kappa is v times this.
inline double steady_state_yaw_deficit(double v, double kappa, const MismatchConstants& c) {
  if (!(v > 0.0)) throw ModelDomainError("steady_state_yaw_deficit: v must be positive");
  return c.K_u * v * v * kappa / (1.0 + c.K_u * v * v);
}

/// Short-horizon envelope coefficient 1/2 (v^2 - v_c^2) kappa.
inline double transient_coefficient(double v, double kappa, double v_c) {
  return 0.5 * (v * v - v_c * v_c) * kappa;
}

/// Long-horizon envelope coefficient 1/2 v dr_ss.
inline double steady_coefficient(double v, double kappa, const MismatchConstants& c) {
  return 0.5 * v * steady_state_yaw_deficit(v, kappa, c);
}

struct EnvelopeCoeffs {
  double c_trans{0.0};
  double c_ss{0.0};
  double c_eff_measured{0.0};  ///< eps*/T^2 from simulation
};

// ---------------------------------------------------------------------------
// Deviation metric.

/// Signed distance of every trajectory sample to the reference, outward positive.
template <typename State>
std::vector<double> lateral_deviation(const Trajectory<State>& traj, double kappa) {
  std::vector<double> d;
  d.reserve(traj.size());
  for (const auto& s : traj.states) d.push_back(cross_track(s.x, s.y, kappa));
  return d;
}

inline double kinematic_equivalent_steer(double kappa, double wheelbase) {
  return std::atan(wheelbase * kappa);
}

/// Open-loop run from rest with the constant kinematic-equivalent steer.
inline Trajectory<DynState> open_loop_dynamic(double v, double kappa, double horizon, const VehicleParams& p,
                                              double dt = 0.01) {
  const double delta = kinematic_equivalent_steer(kappa, p.wheelbase());
  return simulate_dynamic(DynState{}, v, [delta](double) { return delta; }, p, dt, horizon);
}

inline Trajectory<KinState> open_loop_kinematic(double v, double kappa, double horizon, const VehicleParams& p,
                                                double dt = 0.01) {
  const double delta = kinematic_equivalent_steer(kappa, p.wheelbase());
  return simulate_kinematic(KinState{}, v, [delta](double) { return delta; }, p, dt, horizon);
}

/// Peak outward deviation eps* = max_t d_lat(t) over [0, T].
inline double measure_peak_deviation(double v, double kappa, double horizon, ModelKind kind,
                                     const VehicleParams& p, double dt = 0.01) {
  std::vector<double> d;
  if (kind == ModelKind::dynamic) {
    d = lateral_deviation(open_loop_dynamic(v, kappa, horizon, p, dt), kappa);
  } else {
    d = lateral_deviation(open_loop_kinematic(v, kappa, horizon, p, dt), kappa);
  }
  return *std::max_element(d.begin(), d.end());
}

/// Leaning bicycle started upright and straight, commanded to curvature kappa.
inline Trajectory<LeanState> open_loop_lean(double v, double kappa, double horizon, const LeanBikeParams& p,
                                            double dt = 0.01) {
  return simulate_lean(LeanState{}, LeanCommand::for_curvature(v, kappa, p), p, dt, horizon);
}

inline double measure_lean_peak_deviation(double v, double kappa, double horizon, const LeanBikeParams& p,
                                          double dt = 0.01) {
  const auto d = lateral_deviation(open_loop_lean(v, kappa, horizon, p, dt), kappa);
  return *std::max_element(d.begin(), d.end());
}

inline EnvelopeCoeffs envelope_coeffs(double v, double kappa, double horizon, const VehicleParams& p,
                                      double dt = 0.01) {
  const auto c = mismatch_constants(p);
  if (!(v > c.v_c)) throw ModelDomainError("envelope_coeffs: defined only above the characteristic speed");
  EnvelopeCoeffs e;
  e.c_trans = transient_coefficient(v, kappa, c.v_c);
  e.c_ss = steady_coefficient(v, kappa, c);
  e.c_eff_measured = measure_peak_deviation(v, kappa, horizon, ModelKind::dynamic, p, dt) / (horizon * horizon);
  return e;
}

/// Simulation-free MACT coefficient 1/2 (1 - v_c^2 / v_max^2) T^2.
inline double a2_analytical(double v_max, double horizon, const MismatchConstants& c) {
  if (!(v_max > c.v_c)) {
    throw ModelDomainError("a2_analytical: v_max must exceed the characteristic speed");
  }
  return 0.5 * (1.0 - (c.v_c * c.v_c) / (v_max * v_max)) * horizon * horizon;
}

// ---------------------------------------------------------------------------
// Scaling fit eps* ~ a2 v^2 kappa.

struct ScalingSample {
  double v{0.0};
  double kappa{0.0};
  double eps_star{0.0};

  double regressor() const { return v * v * std::abs(kappa); }
};

struct ScalingFit {
  double a2{0.0};
  double r_squared{0.0};
  double a2_safe{0.0};
  std::size_t n_points{0};
};

/**
 * @brief Through-origin least squares of eps* on v^2|kappa|.
 *
 * R^2 = 1 - SS_res / SS_tot with SS_tot about the sample mean, clamped to
 * [0, 1]; a single sample (or zero spread) is a perfect fit by convention.
 * a2_safe is the largest per-sample ratio eps* / (v^2 |kappa|).
 */
inline ScalingFit fit_scaling(std::span<const ScalingSample> samples) {
  if (samples.empty()) throw std::invalid_argument("fit_scaling: no samples");
  double sxx = 0.0;
  double sxy = 0.0;
  double mean_y = 0.0;
  for (const auto& s : samples) {
    const double x = s.regressor();
    sxx += x * x;
    sxy += x * s.eps_star;
    mean_y += s.eps_star;
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit_scaling: degenerate regressor (all v^2 kappa = 0)");
  mean_y /= static_cast<double>(samples.size());

  ScalingFit fit;
  fit.n_points = samples.size();
  fit.a2 = sxy / sxx;
  double ss_res = 0.0;
  double ss_tot = 0.0;
  fit.a2_safe = 0.0;
  bool first = true;
  for (const auto& s : samples) {
    const double x = s.regressor();
    const double r = s.eps_star - fit.a2 * x;
    ss_res += r * r;
    ss_tot += (s.eps_star - mean_y) * (s.eps_star - mean_y);
    if (x > 0.0) {
      const double ratio = s.eps_star / x;
      fit.a2_safe = first ? ratio : std::max(fit.a2_safe, ratio);
      first = false;
    }
  }
  fit.r_squared = ss_tot > 0.0 ? std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0) : 1.0;
  return fit;
}

// ---------------------------------------------------------------------------
// Horizon propagation.

struct PropagationBoundInput {
  double lipschitz_f{1.0};
  double lipschitz_g{1.0};
  std::vector<double> per_step_mismatch;  ///< ||Delta_k||, k = 0..N-1
};

/// bound_t = sum_{k<t} L_f^{t-1-k} ||Delta_k||, t = 0..N (bound_0 = 0).
inline std::vector<double> horizon_mismatch_bound(const PropagationBoundInput& in) {
  if (in.lipschitz_f < 0.0) throw std::invalid_argument("horizon_mismatch_bound: L_f must be non-negative");
  std::vector<double> bound(in.per_step_mismatch.size() + 1, 0.0);
  for (std::size_t t = 0; t < in.per_step_mismatch.size(); ++t) {
    const double d = in.per_step_mismatch[t];
    if (d < 0.0) throw std::invalid_argument("horizon_mismatch_bound: mismatch norms must be non-negative");
    bound[t + 1] = in.lipschitz_f * bound[t] + d;
  }
  return bound;
}

inline std::vector<double> tightening_certificate(std::span<const double> bounds, double lipschitz_g) {
  if (lipschitz_g < 0.0) throw std::invalid_argument("tightening_certificate: L_g must be non-negative");
  std::vector<double> eps(bounds.begin(), bounds.end());
  for (auto& e : eps) e *= lipschitz_g;
  return eps;
}

// ---------------------------------------------------------------------------
// Empirical checks of the directional result and the certificate.

/**
 * @brief Finite-difference lateral-acceleration gap at t = 0+.
 *
 * Runs both models from rest for two steps of `h` and differences the
 * second derivative of y. Positive means the dynamic vehicle accelerates
 * inward faster than the kinematic plan.
 */
inline double fd_initial_accel_gap(double v, double kappa, const VehicleParams& p, double h = 1e-4) {
  const double horizon = 2.0 * h;
  const auto dyn = open_loop_dynamic(v, kappa, horizon, p, h);
  const auto kin = open_loop_kinematic(v, kappa, horizon, p, h);
  const auto second_diff = [h](double y0, double y1, double y2) { return (y2 - 2.0 * y1 + y0) / (h * h); };
  return second_diff(dyn.states[0].y, dyn.states[1].y, dyn.states[2].y) -
         second_diff(kin.states[0].y, kin.states[1].y, kin.states[2].y);
}

struct SpeedBracket {
  double lo{0.0};
  double hi{0.0};
  int iterations{0};
};

/// Bisect the sign change of fd_initial_accel_gap in v on [lo, hi].
inline SpeedBracket bracket_sign_change(double kappa, const VehicleParams& p, double lo, double hi,
                                        double tol = 1e-3, double h = 1e-4) {
  double g_lo = fd_initial_accel_gap(lo, kappa, p, h);
  const double g_hi = fd_initial_accel_gap(hi, kappa, p, h);
  if (!(g_lo > 0.0 && g_hi < 0.0)) throw std::invalid_argument("bracket_sign_change: no sign change on bracket");
  SpeedBracket b{lo, hi, 0};
  while (b.hi - b.lo > tol && b.iterations < 200) {
    const double mid = 0.5 * (b.lo + b.hi);
    const double g = fd_initial_accel_gap(mid, kappa, p, h);
    if (g > 0.0) {
      b.lo = mid;
      g_lo = g;
    } else {
      b.hi = mid;
    }
    ++b.iterations;
  }
  return b;
}

struct CertificateTrial {
  double v{0.0};
  double kappa{0.0};
  double lipschitz_f{0.0};
  double worst_slack{0.0};   ///< min over t of (n_plan + eps_t - n_true); negative = violation
  double worst_error_slack{0.0};  ///< min over t of (bound_t - ||e_t||)
  bool violated{false};
};

struct CertificateStudy {
  std::uint64_t seed{0};
  std::vector<CertificateTrial> trials;

  std::size_t violations() const {
    return static_cast<std::size_t>(std::count_if(trials.begin(), trials.end(), [](const auto& t) { return t.violated; }));
  }
};

/**
 * @brief Monte-Carlo soundness check of the tightening certificate.
 *
 * Each trial draws a speed, a curvature and a perturbed steer sequence, runs
 * the kinematic plan and the dynamic execution side by side on the pose
 * space (x, y, psi), measures ||Delta_k|| along the executed states and uses
 * the Lipschitz constant 1 + v dt of the discrete kinematic step. The lane
 * function is the cross-track error, which is 1-Lipschitz in the pose.
 */
inline CertificateStudy certificate_monte_carlo(const VehicleParams& p, std::size_t n_trials, std::uint64_t seed,
                                                int steps = 15, double dt = 0.05, int substeps = 5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> speed_dist(5.0, 20.0);
  std::uniform_real_distribution<double> kappa_dist(-0.03, 0.03);
  std::uniform_real_distribution<double> jitter(-0.02, 0.02);
  const double h = dt / substeps;

  auto kin_step = [&](KinState s, double v, double delta) {
    for (int i = 0; i < substeps; ++i) {
      s = rk4_step(s, [&](const KinState& q) { return kin_derivative(q, v, delta, p); }, h);
    }
    return s;
  };
  auto dyn_step = [&](DynState s, double v, double delta) {
    for (int i = 0; i < substeps; ++i) {
      s = rk4_step(s, [&](const DynState& q) { return dyn_derivative(q, v, delta, p); }, h);
    }
    return s;
  };
  auto pose = [](const DynState& s) { return KinState{s.x, s.y, s.psi}; };
  auto dist = [](const KinState& a, const KinState& b) {
    return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.psi - b.psi) * (a.psi - b.psi));
  };

  CertificateStudy study;
  study.seed = seed;
  study.trials.reserve(n_trials);
  for (std::size_t trial = 0; trial < n_trials; ++trial) {
    CertificateTrial t;
    t.v = speed_dist(rng);
    t.kappa = kappa_dist(rng);
    t.lipschitz_f = 1.0 + t.v * dt;
    const double base = kinematic_equivalent_steer(t.kappa, p.wheelbase());
    std::vector<double> steer(static_cast<std::size_t>(steps));
    for (auto& d : steer) d = base + jitter(rng);

    KinState plan{};
    DynState truth{};
    PropagationBoundInput in;
    in.lipschitz_f = t.lipschitz_f;
    in.lipschitz_g = 1.0;
    std::vector<KinState> plan_traj{plan};
    std::vector<DynState> truth_traj{truth};
    for (int k = 0; k < steps; ++k) {
      const double delta = steer[static_cast<std::size_t>(k)];
      const DynState next_truth = dyn_step(truth, t.v, delta);
      in.per_step_mismatch.push_back(dist(pose(next_truth), kin_step(pose(truth), t.v, delta)));
      truth = next_truth;
      plan = kin_step(plan, t.v, delta);
      plan_traj.push_back(plan);
      truth_traj.push_back(truth);
    }
    const auto bound = horizon_mismatch_bound(in);
    const auto eps = tightening_certificate(bound, in.lipschitz_g);
    t.worst_slack = std::numeric_limits<double>::infinity();
    t.worst_error_slack = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < plan_traj.size(); ++k) {
      const double n_plan = cross_track(plan_traj[k].x, plan_traj[k].y, t.kappa);
      const double n_true = cross_track(truth_traj[k].x, truth_traj[k].y, t.kappa);
      t.worst_slack = std::min(t.worst_slack, n_plan + eps[k] - n_true);
      t.worst_error_slack = std::min(t.worst_error_slack, bound[k] - dist(pose(truth_traj[k]), plan_traj[k]));
    }
    t.violated = t.worst_slack < -1e-12 || t.worst_error_slack < -1e-12;
    study.trials.push_back(t);
  }
  return study;
}

}  // namespace mact
