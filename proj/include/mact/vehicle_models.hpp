#pragma once

/**
 * @file
 * @brief Kinematic bicycle, linear-tire dynamic bicycle and point-mass
 * leaning bicycle.
 *
 * Every derivative is a pure function templated on the scalar type so the
 * same code runs on doubles and on mact::Dual for exact Jacobians.
 */

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "mact/dual.hpp"
#include "mact/errors.hpp"

namespace mact {

struct VehicleParams {
  double mass{1500.0};             ///< M [kg]
  double yaw_inertia{2500.0};      ///< I_z [kg m^2]
  double dist_front{1.2};          ///< l_f [m]
  double dist_rear{1.5};           ///< l_r [m]
  double stiffness_front{80000.0}; ///< C_af [N/rad]
  double stiffness_rear{80000.0};  ///< C_ar [N/rad]

  double wheelbase() const { return dist_front + dist_rear; }
  double avg_stiffness() const { return 0.5 * (stiffness_front + stiffness_rear); }

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw ModelDomainError(std::string("vehicle parameter '") + name + "' must be positive and finite");
      }
    };
    positive(mass, "mass");
    positive(yaw_inertia, "yaw_inertia");
    positive(dist_front, "dist_front");
    positive(dist_rear, "dist_rear");
    positive(stiffness_front, "stiffness_front");
    positive(stiffness_rear, "stiffness_rear");
  }
};

/// Mid-size passenger car used throughout the experiments.
inline VehicleParams reference_vehicle() { return VehicleParams{}; }

struct LeanBikeParams {
  double wheelbase{1.0};   ///< l [m]
  double com_height{0.55}; ///< h [m]
  double gravity{9.81};    ///< g [m/s^2]
  double k1{71.0};         ///< lean-error gain
  double k2{21.0};         ///< lean-rate gain
  double k3{-20.0};        ///< steer-error gain

  void validate() const {
    if (!(wheelbase > 0.0) || !(com_height > 0.0) || !(gravity > 0.0)) {
      throw ModelDomainError("lean bike wheelbase, com_height and gravity must be positive");
    }
  }
};

// ---------------------------------------------------------------------------
// States. fields() lists the members so generic code (RK4, finiteness checks)
// can treat every state as a small vector.

template <typename Scalar = double>
struct KinStateT {
  Scalar x{};
  Scalar y{};
  Scalar psi{};

  static constexpr auto fields() { return std::array{&KinStateT::x, &KinStateT::y, &KinStateT::psi}; }
};

template <typename Scalar = double>
struct DynStateT {
  Scalar x{};
  Scalar y{};
  Scalar psi{};
  Scalar v_y{};  ///< body-frame lateral velocity [m/s]
  Scalar r{};    ///< yaw rate [rad/s]

  static constexpr auto fields() {
    return std::array{&DynStateT::x, &DynStateT::y, &DynStateT::psi, &DynStateT::v_y, &DynStateT::r};
  }
};

template <typename Scalar = double>
struct LeanStateT {
  Scalar x{};
  Scalar y{};
  Scalar psi{};
  Scalar phi{};      ///< lean angle [rad]
  Scalar phi_dot{};  ///< lean rate [rad/s]
  Scalar delta{};    ///< steer angle [rad]

  static constexpr auto fields() {
    return std::array{&LeanStateT::x,   &LeanStateT::y,       &LeanStateT::psi,
                      &LeanStateT::phi, &LeanStateT::phi_dot, &LeanStateT::delta};
  }
};

using KinState = KinStateT<double>;
using DynState = DynStateT<double>;
using LeanState = LeanStateT<double>;

template <typename Scalar = double>
struct TireStateT {
  Scalar alpha_f{};
  Scalar alpha_r{};
  Scalar F_yf{};
  Scalar F_yr{};
};
using TireState = TireStateT<double>;

template <typename State>
bool all_finite(const State& s) {
  for (auto m : State::fields()) {
    if (!std::isfinite(value_of(s.*m))) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Kinematic bicycle (rear-axle reference point).

template <typename Scalar, typename SteerScalar>
KinStateT<Scalar> kin_derivative(const KinStateT<Scalar>& s, double v, const SteerScalar& delta,
                                  const VehicleParams& p) {
  using std::cos;
  using std::sin;
  using std::tan;
  if (!std::isfinite(v) || !std::isfinite(value_of(delta)) || !all_finite(s)) {
    throw ModelDomainError("kin_derivative: non-finite input");
  }
  if (v < 0.0) throw ModelDomainError("kin_derivative: speed must be non-negative");
  if (std::abs(value_of(delta)) >= 0.5 * std::numbers::pi) {
    throw ModelDomainError("kin_derivative: |delta| must be below pi/2");
  }
  return {v * cos(s.psi), v * sin(s.psi), Scalar(tan(delta) * (v / p.wheelbase()))};
}

// ---------------------------------------------------------------------------
// Dynamic bicycle, linear tires, constant longitudinal speed.

template <typename Scalar, typename SteerScalar>
TireStateT<Scalar> slip_and_forces(const DynStateT<Scalar>& s, double v_x, const SteerScalar& delta,
                                   const VehicleParams& p) {
  using std::atan;
  if (!(v_x > 0.0)) throw ModelDomainError("slip_and_forces: v_x must be positive");
  TireStateT<Scalar> t;
  t.alpha_f = delta - atan((s.v_y + p.dist_front * s.r) / v_x);
  t.alpha_r = -atan((s.v_y - p.dist_rear * s.r) / v_x);
  t.F_yf = p.stiffness_front * t.alpha_f;
  t.F_yr = p.stiffness_rear * t.alpha_r;
  return t;
}

template <typename Scalar, typename SteerScalar>
DynStateT<Scalar> dyn_derivative(const DynStateT<Scalar>& s, double v_x, const SteerScalar& delta,
                                 const VehicleParams& p) {
  using std::cos;
  using std::sin;
  if (!std::isfinite(v_x) || !std::isfinite(value_of(delta)) || !all_finite(s)) {
    throw ModelDomainError("dyn_derivative: non-finite input");
  }
  const auto tire = slip_and_forces(s, v_x, delta, p);
  const Scalar c = cos(s.psi);
  const Scalar sn = sin(s.psi);
  DynStateT<Scalar> ds;
  ds.x = v_x * c - s.v_y * sn;
  ds.y = v_x * sn + s.v_y * c;
  ds.psi = s.r;
  ds.v_y = (tire.F_yf + tire.F_yr) / p.mass - v_x * s.r;
  ds.r = (p.dist_front * tire.F_yf - p.dist_rear * tire.F_yr) / p.yaw_inertia;
  return ds;
}

/// Linearised lateral subsystem d/dt (v_y, r) = A (v_y, r) + B delta.
struct LateralSystem {
  Eigen::Matrix2d A;
  Eigen::Vector2d B;
};

inline LateralSystem lateral_system(double v_x, const VehicleParams& p) {
  if (!(v_x > 0.0)) throw ModelDomainError("lateral_system: v_x must be positive");
  const double cf = p.stiffness_front;
  const double cr = p.stiffness_rear;
  const double lf = p.dist_front;
  const double lr = p.dist_rear;
  LateralSystem sys;
  sys.A << -(cf + cr) / (p.mass * v_x), -v_x - (lf * cf - lr * cr) / (p.mass * v_x),
      -(lf * cf - lr * cr) / (p.yaw_inertia * v_x), -(lf * lf * cf + lr * lr * cr) / (p.yaw_inertia * v_x);
  sys.B << cf / p.mass, lf * cf / p.yaw_inertia;
  return sys;
}

// ---------------------------------------------------------------------------
// Point-mass leaning bicycle with a linear balance controller on steer rate.

/// Lean/steer set-points for a constant-curvature command.
struct LeanCommand {
  double speed{0.0};
  double phi_ref{0.0};
  double delta_tgt{0.0};

  static LeanCommand for_curvature(double v, double kappa, const LeanBikeParams& p) {
    LeanCommand c;
    c.speed = v;
    c.phi_ref = std::atan(v * v * kappa / p.gravity);
    c.delta_tgt = std::atan(p.wheelbase * kappa * std::cos(c.phi_ref));
    return c;
  }
};

template <typename Scalar>
LeanStateT<Scalar> lean_derivative(const LeanStateT<Scalar>& s, double v, double phi_ref, double delta_tgt,
                                   const LeanBikeParams& p) {
  using std::cos;
  using std::sin;
  using std::tan;
  if (!all_finite(s) || !std::isfinite(v)) throw ModelDomainError("lean_derivative: non-finite input");
  if (std::abs(value_of(s.phi)) >= 0.5 * std::numbers::pi) {
    throw CapsizeError("leaning bicycle capsized: |phi| >= pi/2", -1);
  }
  const Scalar tan_delta = tan(s.delta);
  const Scalar cos_phi = cos(s.phi);
  LeanStateT<Scalar> ds;
  ds.x = v * cos(s.psi);
  ds.y = v * sin(s.psi);
  ds.psi = v * tan_delta / (p.wheelbase * cos_phi);
  ds.phi = s.phi_dot;
  ds.phi_dot = (p.gravity * sin(s.phi) - (v * v / p.wheelbase) * tan_delta * cos_phi) / p.com_height;
  ds.delta = p.k1 * (s.phi - phi_ref) + p.k2 * s.phi_dot + p.k3 * (s.delta - delta_tgt);
  return ds;
}

}  // namespace mact
