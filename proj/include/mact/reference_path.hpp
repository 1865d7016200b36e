#pragma once

/**
 * @file
 * @brief Constant-curvature reference paths starting at the origin heading +x.
 *
 * For kappa != 0 the path is the circle of radius 1/|kappa| centred at
 * (0, 1/kappa): kappa > 0 turns left, kappa < 0 turns right. Cross-track
 * error is the signed distance to that circle, positive away from the
 * centre (outward). For kappa == 0 the reference is the x axis and the
 * cross-track error is the signed y offset.
 */

#include <cmath>
#include <numbers>

#include "mact/dual.hpp"

namespace mact {

template <typename Scalar>
struct PathError {
  Scalar lateral{};  ///< signed cross-track n, outward positive
  Scalar heading{};  ///< psi - psi_ref wrapped to (-pi, pi]
};

template <typename Scalar>
Scalar wrap_angle(Scalar a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double turns = std::round(value_of(a) / two_pi);
  return a - two_pi * turns;
}

template <typename Scalar>
Scalar cross_track(const Scalar& x, const Scalar& y, double kappa) {
  using std::hypot;
  if (kappa == 0.0) return y;
  const double radius = 1.0 / kappa;  // signed
  // Rationalised hypot(x, y - R) - |R|; the direct difference loses about
  // log10(R) digits near the circle.
  return (x * x + y * (y - 2.0 * radius)) / (hypot(x, y - radius) + std::abs(radius));
}

template <typename Scalar>
PathError<Scalar> path_error(const Scalar& x, const Scalar& y, const Scalar& psi, double kappa) {
  using std::atan2;
  PathError<Scalar> e;
  e.lateral = cross_track(x, y, kappa);
  if (kappa == 0.0) {
    e.heading = wrap_angle(psi);
    return e;
  }
  const double radius = 1.0 / kappa;
  const double side = kappa > 0.0 ? 1.0 : -1.0;
  // Arc angle travelled from the start point, measured about the centre.
  const Scalar theta = atan2(x, side * (radius - y));
  e.heading = wrap_angle(psi - side * theta);
  return e;
}

}  // namespace mact
