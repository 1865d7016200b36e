#pragma once

/**
 * @file
 * @brief Lane-constraint tightening policies: none, fixed, tube, adaptive, MACT.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mact {

enum class PolicyKind { none, fixed, tube, adaptive, mact };

inline constexpr std::array<PolicyKind, 5> kAllPolicies{PolicyKind::none, PolicyKind::fixed, PolicyKind::tube,
                                                        PolicyKind::adaptive, PolicyKind::mact};

inline std::string_view to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::none: return "none";
    case PolicyKind::fixed: return "fixed";
    case PolicyKind::tube: return "tube";
    case PolicyKind::adaptive: return "adaptive";
    case PolicyKind::mact: return "mact";
  }
  return "unknown";
}

inline std::optional<PolicyKind> parse_policy(std::string_view s) {
  for (auto k : kAllPolicies) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

struct TighteningPolicy {
  PolicyKind kind{PolicyKind::none};
  double a2{0.0};            ///< s^2, MACT / tube coefficient
  double fixed_margin{0.0};  ///< m, fixed policy
  double v_max{0.0};         ///< tube worst-case speed
  double kappa_max{0.0};     ///< tube worst-case curvature
  double ema_alpha{0.1};     ///< adaptive EMA weight per update
  double warmup{0.5};        ///< adaptive warmup [s]

  static TighteningPolicy none() { return {}; }
  static TighteningPolicy fixed(double margin) {
    TighteningPolicy p;
    p.kind = PolicyKind::fixed;
    p.fixed_margin = margin;
    return p;
  }
  static TighteningPolicy tube(double a2, double v_max, double kappa_max) {
    TighteningPolicy p;
    p.kind = PolicyKind::tube;
    p.a2 = a2;
    p.v_max = v_max;
    p.kappa_max = std::abs(kappa_max);
    return p;
  }
  static TighteningPolicy adaptive(double ema_alpha, double warmup) {
    TighteningPolicy p;
    p.kind = PolicyKind::adaptive;
    p.ema_alpha = ema_alpha;
    p.warmup = warmup;
    return p;
  }
  static TighteningPolicy mact(double a2) {
    TighteningPolicy p;
    p.kind = PolicyKind::mact;
    p.a2 = a2;
    return p;
  }
};

/// Online coefficient estimate threaded through one closed-loop run.
struct AdaptiveEstimatorState {
  double a2_hat{0.0};
  double elapsed{0.0};
  double peak_abs_crosstrack_seen{0.0};
};

/// Below this v^2|kappa| an observation carries no information about a2.
inline constexpr double kMinRegressor = 1e-9;

/**
 * @brief Margin to subtract from the lane half-width.
 *
 * The adaptive kind reads its coefficient from `estimator`; calling it
 * without one is a usage error.
 */
inline double epsilon(const TighteningPolicy& policy, double v, double kappa,
                      const AdaptiveEstimatorState* estimator = nullptr) {
  if (v < 0.0) throw std::invalid_argument("epsilon: speed must be non-negative");
  switch (policy.kind) {
    case PolicyKind::none: return 0.0;
    case PolicyKind::fixed: return std::max(0.0, policy.fixed_margin);
    case PolicyKind::tube: return std::max(0.0, policy.a2 * policy.v_max * policy.v_max * policy.kappa_max);
    case PolicyKind::adaptive:
      if (estimator == nullptr) throw std::invalid_argument("epsilon: adaptive policy needs estimator state");
      return std::max(0.0, estimator->a2_hat * v * v * std::abs(kappa));
    case PolicyKind::mact: return std::max(0.0, policy.a2 * v * v * std::abs(kappa));
  }
  return 0.0;
}

/// d epsilon / d kappa (zero for the state-independent kinds).
inline double epsilon_kappa_slope(const TighteningPolicy& policy, double v, double kappa,
                                  const AdaptiveEstimatorState* estimator = nullptr) {
  const double sign = kappa > 0.0 ? 1.0 : (kappa < 0.0 ? -1.0 : 0.0);
  switch (policy.kind) {
    case PolicyKind::mact: return policy.a2 * v * v * sign;
    case PolicyKind::adaptive:
      if (estimator == nullptr) throw std::invalid_argument("epsilon_kappa_slope: adaptive policy needs estimator state");
      return estimator->a2_hat * v * v * sign;
    default: return 0.0;
  }
}

/**
 * @brief Advance the adaptive estimator by one control period.
 *
 * While elapsed < warmup nothing is recorded and a2_hat stays 0. After
 * warmup the running peak |n| is tracked and the raw ratio
 * peak / (v^2 |kappa|) is blended in with weight ema_alpha.
 */
inline AdaptiveEstimatorState adaptive_update(AdaptiveEstimatorState est, const TighteningPolicy& policy,
                                              double observed_crosstrack, double v, double kappa, double dt_ctrl) {
  if (!(dt_ctrl > 0.0)) throw std::invalid_argument("adaptive_update: dt_ctrl must be positive");
  est.elapsed += dt_ctrl;
  // Tolerance keeps k * dt_ctrl == warmup from falling on the wrong side.
  if (est.elapsed < policy.warmup - 1e-12) {
    est.a2_hat = 0.0;
    return est;
  }
  est.peak_abs_crosstrack_seen = std::max(est.peak_abs_crosstrack_seen, std::abs(observed_crosstrack));
  const double x = v * v * std::abs(kappa);
  if (x < kMinRegressor) return est;
  const double raw = est.peak_abs_crosstrack_seen / x;
  est.a2_hat = (1.0 - policy.ema_alpha) * est.a2_hat + policy.ema_alpha * raw;
  return est;
}

/// Margin applied beyond what was needed, clipped at zero.
inline double wasted_margin(double applied, double required) {
  if (applied < 0.0 || required < 0.0) throw std::invalid_argument("wasted_margin: margins must be non-negative");
  return std::max(0.0, applied - required);
}

inline bool is_safe(double applied, double required) { return applied >= required; }

}  // namespace mact
