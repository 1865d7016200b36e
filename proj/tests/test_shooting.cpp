#include <chrono>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mact/mpc.hpp"
#include "mact/shooting.hpp"

using namespace mact;

namespace {

ShootingProblem arc_problem(ModelKind model, double v = 15.0, double kappa = 0.012) {
  ShootingProblem pb;
  pb.model = model;
  pb.speed = v;
  pb.kappa_ref = kappa;
  return pb;
}

bool near_kink(const ShootingProblem& pb, std::span<const double> steer) {
  const auto ro = rollout(pb, steer);
  for (std::size_t k = 0; k < ro.slack.size(); ++k) {
    const double n = ro.lateral[k + 1];
    if (std::abs(n) < 1e-4) return true;
    if (std::abs(std::abs(n) - (pb.lane_half_width - ro.epsilon[k])) < 1e-4) return true;
  }
  return false;
}

}  // namespace

TEST(Rollout, ZeroSteerOnStraightKeepsOffset) {
  for (auto model : {ModelKind::kinematic, ModelKind::dynamic}) {
    auto pb = arc_problem(model, 15.0, 0.0);
    pb.initial.y = 0.05;
    const std::vector<double> steer(20, 0.0);
    for (double n : rollout(pb, steer).lateral) EXPECT_EQ(n, 0.05);
  }
}

TEST(Rollout, KinematicEquivalentSteerStaysOnArc) {
  auto pb = arc_problem(ModelKind::kinematic);
  const std::vector<double> steer(20, std::atan(pb.vehicle.wheelbase() * pb.kappa_ref));
  for (double n : rollout(pb, steer).lateral) EXPECT_NEAR(n, 0.0, 1e-9);
}

TEST(Rollout, TruthModelDriftsOutwardAboveCharacteristicSpeed) {
  auto pb = arc_problem(ModelKind::dynamic, 15.0, 0.015);
  pb.horizon = 30;
  const std::vector<double> steer(30, std::atan(pb.vehicle.wheelbase() * pb.kappa_ref));
  const auto ro = rollout(pb, steer);
  for (std::size_t k = 1; k < ro.lateral.size(); ++k) EXPECT_GT(ro.lateral[k], ro.lateral[k - 1]);
  EXPECT_NEAR(ro.lateral.back(), 1.04, 0.05 * 1.04);
}

TEST(Rollout, CurvatureSourceAndEpsilonFormula) {
  auto pb = arc_problem(ModelKind::dynamic);
  pb.policy = TighteningPolicy::mact(0.0134);
  std::vector<double> steer(20);
  for (int k = 0; k < 20; ++k) steer[static_cast<std::size_t>(k)] = 0.002 * k;
  auto ro = rollout(pb, steer);
  for (std::size_t k = 0; k < 20; ++k) {
    EXPECT_EQ(ro.kappa[k], std::tan(steer[k]) / pb.vehicle.wheelbase());
    EXPECT_EQ(ro.epsilon[k], epsilon(pb.policy, pb.speed, ro.kappa[k]));
  }
  pb.curvature_source = CurvatureSource::reference;
  ro = rollout(pb, steer);
  for (std::size_t k = 0; k < 20; ++k) EXPECT_EQ(ro.epsilon[k], 0.0134 * 225.0 * 0.012);
}

TEST(Cost, ZeroOnCenterlineStraight) {
  auto pb = arc_problem(ModelKind::dynamic, 15.0, 0.0);
  const std::vector<double> steer(20, 0.0);
  EXPECT_EQ(cost(pb, steer), 0.0);
}

TEST(Cost, SlackTermVanishesWhenInactive) {
  auto pb = arc_problem(ModelKind::kinematic);
  pb.initial.y = -0.05;
  const std::vector<double> steer(20, std::atan(pb.vehicle.wheelbase() * pb.kappa_ref));
  const double with_slack = cost(pb, steer);
  pb.weights.slack = 0.0;
  EXPECT_EQ(cost(pb, steer), with_slack);
  for (double s : rollout(pb, steer).slack) EXPECT_EQ(s, 0.0);
}

TEST(Cost, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-0.05, 0.08);
  int checked = 0;
  for (int attempt = 0; attempt < 200 && checked < 20; ++attempt) {
    auto pb = arc_problem(attempt % 2 ? ModelKind::dynamic : ModelKind::kinematic, 15.0, 0.012);
    pb.initial.y = -0.08 + 0.01 * (attempt % 5);
    pb.policy = TighteningPolicy::mact(0.0134 * (attempt % 3));
    pb.previous_steer = 0.02;
    std::vector<double> steer(20);
    for (auto& d : steer) d = u(rng);
    if (near_kink(pb, steer)) continue;
    ++checked;
    const Eigen::VectorXd g = cost_gradient(pb, steer);
    Eigen::VectorXd fd(20);
    const double h = 1e-6;
    for (std::size_t i = 0; i < 20; ++i) {
      auto p = steer, m = steer;
      p[i] += h;
      m[i] -= h;
      fd(static_cast<Eigen::Index>(i)) = (cost(pb, p) - cost(pb, m)) / (2 * h);
    }
    EXPECT_LT((g - fd).norm() / fd.norm(), 1e-5) << "attempt " << attempt;
  }
  EXPECT_EQ(checked, 20);
}

TEST(Solve, StraightLaneCenterline) {
  auto pb = arc_problem(ModelKind::dynamic, 15.0, 0.0);
  const auto sol = solve(pb);
  EXPECT_TRUE(sol.converged);
  EXPECT_LT(sol.cost, 1e-12);
  for (double d : sol.steer) EXPECT_LT(std::abs(d), 1e-9);
}

TEST(Solve, TracksArcOnPlannerModel) {
  auto pb = arc_problem(ModelKind::kinematic, 15.0, 0.012);
  pb.previous_steer = std::atan(pb.vehicle.wheelbase() * pb.kappa_ref);
  pb.initial.y = -0.05;
  const auto sol = solve(pb);
  EXPECT_LT(std::abs(sol.rollout.lateral.back()), 0.01);
  EXPECT_NEAR(sol.steer.back(), std::atan(pb.vehicle.wheelbase() * pb.kappa_ref), 0.01);
}

TEST(Solve, BoxConstraintsHoldExactly) {
  for (double kappa : {0.012, 0.2}) {
    auto pb = arc_problem(ModelKind::dynamic, 15.0, kappa);
    pb.initial.y = -0.3;
    const auto sol = solve(pb);
    double prev = pb.previous_steer;
    for (std::size_t k = 0; k < sol.steer.size(); ++k) {
      EXPECT_LE(std::abs(sol.steer[k]), pb.delta_max);
      EXPECT_LE(std::abs(sol.steer[k] - prev), pb.max_increment()) << k;
      EXPECT_LE(std::abs(sol.increments[k]), pb.max_increment());
      prev = sol.steer[k];
    }
  }
}

TEST(Solve, CostNeverIncreases) {
  auto pb = arc_problem(ModelKind::dynamic, 17.0, 0.015);
  pb.initial.y = -0.08;
  pb.policy = TighteningPolicy::mact(0.0134);
  pb.curvature_source = CurvatureSource::reference;
  const auto sol = solve(pb);
  ASSERT_GE(sol.cost_history.size(), 2u);
  for (std::size_t i = 1; i < sol.cost_history.size(); ++i) {
    const double allowed = sol.cost_history[i - 1] * (1.0 + kRoundingAllowance);
    EXPECT_LE(sol.cost_history[i], allowed) << i;
  }
  EXPECT_EQ(sol.cost_history.back(), sol.cost);
}

TEST(Solve, TightenedStraightLanePullsTowardCentre) {
  auto pb = arc_problem(ModelKind::dynamic, 15.0, 0.0);
  pb.initial.y = 0.1;
  pb.weights.lateral = 0.1;
  const auto loose = solve(pb);
  pb.policy = TighteningPolicy::fixed(0.1);  // allowed |n| = 0.06 m < |n_0|
  const auto tight = solve(pb);
  ASSERT_TRUE(loose.converged);
  ASSERT_TRUE(tight.converged);
  EXPECT_LT(tight.steer.front(), loose.steer.front());
  for (std::size_t k = 1; k < tight.rollout.lateral.size(); ++k) {
    EXPECT_LE(tight.rollout.lateral[k], loose.rollout.lateral[k] + 1e-9) << k;
  }
  for (double e : tight.rollout.epsilon) EXPECT_EQ(e, 0.1);
}

TEST(Solve, TightenedArcSteersInward) {
  auto pb = arc_problem(ModelKind::dynamic, 15.0, 0.012);
  pb.initial.y = -0.1;  // 10 cm outward of the arc
  pb.previous_steer = std::atan(pb.vehicle.wheelbase() * pb.kappa_ref);
  pb.curvature_source = CurvatureSource::reference;
  pb.weights.lateral = 0.1;
  const auto loose = solve(pb);
  pb.policy = TighteningPolicy::mact(0.04);  // eps = 0.108 m, allowed |n| = 0.052 m < 0.1 m
  const auto tight = solve(pb);
  ASSERT_TRUE(tight.converged);
  EXPECT_GT(tight.steer.front(), loose.steer.front());
  for (std::size_t k = 1; k < tight.rollout.lateral.size(); ++k) {
    EXPECT_LE(tight.rollout.lateral[k], loose.rollout.lateral[k] + 1e-9) << k;
  }
  for (std::size_t k = 0; k < tight.steer.size(); ++k) {
    EXPECT_EQ(tight.rollout.kappa[k], pb.kappa_ref);
    EXPECT_EQ(tight.rollout.epsilon[k], epsilon(pb.policy, pb.speed, pb.kappa_ref));
  }
}

TEST(Solve, RolloutCurvatureMarginFollowsCommandedSteer) {
  // With kappa read from the plan, the margin reacts to delta_k at once while
  // n responds a step later, so a large a2 makes steering less locally cheaper.
  auto pb = arc_problem(ModelKind::dynamic, 15.0, 0.012);
  pb.initial.y = -0.1;
  pb.previous_steer = std::atan(pb.vehicle.wheelbase() * pb.kappa_ref);
  const auto loose = solve(pb);
  pb.policy = TighteningPolicy::mact(0.04);
  const auto tight = solve(pb);
  EXPECT_LT(tight.steer.front(), loose.steer.front());
  EXPECT_LE(tight.cost_history.back(), tight.cost_history.front());
  for (std::size_t k = 0; k < tight.steer.size(); ++k) {
    EXPECT_EQ(tight.rollout.kappa[k], std::tan(tight.steer[k]) / pb.vehicle.wheelbase());
    EXPECT_EQ(tight.rollout.epsilon[k], epsilon(pb.policy, pb.speed, tight.rollout.kappa[k]));
  }
}

TEST(Solve, NoneEqualsZeroCoefficientBitForBit) {
  auto pb = arc_problem(ModelKind::dynamic, 17.0, 0.015);
  pb.initial.y = -0.08;
  pb.policy = TighteningPolicy::none();
  const auto a = solve(pb);
  pb.policy = TighteningPolicy::mact(0.0);
  const auto b = solve(pb);
  pb.policy = TighteningPolicy::tube(0.0, 17.0, 0.015);
  const auto c = solve(pb);
  EXPECT_EQ(a.steer, b.steer);
  EXPECT_EQ(a.steer, c.steer);
  EXPECT_EQ(a.cost, b.cost);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Solve, WarmResolveIsFixedPoint) {
  for (double y0 : {-0.08, 0.0, 0.05}) {
    auto pb = arc_problem(ModelKind::dynamic, 15.0, 0.012);
    pb.initial.y = y0;
    pb.policy = TighteningPolicy::mact(0.0134);
    pb.curvature_source = CurvatureSource::reference;
    const auto first = solve(pb);
    ASSERT_TRUE(first.converged);
    const auto again = solve(pb, first.increments);
    EXPECT_LE(again.iterations, 2) << y0;
    EXPECT_LE(again.cost, first.cost * (1.0 + kRoundingAllowance));
  }
}

TEST(Solve, WithinBudget) {
  auto pb = arc_problem(ModelKind::dynamic, 17.0, 0.015);
  pb.initial.y = -0.08;
  pb.policy = TighteningPolicy::mact(0.0134);
  pb.curvature_source = CurvatureSource::reference;
  double worst = 0.0;
  for (int i = 0; i < 5; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    (void)solve(pb);
    worst = std::max(worst, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  EXPECT_LE(worst, 50.0);
}

TEST(Solve, RejectsInvalidProblems) {
  ShootingProblem pb;
  pb.horizon = 0;
  EXPECT_THROW(solve(pb), std::invalid_argument);
  pb = ShootingProblem{};
  pb.weights.lateral = -1.0;
  EXPECT_THROW(solve(pb), std::invalid_argument);
  pb = ShootingProblem{};
  const std::vector<double> wrong(3, 0.0);
  EXPECT_THROW(solve(pb, wrong), std::invalid_argument);
}

TEST(WarmStart, ShiftDropsFirstAndPadsZero) {
  const std::vector<double> z{1, 2, 3};
  EXPECT_EQ(shift_warm_start(z), (std::vector<double>{2, 3, 0}));
}

// --- MPC --------------------------------------------------------------------

namespace {

ShootingProblem mpc_template_default() {
  ShootingProblem pb;
  pb.curvature_source = CurvatureSource::reference;
  return pb;
}

}  // namespace

TEST(Mpc, CenterlineStraightRoadHoldsZeroSteer) {
  ClosedLoopScenario sc;
  sc.kappa = 0.0;
  sc.entry_offset = 0.0;
  sc.duration = 1.0;
  const auto tr = run_closed_loop(sc, mpc_template_default(), TighteningPolicy::none());
  for (double d : tr.steer) EXPECT_LT(std::abs(d), 1e-9);
  EXPECT_LT(tr.peak_abs_crosstrack(), 1e-9);
}

TEST(Mpc, AllPoliciesStayInLaneOnFigureScenario) {
  ClosedLoopScenario sc;  // (15, 0.012), entry -8 cm
  const double a2 = 0.0134;
  for (const auto& pol : {TighteningPolicy::none(), TighteningPolicy::tube(a2, 17.0, 0.015),
                          TighteningPolicy::adaptive(0.1, 0.5), TighteningPolicy::mact(a2)}) {
    const auto tr = run_closed_loop(sc, mpc_template_default(), pol);
    EXPECT_LE(tr.peak_abs_crosstrack(), 0.16) << to_string(pol.kind);
    EXPECT_EQ(tr.control_time.size(), 60u);
    EXPECT_EQ(tr.plant_time.size(), 601u);
  }
}

TEST(Mpc, WarmStartedStepFromUnchangedStateIsFixedPoint) {
  auto tmpl = mpc_template_default();
  tmpl.speed = 15.0;
  tmpl.kappa_ref = 0.012;
  const DynState plant{0.0, -0.08, 0.0, 0.0, 0.0};
  const auto pol = TighteningPolicy::mact(0.0134);
  const auto first = mpc_step(ControllerState{}, plant, tmpl, pol);
  ControllerState same;
  same.warm_increments = first.solution.increments;
  const auto again = mpc_step(same, plant, tmpl, pol);
  EXPECT_LE(again.solution.iterations, 2);
  EXPECT_NEAR(again.steer, first.steer, 1e-6);
}

TEST(Mpc, AdaptiveEstimatorClockStartsAtScenarioStart) {
  auto tmpl = mpc_template_default();
  tmpl.kappa_ref = 0.012;
  const auto pol = TighteningPolicy::adaptive(0.1, 0.5);
  ControllerState ctrl;
  DynState plant{0.0, -0.05, 0.0, 0.0, 0.0};  // 5 cm outward
  for (int k = 0; k < 12; ++k) {
    const auto st = mpc_step(ctrl, plant, tmpl, pol);
    EXPECT_NEAR(st.next.estimator.elapsed, k * tmpl.dt, 1e-12);
    if (k * tmpl.dt < 0.5 - 1e-9) EXPECT_EQ(st.epsilon, 0.0) << k;
    ctrl = st.next;
  }
  EXPECT_GT(ctrl.estimator.a2_hat, 0.0);
}

TEST(Mpc, DivergenceIsReported) {
  ClosedLoopScenario sc;
  sc.kappa = 0.1;
  sc.duration = 3.0;
  auto tmpl = mpc_template_default();
  tmpl.delta_max = 0.01;
  EXPECT_THROW(run_closed_loop(sc, tmpl, TighteningPolicy::none()), SimulationError);
}

TEST(Mpc, RejectsMisalignedTiming) {
  ClosedLoopScenario sc;
  sc.plant_dt = 0.007;
  EXPECT_THROW(run_closed_loop(sc, mpc_template_default(), TighteningPolicy::none()), std::invalid_argument);
}
