#include <algorithm>
#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "mact/experiments.hpp"

using namespace mact;
namespace fs = std::filesystem;

namespace {

RunConfig with_workers(unsigned w) {
  RunConfig c;
  c.workers = w;
  return c;
}

// Exp. 5 is reused by several tests; run it once.
const ExperimentReport& exp5_report() {
  static const ExperimentReport r = run_exp5(with_workers(0));
  return r;
}

}  // namespace

TEST(Grid, SpeedMajorOrder) {
  const auto g = open_loop_grid();
  ASSERT_EQ(g.size(), 20u);
  EXPECT_EQ(g.at(0).v, g.speeds[0]);
  EXPECT_EQ(g.at(1).kappa, g.curvatures[1]);
  EXPECT_EQ(g.at(5).v, g.speeds[1]);
  EXPECT_EQ(g.at(19).kappa, g.curvatures.back());
  ScenarioGrid bad = g;
  bad.speeds.clear();
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Grid, LinspaceEndpoints) {
  const auto x = linspace(13.0, 18.0, 11);
  ASSERT_EQ(x.size(), 11u);
  EXPECT_EQ(x.front(), 13.0);
  EXPECT_EQ(x.back(), 18.0);
  EXPECT_DOUBLE_EQ(x[1] - x[0], 0.5);
}

TEST(Determinism, WorkerCountDoesNotChangeResults) {
  const auto grid = open_loop_grid();
  const RunConfig c;
  const auto one = measure_grid(grid, c.vehicle, c.open_loop.dt, 1);
  const auto three = measure_grid(grid, c.vehicle, c.open_loop.dt, 3);
  ASSERT_EQ(one.size(), three.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(one[i].v, three[i].v);
    EXPECT_EQ(one[i].kappa, three[i].kappa);
    EXPECT_EQ(one[i].eps_star, three[i].eps_star);
  }
  const auto a = run_exp4(with_workers(1));
  const auto b = run_exp4(with_workers(3));
  EXPECT_EQ(a.summary.dump(), b.summary.dump());
  EXPECT_EQ(to_csv(a.table("grid")), to_csv(b.table("grid")));
}

TEST(Determinism, ReRunGivesByteIdenticalCsvs) {
  RunConfig c;
  c.workers = 2;
  for (int id : {1, 7, 8}) {
    const auto a = run_experiment(id, c);
    const auto b = run_experiment(id, c);
    ASSERT_EQ(a.tables.size(), b.tables.size());
    for (std::size_t i = 0; i < a.tables.size(); ++i) {
      if (a.tables[i].name == "timing") continue;  // wall-clock only
      EXPECT_EQ(to_csv(a.tables[i]), to_csv(b.tables[i])) << a.id << "/" << a.tables[i].name;
    }
  }
}

TEST(Exp5, MactWastesLessThanFixedBelowTheGridMaximum) {
  const auto& t = exp5_report().table("scenarios");
  const auto eps = t.numbers("eps_star");
  const double emax = *std::max_element(eps.begin(), eps.end());
  const auto check = [&](double fixed, double a2) {
    const auto v = t.numbers("v"), k = t.numbers("kappa");
    for (std::size_t i = 0; i < eps.size(); ++i) {
      const double wf = wasted_margin(fixed, eps[i]);
      const double wm = wasted_margin(epsilon(TighteningPolicy::mact(a2), v[i], k[i]), eps[i]);
      if (eps[i] < emax) EXPECT_LT(wm, wf) << "scenario " << i;
    }
  };
  const auto& in = exp5_report().summary.at("inputs");
  check(in.at("fixed_margin").get<double>(), in.at("a2_mact").get<double>());
  check(1.94, 0.404);
}

TEST(Exp5, GridMaximumFavoursFixedMargin) {
  // Where eps* is largest the fixed margin fits almost exactly, while
  // a2 v^2 kappa overshoots it; the two wastes are not equal there.
  const auto& t = exp5_report().table("scenarios");
  const auto eps = t.numbers("eps_star");
  const auto i = static_cast<std::size_t>(std::max_element(eps.begin(), eps.end()) - eps.begin());
  EXPECT_EQ(t.numbers("v")[i], 18.0);
  EXPECT_EQ(t.numbers("kappa")[i], 0.015);
  EXPECT_EQ(t.numbers("waste_fixed")[i], 0.0);
  EXPECT_GT(t.numbers("waste_mact")[i], 0.0);
  const double default_mact = epsilon(TighteningPolicy::mact(0.404), 18.0, 0.015);
  EXPECT_GT(wasted_margin(default_mact, eps[i]), wasted_margin(1.94, eps[i]));
}

TEST(Exp5, CsvSchema) {
  const auto& t = exp5_report().table("scenarios");
  EXPECT_EQ(t.columns, (std::vector<std::string>{"scenario", "v", "kappa", "eps_star", "eps_fixed", "eps_mact",
                                                 "waste_fixed", "waste_mact", "safe_none", "safe_fixed",
                                                 "safe_mact"}));
  EXPECT_EQ(t.rows.size(), 20u);
}

TEST(Exp5, SafetyClaimsSurviveReplay) {
  const auto& t = exp5_report().table("scenarios");
  const RunConfig c;
  const auto v = t.numbers("v"), k = t.numbers("kappa"), em = t.numbers("eps_mact"), safe = t.numbers("safe_mact");
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double replay = measure_peak_deviation(v[i], k[i], c.open_loop.horizon, ModelKind::dynamic, c.vehicle,
                                                 c.open_loop.dt);
    EXPECT_EQ(safe[i] == 1.0, em[i] >= replay) << i;
  }
}

TEST(Summary, ClosesAfterEmitAndLoad) {
  const auto dir = fs::temp_directory_path() / "mact_lab_test_summary";
  fs::remove_all(dir);
  const auto& r = exp5_report();
  const auto back = load_report(emit(r, dir));
  EXPECT_TRUE(verify_summary(back, 1e-12).empty());
  EXPECT_TRUE(summary_mismatches(r.summary, back.summary).empty());
  for (std::size_t i = 0; i < r.checks.size(); ++i) {
    EXPECT_EQ(back.checks[i].passed, r.checks[i].passed);
  }
}

TEST(Summary, TamperedTableIsDetected) {
  auto r = exp5_report();
  auto& t = r.tables[0];
  t.rows[3][t.column_index("eps_star")] = 99.0;
  EXPECT_FALSE(verify_summary(r, 1e-12).empty());
}

TEST(Exp7, StraightRoadHasNoDeviation) {
  const RunConfig c;
  for (double v : {2.5, 3.5, 4.0}) {
    EXPECT_EQ(measure_lean_peak_deviation(v, 0.0, c.lean.horizon, c.lean_bike, c.open_loop.dt), 0.0);
  }
}

TEST(Calibration, ExactSlopeWithoutSafetyFactor) {
  std::vector<ScalingSample> s;
  const double a2 = 0.0134;
  for (double v : {13.0, 15.0, 17.0}) {
    for (double k : {0.005, 0.01, 0.015}) s.push_back({v, k, a2 * v * v * k});
  }
  EXPECT_NEAR(a2_from_peaks(s, 0.0), a2, 1e-15);
  EXPECT_NEAR(a2_from_peaks(s, 0.1), 1.1 * a2, 1e-15);
}

TEST(Calibration, SingleScenario) {
  const std::vector<ScalingSample> one{{15.0, 0.012, 0.0}};
  EXPECT_EQ(a2_from_peaks(one, 0.1), 0.0);
  const std::vector<ScalingSample> pos{{15.0, 0.012, 0.027}};
  EXPECT_NEAR(a2_from_peaks(pos, 0.0), 0.027 / (225.0 * 0.012), 1e-15);
}

TEST(Calibration, ClosedLoopSinglePointMatchesTrace) {
  RunConfig c;
  ScenarioGrid g{{15.0}, {0.012}, c.closed_loop.duration};
  const auto cal = calibrate_a2_cl(g, 0.0, c);
  ASSERT_EQ(cal.samples.size(), 1u);
  const auto tr = run_closed_loop(closed_loop_scenario(c, 15.0, 0.012), mpc_template(c), TighteningPolicy::none(),
                                  solver_options(c));
  EXPECT_EQ(cal.samples[0].eps_star, tr.peak_outward_after(c.closed_loop.entry_window));
  EXPECT_GE(cal.a2_cl, 0.0);
}

TEST(Dispatch, UnknownExperimentIsConfigError) {
  EXPECT_THROW(run_experiment(0, RunConfig{}), ConfigError);
  EXPECT_THROW(run_experiment(9, RunConfig{}), ConfigError);
  EXPECT_EQ(experiment_id(3), "exp3");
}

TEST(Exp1, HeadlineFormat) {
  const auto r = run_exp1(RunConfig{});
  EXPECT_EQ(headline(r).rfind("eps_star=", 0), 0u);
  EXPECT_NE(headline(r).find("certificate="), std::string::npos);
}

TEST(Exp8, PolicyOrderingWithKinematicInternalModel) {
  RunConfig c;
  c.solver.mpc_model = ModelKind::kinematic;
  const auto r = run_exp8(c);
  const auto& res = r.summary.at("results");
  EXPECT_TRUE(res.at("ordering_adaptive_mact_tube").get<bool>());
  EXPECT_TRUE(res.at("adaptive_under_commits").get<bool>());
  EXPECT_TRUE(res.at("all_safe").get<bool>());
  EXPECT_GT(r.summary.at("inputs").at("a2_cl").get<double>(), 0.01);
  const double ratio = res.at("mact_tube_ratio").get<double>();
  EXPECT_GE(ratio, 0.55);
  EXPECT_LE(ratio, 0.75);
}

TEST(Exp8, TruthInternalModelLeavesOnlyDiscretisationDrift) {
  // Planning on the plant model leaves sub-millimetre residual drift, so the
  // calibrated coefficient is tiny and the adaptive estimate, fed by the
  // entry transient, ends up above the MACT margin.
  const auto r = run_exp8(RunConfig{});
  const auto& res = r.summary.at("results");
  EXPECT_LT(r.summary.at("inputs").at("a2_cl").get<double>(), 1e-3);
  EXPECT_GT(res.at("policies").at("adaptive").at("eps_mean").get<double>(),
            res.at("policies").at("mact").at("eps_mean").get<double>());
  EXPECT_FALSE(res.at("ordering_adaptive_mact_tube").get<bool>());
}
