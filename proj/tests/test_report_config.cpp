#include <cmath>
#include <filesystem>
#include <limits>
#include <string>

#include <gtest/gtest.h>

#include "mact/config.hpp"
#include "mact/report.hpp"

using namespace mact;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mact_lab_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Table sample_table() {
  Table t;
  t.name = "scenarios";
  t.description = "per-scenario margins";
  t.columns = {"v", "kappa", "label", "count"};
  t.add_row({13.0, 0.005, std::string("plain"), std::int64_t{3}});
  t.add_row({0.1 + 0.2, 1.0 / 3.0, std::string("has space"), std::int64_t{-7}});
  t.add_row({std::numeric_limits<double>::quiet_NaN(), 1e-300, std::string("-"), std::int64_t{0}});
  return t;
}

ExperimentReport sample_report() {
  ExperimentReport r;
  r.id = "exp9";
  r.tables.push_back(sample_table());
  r.summary = {{"inputs", {{"a2", 0.404}}}, {"results", {{"eps", 0.1 + 0.2}, {"ok", true}, {"list", {1.5, 2.5}}}}};
  r.checks.push_back({"exp9.first", true, "fine"});
  r.checks.push_back({"exp9.second", false, "off by 3%"});
  r.provenance.config_hash = "0123456789abcdef";
  r.provenance.seed = 42;
  return r;
}

}  // namespace

TEST(Csv, HeaderCommentNamesColumns) {
  const std::string csv = to_csv(sample_table());
  EXPECT_EQ(csv.rfind("# per-scenario margins | columns: v,kappa,label,count\nv,kappa,label,count\n", 0), 0u);
}

TEST(Csv, RoundTripIsExact) {
  const Table t = sample_table();
  const Table back = parse_csv(to_csv(t), t.name);
  EXPECT_EQ(back.description, t.description);
  EXPECT_EQ(back.columns, t.columns);
  ASSERT_EQ(back.rows.size(), t.rows.size());
  const auto v = back.numbers("v");
  EXPECT_EQ(v[0], 13.0);
  EXPECT_EQ(v[1], 0.1 + 0.2);
  EXPECT_TRUE(std::isnan(v[2]));
  EXPECT_EQ(back.numbers("kappa")[1], 1.0 / 3.0);
  EXPECT_EQ(back.numbers("kappa")[2], 1e-300);
  EXPECT_EQ(back.strings("label"), (std::vector<std::string>{"plain", "has space", "-"}));
  EXPECT_EQ(back.numbers("count"), (std::vector<double>{3, -7, 0}));
  EXPECT_EQ(to_csv(back), to_csv(t));
}

TEST(Csv, RejectsDelimitersInTextCells) {
  for (const char* bad : {"a,b", "a\"b", "a\nb"}) {
    Table t{"x", "d", {"c"}, {}};
    t.add_row({std::string(bad)});
    EXPECT_THROW(to_csv(t), std::invalid_argument);
  }
}

TEST(Csv, RejectsMissingHeaderAndBadWidth) {
  EXPECT_THROW(parse_csv("", "x"), IoError);
  EXPECT_THROW(parse_csv("a,b\n1,2,3\n", "x"), IoError);
  EXPECT_THROW((void)sample_table().column_index("nope"), std::out_of_range);
}

TEST(Report, EmitLoadClosesSummary) {
  const auto dir = scratch_dir("emit");
  const auto r = sample_report();
  const auto out = emit(r, dir);
  EXPECT_EQ(out, dir / "exp9");
  EXPECT_TRUE(fs::exists(out / "scenarios.csv"));
  EXPECT_TRUE(fs::exists(out / "summary.json"));
  const auto back = load_report(out);
  EXPECT_EQ(back.id, "exp9");
  EXPECT_TRUE(summary_mismatches(r.summary, back.summary).empty());
  ASSERT_EQ(back.checks.size(), 2u);
  EXPECT_FALSE(back.checks[1].passed);
  EXPECT_EQ(back.checks[1].detail, "off by 3%");
  EXPECT_EQ(back.provenance.config_hash, "0123456789abcdef");
  EXPECT_EQ(back.provenance.seed, 42u);
  EXPECT_EQ(to_csv(back.table("scenarios")), to_csv(r.table("scenarios")));
}

TEST(Report, ReEmitIsByteIdentical) {
  const auto a = scratch_dir("re_a");
  const auto b = scratch_dir("re_b");
  const auto first = emit(sample_report(), a);
  const auto second = emit(load_report(first), b);
  for (const char* f : {"summary.json", "scenarios.csv"}) {
    EXPECT_EQ(detail::read_file(first / f), detail::read_file(second / f)) << f;
  }
}

TEST(Report, SummaryDocumentLayout) {
  const Json doc = summary_document(sample_report());
  for (const char* key : {"experiment", "summary", "provenance", "checks", "tables"}) {
    EXPECT_TRUE(doc.contains(key)) << key;
  }
  EXPECT_EQ(doc["experiment"], "exp9");
  EXPECT_TRUE(doc["summary"].contains("inputs"));
  EXPECT_EQ(doc["tables"][0], "scenarios.csv");
}

TEST(Report, MismatchesReportPaths) {
  const Json a = {{"x", 1.0}, {"y", {{"z", 2.0}}}, {"s", "a"}};
  Json b = a;
  EXPECT_TRUE(summary_mismatches(a, b).empty());
  b["y"]["z"] = 2.0 + 1e-9;
  b["s"] = "b";
  const auto bad = summary_mismatches(a, b);
  ASSERT_EQ(bad.size(), 2u);
  EXPECT_NE(bad[0].find("y"), std::string::npos);
  EXPECT_TRUE(summary_mismatches(a, b, 1e-6).size() == 1u);
}

TEST(Report, LoadMissingDirectoryThrows) {
  EXPECT_THROW(load_report("/nonexistent/mact/exp1"), IoError);
}

TEST(Config, DefaultsAreValid) {
  const RunConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.experiments.size(), 8u);
  EXPECT_EQ(c.policy.a2, 0.404);
  EXPECT_EQ(c.certificate.seed, 20240917u);
  EXPECT_EQ(c.solver.horizon, 20);
  EXPECT_EQ(c.closed_loop.plant_dt, 0.005);
}

TEST(Config, JsonRoundTrip) {
  RunConfig c;
  c.policy.a2_exp5 = 0.5;
  c.solver.mpc_model = ModelKind::kinematic;
  c.experiments = {2, 8};
  c.workers = 3;
  const RunConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, HashIgnoresOutputSelectionAndWorkers) {
  RunConfig a, b;
  b.output_dir = "elsewhere";
  b.workers = 7;
  b.experiments = {1};
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.policy.a2 = 0.5;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, UnknownKeyNamesPath) {
  try {
    (void)config_from_json(Json::parse(R"({"solver": {"horizon": 20, "horizn": 3}})"));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("solver.horizn"), std::string::npos) << e.what();
  }
}

TEST(Config, BadValueNamesPath) {
  const char* bad[][2] = {
      {R"({"policy": {"a2": "big"}})", "policy.a2"},
      {R"({"solver": {"horizon": 0}})", "solver.horizon"},
      {R"({"vehicle": {"mass": -1}})", "vehicle"},
      {R"({"solver": {"mpc_model": "bicycle"}})", "solver.mpc_model"},
      {R"({"workers": -2})", "workers"},
      {R"({"experiments": [9]})", "experiments"},
  };
  for (const auto& [text, key] : bad) {
    try {
      (void)config_from_json(Json::parse(text));
      ADD_FAILURE() << "accepted " << text;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
    }
  }
}

TEST(Config, LoadFileErrors) {
  const auto dir = scratch_dir("cfg");
  EXPECT_THROW(load_config(dir / "missing.json"), ConfigError);
  detail::write_file(dir / "broken.json", "{ not json");
  EXPECT_THROW(load_config(dir / "broken.json"), ConfigError);
  detail::write_file(dir / "ok.json", R"({"experiments": "1,3", "policy": {"a2_exp5": null}})");
  const auto c = load_config(dir / "ok.json");
  EXPECT_EQ(c.experiments, (std::vector<int>{1, 3}));
  EXPECT_FALSE(c.policy.a2_exp5.has_value());
}

TEST(Config, ParseLists) {
  EXPECT_EQ(parse_experiment_list("all").size(), 8u);
  EXPECT_EQ(parse_experiment_list("8,1"), (std::vector<int>{8, 1}));
  EXPECT_THROW(parse_experiment_list("0"), ConfigError);
  EXPECT_THROW(parse_experiment_list("1,,2"), ConfigError);
  EXPECT_THROW(parse_experiment_list("2x"), ConfigError);
  EXPECT_EQ(parse_policy_list("mact,tube"), (std::vector<PolicyKind>{PolicyKind::mact, PolicyKind::tube}));
  EXPECT_THROW(parse_policy_list("mact,"), ConfigError);
}
