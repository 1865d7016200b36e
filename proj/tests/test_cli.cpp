#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "mact/report.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
};

Result run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " \"" MACT_LAB_EXE "\" " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return {-1, ""};
  std::string out;
  std::array<char, 512> buf{};
  while (std::fgets(buf.data(), buf.size(), p)) out += buf.data();
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mact_lab_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Cli, RunExp1PrintsHeadlineAndWritesReport) {
  const auto dir = scratch("exp1");
  const auto r = run("run --exp 1 --out " + dir.string());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("exp1: eps_star=1.04m mact_eps=1.36m certificate=OK"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(dir / "exp1" / "summary.json"));
  EXPECT_TRUE(fs::exists(dir / "exp1" / "trajectory.csv"));
}

TEST(Cli, OutputDirFallsBackToEnvironment) {
  const auto dir = scratch("env");
  const auto r = run("run --exp 4", "MACT_LAB_OUT=" + dir.string());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(dir / "exp4" / "grid.csv"));
}

TEST(Cli, ConfigOutputDirBeatsEnvironment) {
  const auto dir = scratch("cfgout");
  const auto cfg = dir / "c.json";
  mact::detail::write_file(cfg, "{\"output_dir\": \"" + (dir / "from_cfg").string() + "\", \"experiments\": [3]}");
  const auto r = run("run --config " + cfg.string(), "MACT_LAB_OUT=" + (dir / "from_env").string());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(dir / "from_cfg" / "exp3" / "sweep.csv"));
  EXPECT_FALSE(fs::exists(dir / "from_env"));
}

TEST(Cli, BadConfigExitsTwo) {
  const auto dir = scratch("bad");
  const auto cfg = dir / "c.json";
  mact::detail::write_file(cfg, R"({"solver": {"horizon": -1}})");
  const auto r = run("run --exp 1 --config " + cfg.string() + " --out " + dir.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("solver.horizon"), std::string::npos) << r.out;
  EXPECT_EQ(run("run --exp 1 --frobnicate").code, 2);
  EXPECT_EQ(run("run --exp 12 --out " + dir.string()).code, 2);
  EXPECT_EQ(run("").code, 2);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run("--help").code, 0); }

TEST(Cli, AnalyzeReportsCharacteristicSpeed) {
  const auto dir = scratch("analyze");
  const auto r = run("analyze --v 15 --kappa 0.015 --json " + (dir / "a.json").string());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("v_c=12"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("regime=outward"), std::string::npos);
  const auto doc = mact::Json::parse(mact::detail::read_file(dir / "a.json"));
  EXPECT_NEAR(doc.at("v_c").get<double>(), 12.0, 1e-9);
  EXPECT_NEAR(doc.at("eps_star").get<double>(), 1.04, 0.05 * 1.04);
  const auto slow = run("analyze --v 10 --kappa 0.015");
  EXPECT_NE(slow.out.find("regime=inward"), std::string::npos);
  EXPECT_NE(slow.out.find("a2_anal=null"), std::string::npos);
}

TEST(Cli, CalibrateOpenSingleScenario) {
  const auto dir = scratch("cal");
  const auto r = run("calibrate --mode open --speeds 15 --curvatures 0.015 --json " + (dir / "c.json").string());
  EXPECT_EQ(r.code, 0) << r.out;
  const auto doc = mact::Json::parse(mact::detail::read_file(dir / "c.json"));
  EXPECT_NEAR(doc.at("a2").get<double>(), doc.at("a2_safe").get<double>(), 1e-15);
  EXPECT_NEAR(doc.at("a2").get<double>() * 225.0 * 0.015, 1.04, 0.05 * 1.04);
  EXPECT_EQ(run("calibrate --speeds 15,x").code, 2);
  EXPECT_EQ(run("calibrate --mode sideways").code, 2);
}
