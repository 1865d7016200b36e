// mact_lab: run the mismatch experiments, analyse a single operating point,
// or calibrate tightening coefficients.
//
// Settings precedence (later wins): built-in defaults, --config file, flags.
// Output directory: --out, else "output_dir" from the config file, else
// $MACT_LAB_OUT, else ./out.
//
// Exit codes: 0 all checks passed, 1 runtime failure or failed check,
// 2 bad configuration or command line.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mact/mact.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct CommonOptions {
  std::string config_path;
  std::optional<unsigned> workers;
};

mact::RunConfig load_base_config(const CommonOptions& o) {
  mact::RunConfig cfg = o.config_path.empty() ? mact::RunConfig{} : mact::load_config(o.config_path);
  if (o.workers) cfg.workers = *o.workers;
  return cfg;
}

bool config_sets_output_dir(const std::string& path) {
  if (path.empty()) return false;
  return mact::Json::parse(mact::detail::read_file(path)).contains("output_dir");
}

std::vector<double> parse_number_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw mact::ConfigError(flag + ": not a number: \"" + item + "\"");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

void write_json(const std::string& path, const mact::Json& doc) {
  if (!path.empty()) mact::detail::write_file(path, doc.dump(2) + "\n");
}

// --- run --------------------------------------------------------------------

struct RunOptions {
  CommonOptions common;
  std::optional<std::string> exp;
  std::string out;
  std::string policy;
  std::optional<double> a2;
};

int cmd_run(const RunOptions& o) {
  mact::RunConfig cfg = load_base_config(o.common);
  if (o.exp) cfg.experiments = mact::parse_experiment_list(*o.exp);
  if (!o.policy.empty()) cfg.policy.closed_loop_policies = mact::parse_policy_list(o.policy);
  if (o.a2) cfg.policy.a2 = *o.a2;
  if (!o.out.empty()) {
    cfg.output_dir = o.out;
  } else if (!config_sets_output_dir(o.common.config_path)) {
    const char* env = std::getenv("MACT_LAB_OUT");
    cfg.output_dir = env && *env ? env : "out";
  }
  cfg.validate();

  bool all_passed = true;
  for (int id : cfg.experiments) {
    const auto report = mact::run_experiment(id, cfg);
    const auto dir = mact::emit(report, cfg.output_dir);
    std::size_t passed = 0;
    for (const auto& c : report.checks) passed += c.passed ? 1 : 0;
    std::cout << report.id << ": " << mact::headline(report) << "\n";
    std::cout << "  checks " << passed << "/" << report.checks.size() << " passed -> " << dir.string() << "\n";
    for (const auto& c : report.checks) {
      if (!c.passed) std::cout << "  FAILED " << c.name << ": " << c.detail << "\n";
    }
    all_passed = all_passed && report.all_passed();
  }
  return all_passed ? kExitOk : kExitRuntime;
}

// --- analyze ----------------------------------------------------------------

struct AnalyzeOptions {
  CommonOptions common;
  double v{15.0};
  double kappa{0.015};
  double horizon{1.5};
  std::optional<double> v_max;
  std::string json_path;
};

int cmd_analyze(const AnalyzeOptions& o) {
  const mact::RunConfig cfg = load_base_config(o.common);
  cfg.validate();
  const auto c = mact::mismatch_constants(cfg.vehicle);
  const double v_max = o.v_max.value_or(o.v);
  const bool outward = o.v > c.v_c;

  mact::Json doc{{"v", o.v},
                 {"kappa", o.kappa},
                 {"horizon", o.horizon},
                 {"v_c", c.v_c},
                 {"K_u", c.K_u},
                 {"regime", outward ? "outward" : "inward"},
                 {"delta_r_ss", mact::steady_state_yaw_deficit(o.v, o.kappa, c)},
                 {"c_trans", mact::transient_coefficient(o.v, o.kappa, c.v_c)},
                 {"c_ss", mact::steady_coefficient(o.v, o.kappa, c)},
                 {"v_max", v_max},
                 {"a2_anal", v_max > c.v_c ? mact::Json(mact::a2_analytical(v_max, o.horizon, c)) : mact::Json(nullptr)},
                 {"eps_star", mact::measure_peak_deviation(o.v, o.kappa, o.horizon, mact::ModelKind::dynamic,
                                                           cfg.vehicle, cfg.open_loop.dt)}};
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    std::cout << it.key() << "=" << (it.value().is_string() ? it.value().get<std::string>() : it.value().dump()) << "\n";
  }
  write_json(o.json_path, doc);
  return kExitOk;
}

// --- calibrate --------------------------------------------------------------

struct CalibrateOptions {
  CommonOptions common;
  std::string mode{"open"};
  std::string speeds;
  std::string curvatures;
  std::optional<double> horizon;
  std::optional<double> safety_factor;
  std::string json_path;
};

int cmd_calibrate(const CalibrateOptions& o) {
  mact::RunConfig cfg = load_base_config(o.common);
  if (o.safety_factor) cfg.policy.safety_factor = *o.safety_factor;
  cfg.validate();
  const bool closed = o.mode == "closed";
  mact::ScenarioGrid grid = closed ? mact::closed_loop_grid(cfg.closed_loop.duration)
                                   : mact::open_loop_grid(cfg.open_loop.horizon);
  if (!o.speeds.empty()) grid.speeds = parse_number_list(o.speeds, "--speeds");
  if (!o.curvatures.empty()) grid.curvatures = parse_number_list(o.curvatures, "--curvatures");
  if (o.horizon) grid.horizon = *o.horizon;
  try {
    grid.validate();
  } catch (const std::invalid_argument& e) {
    throw mact::ConfigError(e.what());
  }

  mact::Json doc{{"mode", o.mode}, {"speeds", grid.speeds}, {"curvatures", grid.curvatures}, {"horizon", grid.horizon}};
  if (closed) {
    const auto cal = mact::calibrate_a2_cl(grid, cfg.policy.safety_factor, cfg);
    doc["safety_factor"] = cfg.policy.safety_factor;
    doc["a2_fit"] = mact::fit_scaling(cal.samples).a2;
    doc["a2_cl"] = cal.a2_cl;
    std::cout << "a2_fit=" << doc["a2_fit"].dump() << "\na2_cl=" << doc["a2_cl"].dump() << " (safety factor "
              << cfg.policy.safety_factor << ")\n";
  } else {
    const auto fit =
        mact::fit_scaling(mact::measure_grid(grid, cfg.vehicle, cfg.open_loop.dt, cfg.workers));
    doc["a2"] = fit.a2;
    doc["r_squared"] = fit.r_squared;
    doc["a2_safe"] = fit.a2_safe;
    std::cout << "a2=" << doc["a2"].dump() << "\nr_squared=" << doc["r_squared"].dump()
              << "\na2_safe=" << doc["a2_safe"].dump() << "\n";
  }
  write_json(o.json_path, doc);
  return kExitOk;
}

void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--config", o.config_path, "JSON config file (unknown keys are rejected)")->check(CLI::ExistingFile);
  sub->add_option("--workers", o.workers, "worker threads (0 = one per core)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kinematic/dynamic mismatch lab with mismatch-aware constraint tightening"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "run experiments and write out/<expN>/ reports");
  add_common(run_cmd, run.common);
  run_cmd->add_option("--exp", run.exp, "experiment ids, e.g. 1,3,8 or all (default: all, or the config list)");
  run_cmd->add_option("--out", run.out, "output directory");
  run_cmd->add_option("--policy", run.policy, "closed-loop policies for exp 8, e.g. mact,tube");
  run_cmd->add_option("--a2", run.a2, "open-loop MACT coefficient [s^2]");

  AnalyzeOptions an;
  auto* an_cmd = app.add_subcommand("analyze", "closed-form mismatch quantities and measured eps* at one point");
  add_common(an_cmd, an.common);
  an_cmd->add_option("--v", an.v, "speed [m/s]")->capture_default_str();
  an_cmd->add_option("--kappa", an.kappa, "curvature [1/m]")->capture_default_str();
  an_cmd->add_option("--T", an.horizon, "horizon [s]")->capture_default_str();
  an_cmd->add_option("--v-max", an.v_max, "speed bound for a2_anal (default: --v)");
  an_cmd->add_option("--json", an.json_path, "also write the printed values to this JSON file");

  CalibrateOptions cal;
  auto* cal_cmd = app.add_subcommand("calibrate", "fit a2_safe (open loop) or a2_cl (closed loop) on a grid");
  add_common(cal_cmd, cal.common);
  cal_cmd->add_option("--mode", cal.mode, "open or closed")->check(CLI::IsMember({"open", "closed"}))->capture_default_str();
  cal_cmd->add_option("--speeds", cal.speeds, "comma-separated speeds [m/s]");
  cal_cmd->add_option("--curvatures", cal.curvatures, "comma-separated curvatures [1/m]");
  cal_cmd->add_option("--T", cal.horizon, "open-loop horizon or closed-loop duration [s]");
  cal_cmd->add_option("--safety-factor", cal.safety_factor, "closed-loop safety factor");
  cal_cmd->add_option("--json", cal.json_path, "also write the printed values to this JSON file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*an_cmd) return cmd_analyze(an);
    return cmd_calibrate(cal);
  } catch (const mact::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
