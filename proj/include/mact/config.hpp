#pragma once

/**
 * @file
 * @brief Run configuration: defaults, JSON file loading with strict key
 * checking, and a canonical JSON form for provenance hashing.
 *
 * Precedence is defaults < config file < command-line flags; the CLI applies
 * flags after load_config().
 */

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mact/errors.hpp"
#include "mact/mismatch.hpp"
#include "mact/report.hpp"
#include "mact/shooting.hpp"
#include "mact/tightening.hpp"
#include "mact/vehicle_models.hpp"

namespace mact {

struct OpenLoopConfig {
  double dt{0.01};
  double horizon{1.5};
};

struct LeanConfig {
  double horizon{4.0};
  double lane_width{0.75};
  double demo_speed{3.5};
  double demo_kappa{0.03};
};

struct PolicyConfig {
  double a2{0.404};                   ///< open-loop MACT coefficient quoted for Exp. 1
  std::optional<double> a2_exp5;      ///< unset: calibrated a2_safe of the Exp. 4 grid
  std::optional<double> fixed_margin; ///< unset: largest eps* of the Exp. 5 grid
  std::optional<double> a2_cl;        ///< unset: closed-loop calibration pass
  double safety_factor{0.1};
  double ema_alpha{0.1};
  double warmup{0.5};
  std::vector<PolicyKind> closed_loop_policies{PolicyKind::none, PolicyKind::tube, PolicyKind::adaptive,
                                               PolicyKind::mact};
};

struct SolverConfig {
  int horizon{20};
  double dt{0.05};
  int substeps{2};
  CostWeights weights;
  double delta_max{0.35};
  double ddelta_max{1.5};
  double lane_half_width{0.16};
  double tolerance{1e-6};
  int max_iterations{100};
  ModelKind mpc_model{ModelKind::dynamic};
  double solve_budget_ms{50.0};
};

struct ClosedLoopConfig {
  double entry_offset{-0.08};
  double duration{3.0};
  double plant_dt{0.005};
  double entry_window{0.5};
};

struct CertificateConfig {
  int trials{100};
  std::uint64_t seed{20240917};
};

struct RunConfig {
  VehicleParams vehicle;
  LeanBikeParams lean_bike;
  std::vector<int> experiments{1, 2, 3, 4, 5, 6, 7, 8};
  std::string output_dir{"out"};
  unsigned workers{0};
  OpenLoopConfig open_loop;
  LeanConfig lean;
  PolicyConfig policy;
  SolverConfig solver;
  ClosedLoopConfig closed_loop;
  CertificateConfig certificate;

  /// Throws ConfigError naming the offending key.
  void validate() const {
    auto need = [](bool ok, const std::string& key, const std::string& what) {
      if (!ok) throw ConfigError(key + ": " + what);
    };
    try {
      vehicle.validate();
    } catch (const ModelDomainError& e) {
      throw ConfigError(std::string("vehicle: ") + e.what());
    }
    try {
      lean_bike.validate();
    } catch (const ModelDomainError& e) {
      throw ConfigError(std::string("lean_bike: ") + e.what());
    }
    for (int e : experiments) need(e >= 1 && e <= 8, "experiments", "ids must be in 1..8");
    need(!output_dir.empty(), "output_dir", "must not be empty");
    need(open_loop.dt > 0.0, "open_loop.dt", "must be positive");
    need(open_loop.horizon >= open_loop.dt, "open_loop.horizon", "must be at least one step");
    need(lean.horizon > 0.0, "lean.horizon", "must be positive");
    need(lean.lane_width > 0.0, "lean.lane_width", "must be positive");
    need(lean.demo_speed > 0.0, "lean.demo_speed", "must be positive");
    need(policy.a2 >= 0.0, "policy.a2", "must be non-negative");
    need(!policy.a2_exp5 || *policy.a2_exp5 >= 0.0, "policy.a2_exp5", "must be non-negative");
    need(!policy.fixed_margin || *policy.fixed_margin >= 0.0, "policy.fixed_margin", "must be non-negative");
    need(!policy.a2_cl || *policy.a2_cl >= 0.0, "policy.a2_cl", "must be non-negative");
    need(policy.safety_factor >= 0.0, "policy.safety_factor", "must be non-negative");
    need(policy.ema_alpha > 0.0 && policy.ema_alpha <= 1.0, "policy.ema_alpha", "must be in (0, 1]");
    need(policy.warmup >= 0.0, "policy.warmup", "must be non-negative");
    need(!policy.closed_loop_policies.empty(), "policy.closed_loop_policies", "must not be empty");
    need(solver.horizon >= 1, "solver.horizon", "must be >= 1");
    need(solver.dt > 0.0, "solver.dt", "must be positive");
    need(solver.substeps >= 1, "solver.substeps", "must be >= 1");
    need(solver.delta_max > 0.0, "solver.delta_max", "must be positive");
    need(solver.ddelta_max > 0.0, "solver.ddelta_max", "must be positive");
    need(solver.lane_half_width > 0.0, "solver.lane_half_width", "must be positive");
    need(solver.tolerance > 0.0, "solver.tolerance", "must be positive");
    need(solver.max_iterations >= 1, "solver.max_iterations", "must be >= 1");
    const auto& w = solver.weights;
    need(w.lateral >= 0 && w.heading >= 0 && w.steer >= 0 && w.steer_rate >= 0 && w.slack >= 0, "solver.weights",
         "must be non-negative");
    need(closed_loop.duration > 0.0, "closed_loop.duration", "must be positive");
    need(closed_loop.plant_dt > 0.0, "closed_loop.plant_dt", "must be positive");
    need(closed_loop.entry_window >= 0.0, "closed_loop.entry_window", "must be non-negative");
    need(certificate.trials >= 1, "certificate.trials", "must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// JSON mapping.

namespace detail {

/// Walks one JSON object, remembering which keys were consumed.
class ObjectReader {
 public:
  ObjectReader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!obj_.contains(key)) return;
    seen_.insert(key);
    const Json& v = obj_.at(key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError("expected a number");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.get<std::int64_t>() < 0) throw ConfigError("expected a non-negative integer");
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("expected a string");
      }
      out = v.get<T>();
    } catch (const ConfigError& e) {
      throw ConfigError(key_path(key) + ": " + e.what());
    } catch (const Json::exception& e) {
      throw ConfigError(key_path(key) + ": " + e.what());
    }
  }

  void read_optional(const std::string& key, std::optional<double>& out) {
    if (!obj_.contains(key)) return;
    if (obj_.at(key).is_null()) {
      seen_.insert(key);
      out.reset();
      return;
    }
    double v = 0.0;
    read(key, v);
    out = v;
  }

  const Json* child(const std::string& key) {
    if (!obj_.contains(key)) return nullptr;
    seen_.insert(key);
    return &obj_.at(key);
  }

  /// Throws on any key that no read() consumed.
  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(key_path(it.key()) + ": unknown key");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  const Json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

inline ModelKind parse_model_kind(const std::string& s, const std::string& key) {
  if (s == "dynamic") return ModelKind::dynamic;
  if (s == "kinematic") return ModelKind::kinematic;
  throw ConfigError(key + ": expected \"dynamic\" or \"kinematic\", got \"" + s + "\"");
}

inline std::string model_kind_name(ModelKind k) { return k == ModelKind::dynamic ? "dynamic" : "kinematic"; }

inline Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace detail

/// Parse "1,3,5" or "all".
inline std::vector<int> parse_experiment_list(const std::string& text) {
  if (text == "all") return {1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string tok = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      std::size_t used = 0;
      const int id = std::stoi(tok, &used);
      if (used != tok.size() || id < 1 || id > 8) throw std::invalid_argument(tok);
      out.push_back(id);
    } catch (const std::exception&) {
      throw ConfigError("experiments: bad id '" + tok + "' (expected 1..8 or all)");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::vector<PolicyKind> parse_policy_list(const std::string& text) {
  std::vector<PolicyKind> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string tok = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const auto k = parse_policy(tok);
    if (!k) throw ConfigError("policy: unknown policy '" + tok + "'");
    out.push_back(*k);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

inline RunConfig config_from_json(const Json& doc) {
  RunConfig c;
  detail::ObjectReader root(doc, "");
  if (const Json* j = root.child("vehicle")) {
    detail::ObjectReader r(*j, "vehicle");
    r.read("mass", c.vehicle.mass);
    r.read("yaw_inertia", c.vehicle.yaw_inertia);
    r.read("dist_front", c.vehicle.dist_front);
    r.read("dist_rear", c.vehicle.dist_rear);
    r.read("stiffness_front", c.vehicle.stiffness_front);
    r.read("stiffness_rear", c.vehicle.stiffness_rear);
    r.finish();
  }
  if (const Json* j = root.child("lean_bike")) {
    detail::ObjectReader r(*j, "lean_bike");
    r.read("wheelbase", c.lean_bike.wheelbase);
    r.read("com_height", c.lean_bike.com_height);
    r.read("gravity", c.lean_bike.gravity);
    r.read("k1", c.lean_bike.k1);
    r.read("k2", c.lean_bike.k2);
    r.read("k3", c.lean_bike.k3);
    r.finish();
  }
  if (const Json* j = root.child("experiments")) {
    if (j->is_string()) {
      c.experiments = parse_experiment_list(j->get<std::string>());
    } else if (j->is_array()) {
      c.experiments.clear();
      for (const auto& e : *j) {
        if (!e.is_number_integer()) throw ConfigError("experiments: expected integer ids");
        c.experiments.push_back(e.get<int>());
      }
    } else {
      throw ConfigError("experiments: expected \"all\", a comma list, or an array of ids");
    }
  }
  root.read("output_dir", c.output_dir);
  root.read("workers", c.workers);
  if (const Json* j = root.child("open_loop")) {
    detail::ObjectReader r(*j, "open_loop");
    r.read("dt", c.open_loop.dt);
    r.read("horizon", c.open_loop.horizon);
    r.finish();
  }
  if (const Json* j = root.child("lean")) {
    detail::ObjectReader r(*j, "lean");
    r.read("horizon", c.lean.horizon);
    r.read("lane_width", c.lean.lane_width);
    r.read("demo_speed", c.lean.demo_speed);
    r.read("demo_kappa", c.lean.demo_kappa);
    r.finish();
  }
  if (const Json* j = root.child("policy")) {
    detail::ObjectReader r(*j, "policy");
    r.read("a2", c.policy.a2);
    r.read_optional("a2_exp5", c.policy.a2_exp5);
    r.read_optional("fixed_margin", c.policy.fixed_margin);
    r.read_optional("a2_cl", c.policy.a2_cl);
    r.read("safety_factor", c.policy.safety_factor);
    r.read("ema_alpha", c.policy.ema_alpha);
    r.read("warmup", c.policy.warmup);
    if (const Json* p = r.child("closed_loop_policies")) {
      if (!p->is_array()) throw ConfigError("policy.closed_loop_policies: expected an array of names");
      c.policy.closed_loop_policies.clear();
      for (const auto& e : *p) {
        if (!e.is_string()) throw ConfigError("policy.closed_loop_policies: expected policy names");
        const auto k = parse_policy(e.get<std::string>());
        if (!k) throw ConfigError("policy.closed_loop_policies: unknown policy '" + e.get<std::string>() + "'");
        c.policy.closed_loop_policies.push_back(*k);
      }
    }
    r.finish();
  }
  if (const Json* j = root.child("solver")) {
    detail::ObjectReader r(*j, "solver");
    r.read("horizon", c.solver.horizon);
    r.read("dt", c.solver.dt);
    r.read("substeps", c.solver.substeps);
    r.read("delta_max", c.solver.delta_max);
    r.read("ddelta_max", c.solver.ddelta_max);
    r.read("lane_half_width", c.solver.lane_half_width);
    r.read("tolerance", c.solver.tolerance);
    r.read("max_iterations", c.solver.max_iterations);
    r.read("solve_budget_ms", c.solver.solve_budget_ms);
    std::string model = detail::model_kind_name(c.solver.mpc_model);
    r.read("mpc_model", model);
    c.solver.mpc_model = detail::parse_model_kind(model, "solver.mpc_model");
    if (const Json* w = r.child("weights")) {
      detail::ObjectReader wr(*w, "solver.weights");
      wr.read("lateral", c.solver.weights.lateral);
      wr.read("heading", c.solver.weights.heading);
      wr.read("steer", c.solver.weights.steer);
      wr.read("steer_rate", c.solver.weights.steer_rate);
      wr.read("slack", c.solver.weights.slack);
      wr.finish();
    }
    r.finish();
  }
  if (const Json* j = root.child("closed_loop")) {
    detail::ObjectReader r(*j, "closed_loop");
    r.read("entry_offset", c.closed_loop.entry_offset);
    r.read("duration", c.closed_loop.duration);
    r.read("plant_dt", c.closed_loop.plant_dt);
    r.read("entry_window", c.closed_loop.entry_window);
    r.finish();
  }
  if (const Json* j = root.child("certificate")) {
    detail::ObjectReader r(*j, "certificate");
    r.read("trials", c.certificate.trials);
    r.read("seed", c.certificate.seed);
    r.finish();
  }
  root.finish();
  c.validate();
  return c;
}

/// Canonical JSON of every setting; feeds the provenance hash.
inline Json config_to_json(const RunConfig& c) {
  Json policies = Json::array();
  for (auto k : c.policy.closed_loop_policies) policies.push_back(std::string(to_string(k)));
  const auto& v = c.vehicle;
  const auto& b = c.lean_bike;
  const auto& w = c.solver.weights;
  return Json{
      {"vehicle",
       {{"mass", v.mass},
        {"yaw_inertia", v.yaw_inertia},
        {"dist_front", v.dist_front},
        {"dist_rear", v.dist_rear},
        {"stiffness_front", v.stiffness_front},
        {"stiffness_rear", v.stiffness_rear}}},
      {"lean_bike",
       {{"wheelbase", b.wheelbase},
        {"com_height", b.com_height},
        {"gravity", b.gravity},
        {"k1", b.k1},
        {"k2", b.k2},
        {"k3", b.k3}}},
      {"experiments", c.experiments},
      {"output_dir", c.output_dir},
      {"workers", c.workers},
      {"open_loop", {{"dt", c.open_loop.dt}, {"horizon", c.open_loop.horizon}}},
      {"lean",
       {{"horizon", c.lean.horizon},
        {"lane_width", c.lean.lane_width},
        {"demo_speed", c.lean.demo_speed},
        {"demo_kappa", c.lean.demo_kappa}}},
      {"policy",
       {{"a2", c.policy.a2},
        {"a2_exp5", detail::optional_json(c.policy.a2_exp5)},
        {"fixed_margin", detail::optional_json(c.policy.fixed_margin)},
        {"a2_cl", detail::optional_json(c.policy.a2_cl)},
        {"safety_factor", c.policy.safety_factor},
        {"ema_alpha", c.policy.ema_alpha},
        {"warmup", c.policy.warmup},
        {"closed_loop_policies", policies}}},
      {"solver",
       {{"horizon", c.solver.horizon},
        {"dt", c.solver.dt},
        {"substeps", c.solver.substeps},
        {"delta_max", c.solver.delta_max},
        {"ddelta_max", c.solver.ddelta_max},
        {"lane_half_width", c.solver.lane_half_width},
        {"tolerance", c.solver.tolerance},
        {"max_iterations", c.solver.max_iterations},
        {"solve_budget_ms", c.solver.solve_budget_ms},
        {"mpc_model", detail::model_kind_name(c.solver.mpc_model)},
        {"weights",
         {{"lateral", w.lateral},
          {"heading", w.heading},
          {"steer", w.steer},
          {"steer_rate", w.steer_rate},
          {"slack", w.slack}}}}},
      {"closed_loop",
       {{"entry_offset", c.closed_loop.entry_offset},
        {"duration", c.closed_loop.duration},
        {"plant_dt", c.closed_loop.plant_dt},
        {"entry_window", c.closed_loop.entry_window}}},
      {"certificate", {{"trials", c.certificate.trials}, {"seed", c.certificate.seed}}},
  };
}

/// Hash of the settings that affect results (output_dir, workers and the experiment selection excluded).
inline std::string config_hash(const RunConfig& c) {
  Json j = config_to_json(c);
  j.erase("output_dir");
  j.erase("workers");
  j.erase("experiments");
  return fnv1a_hex(j.dump());
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = detail::read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  try {
    return config_from_json(doc);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace mact
