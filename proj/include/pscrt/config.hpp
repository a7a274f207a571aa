// Copyright 2026 The pscrt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Run configuration for the command-line tool. Configs are JSON; every
// field has a default, unknown keys are rejected, and the fully resolved
// config is written back into each run manifest.

#pragma once

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pscrt/analysis.hpp"
#include "pscrt/core/error.hpp"
#include "pscrt/csv_io.hpp"
#include "pscrt/simulation.hpp"

namespace pscrt {

using Json = nlohmann::ordered_json;

struct Range {
  double lo = 1.0, hi = 1.0, step = 0.25;
  std::vector<double> values() const { return grid_range(lo, hi, step); }
};

struct DataConfig {
  std::string path;
  CsvSchema schema;
  double pi = 0.5;
};

struct GridConfig {
  Range alpha{0.5, 2.0, 0.25};
  Range beta{1.0, 1.0, 0.25};
  Range gamma{0.5, 2.0, 0.25};
  std::vector<std::string> estimands{"NAE_co"};
};

struct SimulationConfig {
  DGPConfig dgp;
  std::vector<Scenario> scenarios{Scenario::A};
  std::vector<Method> estimators{Method::Mo, Method::Dr, Method::Np};
  std::vector<std::string> estimands{"NAE_co", "ICE_co", "PCE_co", "NAE_nt"};
  int reps = 500;
  std::size_t population = 50000;
  int bootstrap_B = 500;
  int mo_bootstrap_B = 0;
  LearnerKind np_learner = LearnerKind::Ensemble;
};

struct RunConfig {
  DataConfig data;
  AnalysisConfig analysis;
  std::string weight_text = "cluster";  // cluster, individual or an expression
  GridConfig grid;
  SimulationConfig sim;
};

namespace detail {

inline void check_keys(const Json& j, const std::string& where, std::initializer_list<const char*> keys) {
  PSCRT_REQUIRE(j.is_object(), ErrorCode::InvalidConfig, where + " must be an object");
  std::set<std::string> allowed;
  for (const char* k : keys) allowed.insert(k);
  for (const auto& [k, v] : j.items())
    PSCRT_REQUIRE(allowed.count(k) > 0, ErrorCode::InvalidConfig, "unknown key '" + k + "' in " + where);
}

template <class T>
void read(const Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad value for '") + key + "' in " + where);
  }
}

inline void read_range(const Json& j, const char* key, Range& r, const std::string& where) {
  if (!j.contains(key)) return;
  const Json& v = j.at(key);
  if (v.is_number()) {
    r.lo = r.hi = v.get<double>();
    return;
  }
  check_keys(v, where + "." + key, {"lo", "hi", "step"});
  read(v, "lo", r.lo, where);
  read(v, "hi", r.hi, where);
  read(v, "step", r.step, where);
  (void)r.values();
}

inline Json range_json(const Range& r) { return Json{{"lo", r.lo}, {"hi", r.hi}, {"step", r.step}}; }

inline MemberKind parse_member(const std::string& s) {
  if (s == "glm") return MemberKind::Glm;
  if (s == "forest") return MemberKind::Forest;
  throw Error(ErrorCode::InvalidConfig, "unknown ensemble member '" + s + "'");
}

inline LearnerKind parse_learner(const std::string& s) {
  if (s == "glm") return LearnerKind::Glm;
  if (s == "ensemble") return LearnerKind::Ensemble;
  throw Error(ErrorCode::InvalidConfig, "unknown learner '" + s + "' (expected glm or ensemble)");
}

inline WeightSpec parse_weight(const std::string& s) {
  if (s == "cluster") return WeightSpec::cluster_average();
  if (s == "individual") return WeightSpec::individual_average();
  return WeightSpec::custom_expression(s);
}

}  // namespace detail

inline void apply_weight(RunConfig& rc, const std::string& text) {
  rc.analysis.weight = detail::parse_weight(text);
  rc.weight_text = text;
}

inline void parse_nuisance(const Json& j, NuisanceSpec& n) {
  using namespace detail;
  const std::string w = "nuisance";
  check_keys(j, w, {"learner", "p_formula", "mu_formula", "mu_strategy", "clip_eps", "members", "stack_folds", "forest"});
  std::string s;
  if (j.contains("learner")) {
    read(j, "learner", s, w);
    n.learner = parse_learner(s);
  }
  read(j, "p_formula", n.p_formula, w);
  read(j, "mu_formula", n.mu_formula, w);
  if (j.contains("mu_strategy")) {
    read(j, "mu_strategy", s, w);
    PSCRT_REQUIRE(s == "by_arm" || s == "by_cell", ErrorCode::InvalidConfig, "mu_strategy must be by_arm or by_cell");
    n.mu_strategy = s == "by_arm" ? MuStrategy::ByArm : MuStrategy::ByCell;
  }
  read(j, "clip_eps", n.clip_eps, w);
  PSCRT_REQUIRE(n.clip_eps > 0.0 && n.clip_eps < 0.5, ErrorCode::InvalidConfig, "clip_eps must lie in (0, 0.5)");
  if (j.contains("members")) {
    std::vector<std::string> m;
    read(j, "members", m, w);
    n.ensemble.members.clear();
    for (const auto& x : m) n.ensemble.members.push_back(parse_member(x));
  }
  read(j, "stack_folds", n.ensemble.stack_folds, w);
  if (j.contains("forest")) {
    const Json& f = j.at("forest");
    check_keys(f, "nuisance.forest", {"trees", "max_depth", "min_node", "bins", "mtry"});
    read(f, "trees", n.ensemble.forest.trees, w);
    read(f, "max_depth", n.ensemble.forest.max_depth, w);
    read(f, "min_node", n.ensemble.forest.min_node, w);
    read(f, "bins", n.ensemble.forest.bins, w);
    read(f, "mtry", n.ensemble.forest.mtry, w);
  }
}

inline Json nuisance_json(const NuisanceSpec& n) {
  Json m = Json::array();
  for (auto k : n.ensemble.members) m.push_back(to_string(k));
  const auto& f = n.ensemble.forest;
  return Json{{"learner", to_string(n.learner)},
              {"p_formula", n.p_formula},
              {"mu_formula", n.mu_formula},
              {"mu_strategy", n.mu_strategy == MuStrategy::ByArm ? "by_arm" : "by_cell"},
              {"clip_eps", n.clip_eps},
              {"members", m},
              {"stack_folds", n.ensemble.stack_folds},
              {"forest",
               {{"trees", f.trees}, {"max_depth", f.max_depth}, {"min_node", f.min_node}, {"bins", f.bins}, {"mtry", f.mtry}}}};
}

inline void parse_dgp(const Json& j, DGPConfig& d) {
  using namespace detail;
  const std::string w = "simulation.dgp";
  check_keys(j, w, {"K", "n_min", "n_max", "rho", "pi", "outcome_sd", "v_n", "x_v", "u0", "u_a", "u_n", "u_x", "u_v",
                    "a0", "a_n", "a_x", "d0", "d_n", "d_x", "y_x", "y_v", "y_n", "nt_control_scale",
                    "nt_treated_scale"});
  read(j, "K", d.K, w);
  read(j, "n_min", d.n_min, w);
  read(j, "n_max", d.n_max, w);
  read(j, "rho", d.rho, w);
  read(j, "pi", d.pi, w);
  read(j, "outcome_sd", d.outcome_sd, w);
  read(j, "v_n", d.v_n, w);
  read(j, "x_v", d.x_v, w);
  read(j, "u0", d.u0, w);
  read(j, "u_a", d.u_a, w);
  read(j, "u_n", d.u_n, w);
  read(j, "u_x", d.u_x, w);
  read(j, "u_v", d.u_v, w);
  read(j, "a0", d.a0, w);
  read(j, "a_n", d.a_n, w);
  read(j, "a_x", d.a_x, w);
  read(j, "d0", d.d0, w);
  read(j, "d_n", d.d_n, w);
  read(j, "d_x", d.d_x, w);
  read(j, "y_x", d.y_x, w);
  read(j, "y_v", d.y_v, w);
  read(j, "y_n", d.y_n, w);
  read(j, "nt_control_scale", d.nt_control_scale, w);
  read(j, "nt_treated_scale", d.nt_treated_scale, w);
  d.validate();
}

inline Json dgp_json(const DGPConfig& d) {
  return Json{{"K", d.K},         {"n_min", d.n_min},
              {"n_max", d.n_max}, {"rho", d.rho},
              {"pi", d.pi},       {"outcome_sd", d.outcome_sd},
              {"v_n", d.v_n},     {"x_v", d.x_v},
              {"u0", d.u0},       {"u_a", d.u_a},
              {"u_n", d.u_n},     {"u_x", d.u_x},
              {"u_v", d.u_v},     {"a0", d.a0},
              {"a_n", d.a_n},     {"a_x", d.a_x},
              {"d0", d.d0},       {"d_n", d.d_n},
              {"d_x", d.d_x},     {"y_x", d.y_x},
              {"y_v", d.y_v},     {"y_n", d.y_n},
              {"nt_control_scale", d.nt_control_scale},
              {"nt_treated_scale", d.nt_treated_scale}};
}

// Parses a config object. A run manifest is accepted too: its resolved
// "config" member is used.
inline RunConfig parse_config(const Json& root) {
  using namespace detail;
  const Json& j = (root.is_object() && root.contains("manifest_version")) ? root.at("config") : root;
  RunConfig rc;
  check_keys(j, "config", {"data", "estimator", "estimands", "monotonicity", "weight", "summary", "nuisance", "folds",
                           "bootstrap_B", "level", "seed", "threads", "sensitivity", "simulation"});
  const std::string w = "config";
  std::string s;

  if (j.contains("data")) {
    const Json& d = j.at("data");
    check_keys(d, "data", {"path", "cluster_id", "a", "d", "y", "x", "v", "pi"});
    read(d, "path", rc.data.path, "data");
    read(d, "cluster_id", rc.data.schema.cluster_id, "data");
    read(d, "a", rc.data.schema.a, "data");
    read(d, "d", rc.data.schema.d, "data");
    read(d, "y", rc.data.schema.y, "data");
    read(d, "x", rc.data.schema.x_columns, "data");
    read(d, "v", rc.data.schema.v_columns, "data");
    read(d, "pi", rc.data.pi, "data");
    PSCRT_REQUIRE(rc.data.pi > 0.0 && rc.data.pi < 1.0, ErrorCode::InvalidConfig, "data.pi must lie in (0, 1)");
  }

  AnalysisConfig& a = rc.analysis;
  if (j.contains("estimator")) {
    read(j, "estimator", s, w);
    a.method = parse_method(s);
  }
  if (j.contains("monotonicity")) {
    read(j, "monotonicity", s, w);
    a.nuisance.mode = parse_monotonicity(s);
  }
  if (j.contains("estimands")) {
    std::vector<std::string> e;
    read(j, "estimands", e, w);
    for (const auto& x : e) a.estimands.push_back(parse_estimand(x));
  }
  if (j.contains("weight")) {
    read(j, "weight", s, w);
    apply_weight(rc, s);
  }
  if (j.contains("summary")) {
    read(j, "summary", s, w);
    PSCRT_REQUIRE(s == "own" || s == "own_plus_peer_mean", ErrorCode::InvalidConfig,
                  "summary must be own or own_plus_peer_mean");
    a.summary.mode = s == "own" ? SummaryMode::Own : SummaryMode::OwnPlusPeerMean;
  }
  if (j.contains("nuisance")) parse_nuisance(j.at("nuisance"), a.nuisance);
  read(j, "folds", a.folds, w);
  read(j, "bootstrap_B", a.bootstrap_B, w);
  PSCRT_REQUIRE(a.bootstrap_B >= 0, ErrorCode::InvalidConfig, "bootstrap_B must be non-negative");
  read(j, "level", a.level, w);
  PSCRT_REQUIRE(a.level > 0.0 && a.level < 1.0, ErrorCode::InvalidConfig, "level must lie in (0, 1)");
  read(j, "seed", a.seed, w);
  if (j.contains("threads")) {
    int t = 1;
    read(j, "threads", t, w);
    PSCRT_REQUIRE(t >= 1, ErrorCode::InvalidConfig, "threads must be at least 1");
    a.threads = static_cast<unsigned>(t);
  }

  if (j.contains("sensitivity")) {
    const Json& g = j.at("sensitivity");
    check_keys(g, "sensitivity", {"alpha", "beta", "gamma", "estimands"});
    read_range(g, "alpha", rc.grid.alpha, "sensitivity");
    read_range(g, "beta", rc.grid.beta, "sensitivity");
    read_range(g, "gamma", rc.grid.gamma, "sensitivity");
    read(g, "estimands", rc.grid.estimands, "sensitivity");
    for (const auto& e : rc.grid.estimands) (void)parse_estimand(e);
  }

  if (j.contains("simulation")) {
    const Json& m = j.at("simulation");
    const std::string ws = "simulation";
    check_keys(m, ws, {"dgp", "scenarios", "estimators", "estimands", "reps", "population", "bootstrap_B",
                       "mo_bootstrap_B", "np_learner"});
    if (m.contains("dgp")) parse_dgp(m.at("dgp"), rc.sim.dgp);
    if (m.contains("scenarios")) {
      std::vector<std::string> v;
      read(m, "scenarios", v, ws);
      rc.sim.scenarios.clear();
      for (const auto& x : v) rc.sim.scenarios.push_back(parse_scenario(x));
    }
    if (m.contains("estimators")) {
      std::vector<std::string> v;
      read(m, "estimators", v, ws);
      rc.sim.estimators.clear();
      for (const auto& x : v) rc.sim.estimators.push_back(parse_method(x));
    }
    read(m, "estimands", rc.sim.estimands, ws);
    for (const auto& e : rc.sim.estimands) (void)parse_estimand(e);
    read(m, "reps", rc.sim.reps, ws);
    PSCRT_REQUIRE(rc.sim.reps >= 1, ErrorCode::InvalidConfig, "simulation.reps must be at least 1");
    read(m, "population", rc.sim.population, ws);
    PSCRT_REQUIRE(rc.sim.population >= 2, ErrorCode::InvalidConfig, "simulation.population must be at least 2");
    read(m, "bootstrap_B", rc.sim.bootstrap_B, ws);
    read(m, "mo_bootstrap_B", rc.sim.mo_bootstrap_B, ws);
    if (m.contains("np_learner")) {
      read(m, "np_learner", s, ws);
      rc.sim.np_learner = parse_learner(s);
    }
  }
  return rc;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  PSCRT_REQUIRE(in.good(), ErrorCode::Io, "cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, "config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

// Fully resolved config. Thread count is left out: results do not depend
// on it.
inline Json config_json(const RunConfig& rc) {
  const AnalysisConfig& a = rc.analysis;
  Json est = Json::array();
  for (const auto& e : a.estimands) est.push_back(e.name());
  Json data{{"path", rc.data.path},
            {"cluster_id", rc.data.schema.cluster_id},
            {"a", rc.data.schema.a},
            {"d", rc.data.schema.d},
            {"y", rc.data.schema.y},
            {"x", rc.data.schema.x_columns},
            {"v", rc.data.schema.v_columns},
            {"pi", rc.data.pi}};
  Json scen = Json::array(), meth = Json::array();
  for (auto s : rc.sim.scenarios) scen.push_back(to_string(s));
  for (auto m : rc.sim.estimators) meth.push_back(to_string(m));
  return Json{{"data", data},
              {"estimator", to_string(a.method)},
              {"estimands", est},
              {"monotonicity", a.nuisance.mode == Monotonicity::Standard ? "standard" : "strong"},
              {"weight", rc.weight_text},
              {"summary", a.summary.mode == SummaryMode::Own ? "own" : "own_plus_peer_mean"},
              {"nuisance", nuisance_json(a.nuisance)},
              {"folds", a.folds},
              {"bootstrap_B", a.bootstrap_B},
              {"level", a.level},
              {"seed", a.seed},
              {"sensitivity",
               {{"alpha", detail::range_json(rc.grid.alpha)},
                {"beta", detail::range_json(rc.grid.beta)},
                {"gamma", detail::range_json(rc.grid.gamma)},
                {"estimands", rc.grid.estimands}}},
              {"simulation",
               {{"dgp", dgp_json(rc.sim.dgp)},
                {"scenarios", scen},
                {"estimators", meth},
                {"estimands", rc.sim.estimands},
                {"reps", rc.sim.reps},
                {"population", rc.sim.population},
                {"bootstrap_B", rc.sim.bootstrap_B},
                {"mo_bootstrap_B", rc.sim.mo_bootstrap_B},
                {"np_learner", to_string(rc.sim.np_learner)}}}};
}

// FNV-1a, 64 bit, as 16 hex digits.
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream o;
  o << std::hex;
  o.width(16);
  o.fill('0');
  o << h;
  return o.str();
}

}  // namespace pscrt
