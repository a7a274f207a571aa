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

// pscrt: analyze | simulate | sensitivity | truth
//
// Exit codes: 0 success, 2 invalid input or config, 3 estimation failure.
// Outputs are written only after every result is computed, each through a
// temporary file renamed into place.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "pscrt/analysis.hpp"
#include "pscrt/config.hpp"
#include "pscrt/core/error.hpp"
#include "pscrt/core/parallel.hpp"
#include "pscrt/csv_io.hpp"
#include "pscrt/report.hpp"
#include "pscrt/simulation.hpp"

namespace fs = std::filesystem;
using namespace pscrt;

namespace {

struct Flags {
  std::string config, out = "pscrt_out", scenario, estimator, weight, data;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads, reps;
};

using Outputs = std::map<std::string, std::string>;

RunConfig resolve(const Flags& f) {
  RunConfig rc = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (f.seed) rc.analysis.seed = *f.seed;
  rc.analysis.threads = f.threads ? static_cast<unsigned>(*f.threads) : default_threads();
  PSCRT_REQUIRE(rc.analysis.threads >= 1, ErrorCode::InvalidConfig, "--threads must be at least 1");
  if (!f.estimator.empty()) rc.analysis.method = parse_method(f.estimator);
  if (!f.weight.empty()) apply_weight(rc, f.weight);
  if (!f.scenario.empty()) rc.sim.scenarios = {parse_scenario(f.scenario)};
  if (!f.data.empty()) rc.data.path = f.data;
  if (f.reps) {
    PSCRT_REQUIRE(*f.reps >= 1, ErrorCode::InvalidConfig, "--reps must be at least 1");
    rc.sim.reps = *f.reps;
  }
  return rc;
}

TrialDataset load_data(const RunConfig& rc) {
  PSCRT_REQUIRE(!rc.data.path.empty(), ErrorCode::InvalidConfig, "no dataset given (data.path or --data)");
  return load_csv(rc.data.path, rc.data.pi, rc.data.schema);
}

Outputs cmd_analyze(const RunConfig& rc) {
  (void)rc.analysis.resolved_estimands();
  const TrialDataset ds = load_data(rc);
  const AnalysisResult r = analyze(ds, rc.analysis);
  return {{"analysis.json", analysis_json(r).dump(2) + "\n"}, {"estimates.csv", estimates_csv(r)}};
}

Outputs cmd_sensitivity(const RunConfig& rc) {
  std::vector<EstimandId> est;
  for (const auto& e : rc.grid.estimands) est.push_back(parse_estimand(e));
  GridAxes axes{rc.grid.alpha.values(), rc.grid.beta.values(), rc.grid.gamma.values()};
  PSCRT_REQUIRE(rc.analysis.method != Method::Dr, ErrorCode::InvalidConfig,
                "sensitivity grids use the mo or np estimator");
  for (const auto& e : est) {
    validate_estimand(e, rc.analysis.mode());
    (void)estimand_dependence(e, rc.analysis.mode());
  }
  const TrialDataset ds = load_data(rc);
  return {{"grid.csv", grid_csv(grid_scan(ds, rc.analysis, est, axes))}};
}

TruthOracleResult oracle_for(const RunConfig& rc) {
  return truth_oracle(rc.sim.dgp, rc.sim.population, derive_seed(rc.analysis.seed, {stream::kOracle}),
                      rc.analysis.weight, rc.analysis.threads);
}

Outputs cmd_truth(const RunConfig& rc) {
  const TruthOracleResult t = oracle_for(rc);
  return {{"truth.json", truth_json(t).dump(2) + "\n"}, {"truth.csv", truth_csv(t)}};
}

Outputs cmd_simulate(const RunConfig& rc) {
  for (const auto& e : rc.sim.estimands) validate_estimand(parse_estimand(e), rc.analysis.mode());
  const TruthOracleResult t = oracle_for(rc);
  std::string results = mc_results_header(), reps = mc_replicates_header();
  for (Scenario s : rc.sim.scenarios) {
    McConfig mc;
    mc.dgp = rc.sim.dgp;
    mc.scenario = s;
    mc.estimators = rc.sim.estimators;
    mc.estimands = rc.sim.estimands;
    mc.reps = rc.sim.reps;
    mc.nuisance = rc.analysis.nuisance;
    mc.np_learner = rc.sim.np_learner;
    mc.weight = rc.analysis.weight;
    mc.folds = rc.analysis.folds;
    mc.bootstrap_B = rc.sim.bootstrap_B;
    mc.mo_bootstrap_B = rc.sim.mo_bootstrap_B;
    mc.level = rc.analysis.level;
    mc.seed = rc.analysis.seed;
    mc.threads = rc.analysis.threads;
    const McResult r = run_mc_experiment(mc, t);
    results += mc_results_rows(r);
    reps += mc_replicates_rows(r, s);
  }
  return {{"results.csv", results}, {"replicates.csv", reps}, {"truth.json", truth_json(t).dump(2) + "\n"}};
}

void write_atomic(const fs::path& dir, const Outputs& files) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  PSCRT_REQUIRE(!ec, ErrorCode::Io, "cannot create output directory '" + dir.string() + "'");
  std::vector<std::pair<fs::path, fs::path>> staged;
  for (const auto& [name, body] : files) {
    const fs::path tmp = dir / ("." + name + ".tmp");
    std::ofstream o(tmp, std::ios::binary);
    o << body;
    o.close();
    if (!o) {
      for (const auto& [t, f] : staged) fs::remove(t, ec);
      fs::remove(tmp, ec);
      throw Error(ErrorCode::Io, "cannot write '" + tmp.string() + "'");
    }
    staged.emplace_back(tmp, dir / name);
  }
  for (const auto& [t, f] : staged) {
    fs::rename(t, f, ec);
    PSCRT_REQUIRE(!ec, ErrorCode::Io, "cannot move output into place: " + f.string());
  }
}

int run(const std::string& command, const Flags& flags) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const RunConfig rc = resolve(flags);
    Outputs out;
    if (command == "analyze") out = cmd_analyze(rc);
    else if (command == "sensitivity") out = cmd_sensitivity(rc);
    else if (command == "truth") out = cmd_truth(rc);
    else out = cmd_simulate(rc);

    const Json cfg = config_json(rc);
    Json hashes = Json::object();
    for (const auto& [name, body] : out) hashes[name] = fnv1a_hex(body);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    Json manifest{{"manifest_version", 1},
                  {"tool", "pscrt"},
                  {"version", PSCRT_VERSION},
                  {"command", command},
                  {"config_hash", fnv1a_hex(cfg.dump())},
                  {"seed", rc.analysis.seed},
                  {"threads", rc.analysis.threads},
                  {"runtime_seconds", secs},
                  {"outputs", hashes},
                  {"config", cfg}};
    out["manifest.json"] = manifest.dump(2) + "\n";
    write_atomic(flags.out, out);
    return 0;
  } catch (const Error& e) {
    const int code = is_validation_error(e.code()) ? 2 : 3;
    Json rec{{"error", std::string(to_string(e.code()))}, {"message", e.detail()}, {"exit_code", code}};
    std::cerr << rec.dump() << "\n";
    return code;
  } catch (const std::exception& e) {
    Json rec{{"error", "Internal"}, {"message", e.what()}, {"exit_code", 3}};
    std::cerr << rec.dump() << "\n";
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Principal-stratum causal effects for cluster-randomized trials"};
  app.set_version_flag("--version", std::string(PSCRT_VERSION));
  app.require_subcommand(1);
  Flags flags;
  std::string chosen;
  for (const char* name : {"analyze", "simulate", "sensitivity", "truth"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", flags.config, "JSON config or a previous run manifest");
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--seed", flags.seed, "root seed");
    sub->add_option("--threads", flags.threads, "worker threads (default: available parallelism)");
    sub->add_option("--scenario", flags.scenario, "simulation scenario a|b|c|d");
    sub->add_option("--estimator", flags.estimator, "mo|dr|np");
    sub->add_option("--weight", flags.weight, "cluster|individual|<expression in N, v1..>");
    sub->add_option("--data", flags.data, "dataset CSV (overrides data.path)");
    sub->add_option("--reps", flags.reps, "Monte Carlo replications");
    sub->callback([&chosen, name] { chosen = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  return run(chosen, flags);
}
