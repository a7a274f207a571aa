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

// Machine-readable outputs: JSON reports and CSV tables. Reals use the
// shortest round-trip form, so equal results give equal bytes.

#pragma once

#include <json.hpp>

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pscrt/analysis.hpp"
#include "pscrt/config.hpp"
#include "pscrt/csv_io.hpp"
#include "pscrt/simulation.hpp"

namespace pscrt {

// NaN and infinities become null.
inline Json real_json(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline std::string csv_real(double v) { return std::isfinite(v) ? format_real(v) : "NA"; }
inline std::string csv_real(const std::optional<double>& v) { return v ? csv_real(*v) : "NA"; }

inline Json estimate_json(const EstimateReport& e) {
  Json j{{"estimand", e.estimand}, {"method", to_string(e.method)}, {"point", real_json(e.point)}};
  j["se"] = e.se ? real_json(*e.se) : Json(nullptr);
  if (e.ci)
    j["ci"] = Json{{"lo", real_json(e.ci->lo)}, {"hi", real_json(e.ci->hi)}, {"level", e.ci->level}, {"method", e.ci_method}};
  else
    j["ci"] = nullptr;
  return j;
}

inline Json analysis_json(const AnalysisResult& r) {
  Json est = Json::array();
  for (const auto& e : r.estimates) est.push_back(estimate_json(e));
  Json props = Json::object();
  for (Stratum g : kAllStrata) {
    const auto k = static_cast<std::size_t>(g);
    props[std::string(to_string(g))] =
        Json{{"value", real_json(r.plugin_proportions.value[k])}, {"floored_rows", r.plugin_proportions.floored[k]}};
  }
  Json models = Json::array();
  for (const auto& m : r.models) {
    Json mj{{"name", m.name}, {"learner", m.learner}, {"rows", m.rows}, {"terms", m.terms},
            {"uptake_dropped", m.uptake_dropped}};
    const auto& e = m.ensemble;
    if (!e.members.empty()) {
      Json members = Json::array();
      for (std::size_t k = 0; k < e.members.size(); ++k) {
        Json x{{"member", to_string(e.members[k])}};
        x["weight"] = k < e.weights.size() ? real_json(e.weights[k]) : Json(nullptr);
        x["cv_loss"] = k < e.cv_loss.size() ? real_json(e.cv_loss[k]) : Json(nullptr);
        members.push_back(x);
      }
      mj["ensemble"] = Json{{"members", members},
                            {"stacked_cv_loss", real_json(e.stacked_cv_loss)},
                            {"degenerate", e.degenerate},
                            {"separation", e.separation}};
    }
    models.push_back(mj);
  }
  Json j{{"estimates", est},
         {"stratum_proportions", props},
         {"clipped_predictions", r.clipped},
         {"folds", r.folds},
         {"fold_seed", r.fold_seed},
         {"bootstrap", {{"B", r.bootstrap_B}, {"failed", r.bootstrap_failed}}},
         {"models", models}};
  j["ci_error"] = r.ci_error ? Json(*r.ci_error) : Json(nullptr);
  return j;
}

inline std::string estimates_csv(const AnalysisResult& r) {
  std::ostringstream o;
  o << "estimand,method,point,se,ci_lo,ci_hi,ci_method\n";
  for (const auto& e : r.estimates) {
    o << e.estimand << ',' << to_string(e.method) << ',' << csv_real(e.point) << ',' << csv_real(e.se) << ','
      << (e.ci ? csv_real(e.ci->lo) : "NA") << ',' << (e.ci ? csv_real(e.ci->hi) : "NA") << ','
      << (e.ci_method.empty() ? "NA" : e.ci_method) << '\n';
  }
  return o.str();
}

inline std::string grid_csv(const std::vector<GridRow>& rows) {
  std::ostringstream o;
  o << "alpha,beta,gamma,estimand,estimate,se,ci_lo,ci_hi\n";
  for (const auto& r : rows) {
    o << csv_real(r.alpha) << ',' << csv_real(r.beta) << ',' << csv_real(r.gamma) << ',' << r.estimand << ','
      << csv_real(r.estimate) << ',' << csv_real(r.se) << ',' << (r.ci ? csv_real(r.ci->lo) : "NA") << ','
      << (r.ci ? csv_real(r.ci->hi) : "NA") << '\n';
  }
  return o.str();
}

inline std::string mc_results_header() {
  return "estimator,estimand,scenario,truth,mean,bias,sd,mc_se,mean_se,coverage,reps_ok,failures\n";
}

inline std::string mc_results_rows(const McResult& r) {
  std::ostringstream o;
  for (const auto& s : r.rows)
    o << to_string(s.method) << ',' << s.estimand << ',' << to_string(s.scenario) << ',' << csv_real(s.truth) << ','
      << csv_real(s.mean) << ',' << csv_real(s.bias) << ',' << csv_real(s.sd) << ',' << csv_real(s.mc_se()) << ','
      << csv_real(s.mean_se) << ',' << csv_real(s.coverage) << ',' << s.n_ok << ',' << s.failures << '\n';
  return o.str();
}

inline std::string mc_replicates_header() { return "scenario,rep,estimator,estimand,estimate,se,ci_lo,ci_hi,error\n"; }

inline std::string mc_replicates_rows(const McResult& r, Scenario s) {
  std::ostringstream o;
  for (const auto& x : r.replicates) {
    std::string err = x.error;
    for (char& c : err)
      if (c == ',' || c == '\n' || c == '"') c = ' ';
    o << to_string(s) << ',' << x.rep << ',' << to_string(x.method) << ',' << x.estimand << ','
      << csv_real(x.estimate) << ',' << csv_real(x.se) << ',' << csv_real(x.lo) << ',' << csv_real(x.hi) << ','
      << (x.failed ? err : "") << '\n';
  }
  return o.str();
}

inline Json truth_json(const TruthOracleResult& t) {
  Json tr = Json::object();
  for (const auto& [k, v] : t.truths) tr[k] = Json{{"value", real_json(v.value)}, {"mc_se", real_json(v.se)}};
  return Json{{"population_clusters", t.population_size},
              {"population_individuals", t.individuals},
              {"defiers", t.defiers},
              {"truths", tr}};
}

inline std::string truth_csv(const TruthOracleResult& t) {
  std::ostringstream o;
  o << "estimand,value,mc_se\n";
  for (const auto& [k, v] : t.truths) o << k << ',' << csv_real(v.value) << ',' << csv_real(v.se) << '\n';
  return o.str();
}

}  // namespace pscrt
