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

// Simulation laboratory: a cluster-randomized trial generator with
// Gaussian-copula uptake and outcomes, covariate misspecification, a
// potential-outcome truth oracle and a Monte Carlo runner.
//
// Both worlds share one latent uptake vector per cluster, so
// D(1) >= D(0) holds pathwise and there are no defiers.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pscrt/analysis.hpp"
#include "pscrt/core/error.hpp"
#include "pscrt/core/normal.hpp"
#include "pscrt/core/parallel.hpp"
#include "pscrt/core/random.hpp"
#include "pscrt/data_model.hpp"
#include "pscrt/nuisance/nuisance.hpp"
#include "pscrt/strata.hpp"

namespace pscrt {

struct DGPConfig {
  int K = 100;
  int n_min = 10, n_max = 50;
  double rho = 0.1;  // exchangeable latent correlation
  double pi = 0.5;
  double outcome_sd = 6.0;

  // V ~ N(v_n N, 1), X ~ N(x_v V, 1).
  double v_n = 3.0 / 50.0;
  double x_v = 2.0;

  // logit P(D = 1) = u0 + u_a A + u_n (1 - A) N + u_x X + u_v V.
  double u0 = -8.0, u_a = 4.0, u_n = 1.0 / 50.0, u_x = 1.0, u_v = 1.0;

  // E[Y] = (a0 + a_n N + a_x X) A + (d0 + d_n N + d_x X) D + y_x X + y_v V + y_n N.
  double a0 = 0.5, a_n = 0.03, a_x = 1.5;
  double d0 = 0.2, d_n = 0.03, d_x = 1.5;
  double y_x = 1.0, y_v = 1.0, y_n = 1.0 / 25.0;

  // Ignorability violations: never-taker outcome means are multiplied by
  // these factors under control and under treatment. 1 keeps ignorability.
  double nt_control_scale = 1.0;
  double nt_treated_scale = 1.0;

  std::uint64_t seed = 1;

  void validate() const {
    PSCRT_REQUIRE(K >= 2, ErrorCode::InvalidConfig, "K must be at least 2");
    PSCRT_REQUIRE(n_min >= 1 && n_max >= n_min, ErrorCode::InvalidConfig, "invalid cluster size range");
    PSCRT_REQUIRE(rho >= 0.0 && rho < 1.0, ErrorCode::InvalidConfig, "copula rho must lie in [0, 1)");
    PSCRT_REQUIRE(pi > 0.0 && pi < 1.0, ErrorCode::InvalidConfig, "pi must lie in (0, 1)");
    PSCRT_REQUIRE(outcome_sd > 0.0, ErrorCode::InvalidConfig, "outcome_sd must be positive");
    PSCRT_REQUIRE(nt_control_scale > 0.0 && nt_treated_scale > 0.0, ErrorCode::InvalidConfig,
                  "never-taker scales must be positive");
    // Pathwise monotonicity needs the treated linear predictor to dominate.
    PSCRT_REQUIRE(u_a >= u_n * n_max && u_a >= u_n * n_min, ErrorCode::InvalidConfig,
                  "uptake coefficients break monotonicity over the size range");
  }
};

inline double uptake_probability(const DGPConfig& cfg, int a, double x, double v, double n) {
  return expit(cfg.u0 + cfg.u_a * a + cfg.u_n * (1 - a) * n + cfg.u_x * x + cfg.u_v * v);
}

// Outcome mean under (a, own uptake d) for an individual of the given
// stratum, including the never-taker scaling.
inline double outcome_mean(const DGPConfig& cfg, int a, int d, double x, double v, double n,
                           Stratum g = Stratum::Complier) {
  double m = (cfg.a0 + cfg.a_n * n + cfg.a_x * x) * a + (cfg.d0 + cfg.d_n * n + cfg.d_x * x) * d + cfg.y_x * x +
             cfg.y_v * v + cfg.y_n * n;
  if (g == Stratum::NeverTaker) m *= a == 1 ? cfg.nt_treated_scale : cfg.nt_control_scale;
  return m;
}

inline Stratum stratum_of(int d1, int d0) {
  if (d1 == 1) return d0 == 1 ? Stratum::AlwaysTaker : Stratum::Complier;
  return d0 == 1 ? Stratum::Defier : Stratum::NeverTaker;
}

// A generated cluster with its cross-world record.
struct SimCluster {
  Cluster cluster;
  std::vector<int> d1, d0;         // potential uptake
  Eigen::VectorXd z_uptake, z_outcome;  // latent normals
  Eigen::VectorXd y1, y0;          // potential outcomes at own D(a)

  Stratum stratum(int j) const { return stratum_of(d1[static_cast<std::size_t>(j)], d0[static_cast<std::size_t>(j)]); }
};

// Exchangeable latent vector: sqrt(rho) Z0 + sqrt(1 - rho) e_j.
inline Eigen::VectorXd exchangeable_normals(int n, double rho, Rng& rng, NormalSampler& normal) {
  const double z0 = normal(rng);
  const double s0 = std::sqrt(rho), s1 = std::sqrt(1.0 - rho);
  Eigen::VectorXd z(n);
  for (int j = 0; j < n; ++j) z[j] = s0 * z0 + s1 * normal(rng);
  return z;
}

inline SimCluster draw_cluster(const DGPConfig& cfg, Rng& rng, std::string id = {}) {
  NormalSampler normal;
  SimCluster s;
  Cluster& c = s.cluster;
  c.id = std::move(id);
  const int n = cfg.n_min + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(cfg.n_max - cfg.n_min + 1)));
  const double nd = n;
  c.v = Eigen::VectorXd::Constant(1, cfg.v_n * nd + normal(rng));
  const double v = c.v[0];
  c.x.resize(n, 1);
  for (int j = 0; j < n; ++j) c.x(j, 0) = cfg.x_v * v + normal(rng);
  c.a = uniform01(rng) < cfg.pi ? 1 : 0;
  s.z_uptake = exchangeable_normals(n, cfg.rho, rng, normal);
  s.z_outcome = exchangeable_normals(n, cfg.rho, rng, normal);

  c.d.resize(static_cast<std::size_t>(n));
  c.y.resize(n);
  s.d1.resize(static_cast<std::size_t>(n));
  s.d0.resize(static_cast<std::size_t>(n));
  s.y1.resize(n);
  s.y0.resize(n);
  for (int j = 0; j < n; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    const double x = c.x(j, 0);
    const double u = normal_cdf(s.z_uptake[j]);
    s.d1[jj] = u <= uptake_probability(cfg, 1, x, v, nd) ? 1 : 0;
    s.d0[jj] = u <= uptake_probability(cfg, 0, x, v, nd) ? 1 : 0;
    const Stratum g = stratum_of(s.d1[jj], s.d0[jj]);
    const double e = cfg.outcome_sd * s.z_outcome[j];
    s.y1[j] = outcome_mean(cfg, 1, s.d1[jj], x, v, nd, g) + e;
    s.y0[j] = outcome_mean(cfg, 0, s.d0[jj], x, v, nd, g) + e;
    c.d[jj] = c.a == 1 ? s.d1[jj] : s.d0[jj];
    c.y[j] = c.a == 1 ? s.y1[j] : s.y0[j];
  }
  return s;
}

// Cluster i of a dataset or population seeded by `seed`.
inline SimCluster draw_cluster_at(const DGPConfig& cfg, std::uint64_t seed, std::size_t i) {
  Rng rng = make_rng(seed, {static_cast<std::uint64_t>(i)});
  return draw_cluster(cfg, rng, "c" + std::to_string(i + 1));
}

inline TrialDataset simulate_dataset(const DGPConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<Cluster> clusters;
  clusters.reserve(static_cast<std::size_t>(cfg.K));
  for (int i = 0; i < cfg.K; ++i) clusters.push_back(draw_cluster_at(cfg, seed, static_cast<std::size_t>(i)).cluster);
  return TrialDataset(std::move(clusters), cfg.pi);
}

// ---------------------------------------------------------------------------
// Misspecification.

struct Transformed {
  double u1, u2, u3;
};

inline Transformed misspecify(double x, double v, double n) {
  const double t = n * v / 25.0 + 0.6;
  return {std::exp(-0.3 * x), v / (1.0 + 0.05 * x), t * t * t};
}

// Replaces (x1, v1, n) by the transformed covariates, keeping the layout.
inline Eigen::MatrixXd misspecify_features(const Eigen::MatrixXd& f, const FeatureLayout& layout) {
  PSCRT_REQUIRE(layout.dx >= 1 && layout.dv >= 1, ErrorCode::InvalidConfig,
                "misspecification needs at least one X and one V column");
  Eigen::MatrixXd out = f;
  const auto ix = layout.x_index(0), iv = layout.v_index(0), in = layout.n_index();
  for (Eigen::Index r = 0; r < f.rows(); ++r) {
    const Transformed t = misspecify(f(r, ix), f(r, iv), f(r, in));
    out(r, ix) = t.u1;
    out(r, iv) = t.u2;
    out(r, in) = t.u3;
  }
  return out;
}

enum class Scenario { A, B, C, D };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::A: return "a";
    case Scenario::B: return "b";
    case Scenario::C: return "c";
    case Scenario::D: return "d";
  }
  return "?";
}

inline Scenario parse_scenario(const std::string& s) {
  if (s == "a") return Scenario::A;
  if (s == "b") return Scenario::B;
  if (s == "c") return Scenario::C;
  if (s == "d") return Scenario::D;
  throw Error(ErrorCode::InvalidConfig, "unknown scenario '" + s + "' (expected a, b, c or d)");
}

// (b): the uptake model sees transformed covariates; (c): the outcome
// model does; (d): both.
inline void apply_scenario(NuisanceSpec& spec, Scenario s) {
  const FeatureTransform t = [](const Eigen::MatrixXd& f, const FeatureLayout& l) { return misspecify_features(f, l); };
  spec.p_transform = (s == Scenario::B || s == Scenario::D) ? t : FeatureTransform{};
  spec.mu_transform = (s == Scenario::C || s == Scenario::D) ? t : FeatureTransform{};
}

// True nuisance functions at the rows of `flat` (features x1, v1, n).
inline NuisancePredictions oracle_predictions(const FlatData& flat, const DGPConfig& cfg) {
  const auto& L = flat.layout;
  PSCRT_REQUIRE(L.dx >= 1 && L.dv >= 1, ErrorCode::InvalidConfig, "oracle needs X and V columns");
  NuisancePredictions p(flat.num_rows());
  for (std::size_t r = 0; r < flat.num_rows(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    const double x = flat.features(ri, L.x_index(0)), v = flat.features(ri, L.v_index(0)),
                 n = flat.features(ri, L.n_index());
    const double p1 = uptake_probability(cfg, 1, x, v, n), p0 = uptake_probability(cfg, 0, x, v, n);
    p.p1[1][ri] = p1;
    p.p1[0][ri] = p0;
    p.mu[3][ri] = outcome_mean(cfg, 1, 1, x, v, n);
    p.mu[2][ri] = outcome_mean(cfg, 1, 0, x, v, n, Stratum::NeverTaker);
    p.mu[1][ri] = outcome_mean(cfg, 0, 1, x, v, n);
    const double eco = p1 - p0, ent = 1.0 - p1;
    const double m00 = outcome_mean(cfg, 0, 0, x, v, n);
    p.mu[0][ri] = (eco + ent) > 0.0 ? (eco * m00 + ent * cfg.nt_control_scale * m00) / (eco + ent) : m00;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Truth oracle.

struct TruthValue {
  double value = 0.0;
  double se = 0.0;
};

struct TruthOracleResult {
  std::map<std::string, TruthValue> truths;
  std::size_t population_size = 0;
  std::size_t individuals = 0;
  std::size_t defiers = 0;

  const TruthValue& at(const std::string& name) const {
    const auto it = truths.find(name);
    PSCRT_REQUIRE(it != truths.end(), ErrorCode::InvalidConfig, "no truth for estimand '" + name + "'");
    return it->second;
  }
};

// Ratio sum(num) / sum(den) with its delta-method standard error.
inline TruthValue ratio_truth(const std::vector<double>& num, const std::vector<double>& den) {
  double sn = 0.0, sd = 0.0;
  for (std::size_t i = 0; i < num.size(); ++i) {
    sn += num[i];
    sd += den[i];
  }
  TruthValue t;
  t.value = sn / sd;
  double ss = 0.0;
  for (std::size_t i = 0; i < num.size(); ++i) {
    const double r = num[i] - t.value * den[i];
    ss += r * r;
  }
  t.se = std::sqrt(ss) / sd;
  return t;
}

// Estimand truths on a super population of `population` clusters, by
// averaging the known conditional outcome means of each individual's
// stratum with weights W/N.
inline TruthOracleResult truth_oracle(const DGPConfig& cfg, std::size_t population, std::uint64_t seed,
                                      const WeightSpec& weight = {}, unsigned threads = 1) {
  cfg.validate();
  PSCRT_REQUIRE(population >= 2, ErrorCode::InvalidConfig, "population needs at least two clusters");
  const std::array<Stratum, 3> strata{Stratum::AlwaysTaker, Stratum::Complier, Stratum::NeverTaker};

  // Per cluster: W, and for each stratum the weighted count and the
  // weighted sums of the outcome means at the three cells.
  struct Acc {
    double w = 0.0, itt = 0.0;
    std::array<double, 4> count{};
    std::array<std::array<double, 3>, 4> sum{};
    std::size_t n = 0, defiers = 0;
  };
  std::vector<Acc> acc(population);
  parallel_for(population, threads, [&](std::size_t i) {
    const SimCluster s = draw_cluster_at(cfg, seed, i);
    const Cluster& c = s.cluster;
    Acc& a = acc[i];
    a.w = eval_weight(weight, c.size(), c.v);
    const double f = a.w / c.size();
    const double v = c.v[0], nd = c.size();
    for (int j = 0; j < c.size(); ++j) {
      const double x = c.x(j, 0);
      const Stratum g = s.stratum(j);
      const auto k = static_cast<std::size_t>(g);
      if (g == Stratum::Defier) ++a.defiers;
      const StratumScheme sc = scheme(g);
      a.count[k] += f;
      if (g != Stratum::Defier)
        for (std::size_t ci = 0; ci < 3; ++ci) {
          const Cell cell = kCells[ci];
          if (!sc.is_valid(cell)) continue;
          a.sum[k][ci] += f * outcome_mean(cfg, cell.a, sc.d_star(cell), x, v, nd, g);
        }
      const int d1 = s.d1[static_cast<std::size_t>(j)], d0 = s.d0[static_cast<std::size_t>(j)];
      a.itt += f * (outcome_mean(cfg, 1, d1, x, v, nd, g) - outcome_mean(cfg, 0, d0, x, v, nd, g));
    }
    a.n = static_cast<std::size_t>(c.size());
  });

  TruthOracleResult out;
  out.population_size = population;
  std::vector<double> w(population);
  for (std::size_t i = 0; i < population; ++i) {
    w[i] = acc[i].w;
    out.individuals += acc[i].n;
    out.defiers += acc[i].defiers;
  }
  auto column = [&](auto fn) {
    std::vector<double> v(population);
    for (std::size_t i = 0; i < population; ++i) v[i] = fn(acc[i]);
    return v;
  };
  for (Stratum g : kAllStrata) {
    const auto k = static_cast<std::size_t>(g);
    out.truths["e_" + std::string(to_string(g))] = ratio_truth(column([&](const Acc& a) { return a.count[k]; }), w);
  }
  for (Stratum g : strata) {
    const auto k = static_cast<std::size_t>(g);
    const auto den = column([&](const Acc& a) { return a.count[k]; });
    const StratumScheme sc = scheme(g);
    for (std::size_t ci = 0; ci < 3; ++ci) {
      if (!sc.is_valid(kCells[ci])) continue;
      out.truths["theta_" + std::string(to_string(g)) + to_string(kCells[ci])] =
          ratio_truth(column([&](const Acc& a) { return a.sum[k][ci]; }), den);
    }
    // Cell index: 0 = (1,1), 1 = (1,0), 2 = (0,0).
    const auto nae = ratio_truth(column([&](const Acc& a) { return a.sum[k][1] - a.sum[k][2]; }), den);
    out.truths["NAE_" + std::string(to_string(g))] = nae;
    if (g == Stratum::Complier) {
      const auto ice = ratio_truth(column([&](const Acc& a) { return a.sum[k][0] - a.sum[k][1]; }), den);
      out.truths["ICE_co"] = ice;
      TruthValue pce = ratio_truth(column([&](const Acc& a) { return a.sum[k][0] - a.sum[k][2]; }), den);
      pce.value = ice.value + nae.value;
      out.truths["PCE_co"] = pce;
    } else {
      out.truths["ICE_" + std::string(to_string(g))] = {0.0, 0.0};
      out.truths["PCE_" + std::string(to_string(g))] = nae;
    }
  }
  out.truths["ITT"] = ratio_truth(column([](const Acc& a) { return a.itt; }), w);
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo experiments.

struct McConfig {
  DGPConfig dgp;
  Scenario scenario = Scenario::A;
  std::vector<Method> estimators{Method::Mo, Method::Dr, Method::Np};
  std::vector<std::string> estimands{"NAE_co", "ICE_co", "PCE_co", "NAE_nt"};
  int reps = 500;
  // Formulas, ensemble options and mode for every estimator; its learner
  // is used by mo and dr. The scenario sets the feature transforms.
  NuisanceSpec nuisance;
  LearnerKind np_learner = LearnerKind::Ensemble;
  WeightSpec weight;
  int folds = 5;
  int bootstrap_B = 500;     // dr
  int mo_bootstrap_B = 0;    // mo intervals are optional
  double level = 0.95;
  // Constant sensitivity parameters; when set, mo and np report the
  // bias-corrected estimates.
  std::optional<std::array<double, 3>> sensitivity;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct McReplicate {
  int rep = 0;
  Method method = Method::Np;
  std::string estimand;
  bool failed = false;
  double estimate = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  double lo = std::numeric_limits<double>::quiet_NaN();
  double hi = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

struct McSummary {
  Method method = Method::Np;
  std::string estimand;
  Scenario scenario = Scenario::A;
  double truth = 0.0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double bias = std::numeric_limits<double>::quiet_NaN();
  double sd = std::numeric_limits<double>::quiet_NaN();
  double mean_se = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();
  int n_ok = 0, failures = 0;

  double mc_se() const { return sd / std::sqrt(static_cast<double>(n_ok)); }
};

struct McResult {
  std::vector<McSummary> rows;
  std::vector<McReplicate> replicates;

  const McSummary& get(Method m, const std::string& estimand) const {
    for (const auto& r : rows)
      if (r.method == m && r.estimand == estimand) return r;
    throw Error(ErrorCode::InvalidConfig, "no summary for " + to_string(m) + " " + estimand);
  }
};

inline AnalysisConfig mc_analysis_config(const McConfig& mc, Method m, std::uint64_t seed) {
  AnalysisConfig cfg;
  cfg.method = m;
  cfg.nuisance = mc.nuisance;
  if (m == Method::Np) cfg.nuisance.learner = mc.np_learner;
  apply_scenario(cfg.nuisance, mc.scenario);
  cfg.weight = mc.weight;
  for (const auto& e : mc.estimands) cfg.estimands.push_back(parse_estimand(e));
  cfg.folds = mc.folds;
  cfg.bootstrap_B = m == Method::Dr ? mc.bootstrap_B : m == Method::Mo ? mc.mo_bootstrap_B : 0;
  cfg.level = mc.level;
  cfg.seed = seed;
  cfg.threads = 1;
  return cfg;
}

// Replicate r uses dataset seed derive(seed, {replicate, r}), shared by
// every scenario and estimator, so scenarios compare on common data.
inline McResult run_mc_experiment(const McConfig& mc, const TruthOracleResult& truth) {
  mc.dgp.validate();
  PSCRT_REQUIRE(mc.reps >= 1, ErrorCode::InvalidConfig, "reps must be at least 1");
  PSCRT_REQUIRE(!mc.estimators.empty() && !mc.estimands.empty(), ErrorCode::InvalidConfig,
                "no estimators or estimands requested");
  PSCRT_REQUIRE(!(mc.sensitivity && std::find(mc.estimators.begin(), mc.estimators.end(), Method::Dr) !=
                                        mc.estimators.end()),
                ErrorCode::InvalidConfig, "bias-corrected estimates are available for mo and np only");
  for (const auto& e : mc.estimands) {
    validate_estimand(parse_estimand(e), mc.nuisance.mode);
    (void)truth.at(e);
  }
  const std::size_t E = mc.estimands.size(), M = mc.estimators.size();
  const auto reps = static_cast<std::size_t>(mc.reps);
  std::vector<McReplicate> rec(reps * M * E);

  parallel_for(reps, mc.threads, [&](std::size_t r) {
    DGPConfig dgp = mc.dgp;
    const TrialDataset ds = simulate_dataset(dgp, derive_seed(mc.seed, {stream::kReplicate, r}));
    const std::uint64_t aseed = derive_seed(mc.seed, {stream::kReplicate, r, 1});
    for (std::size_t m = 0; m < M; ++m) {
      const AnalysisConfig cfg = mc_analysis_config(mc, mc.estimators[m], aseed);
      std::optional<AnalysisResult> res;
      std::string err;
      try {
        const FlatData flat = flatten(ds, cfg.summary, cfg.weight);
        ds.require_design();
        if (mc.sensitivity) {
          const auto& s = *mc.sensitivity;
          res = analyze_bc_flat(flat, cfg, SensitivityFunctions::constants(s[0], s[1], s[2]));
        } else {
          res = analyze_flat(flat, cfg);
        }
      } catch (const Error& e) {
        err = e.what();
      }
      for (std::size_t k = 0; k < E; ++k) {
        McReplicate& x = rec[(r * M + m) * E + k];
        x.rep = static_cast<int>(r);
        x.method = mc.estimators[m];
        x.estimand = mc.estimands[k];
        if (!res) {
          x.failed = true;
          x.error = err;
          continue;
        }
        const EstimateReport& er = res->estimates[k];
        x.estimate = er.point;
        if (er.se) x.se = *er.se;
        if (er.ci) {
          x.lo = er.ci->lo;
          x.hi = er.ci->hi;
        }
      }
    }
  });

  McResult out;
  out.replicates = std::move(rec);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t k = 0; k < E; ++k) {
      McSummary s;
      s.method = mc.estimators[m];
      s.estimand = mc.estimands[k];
      s.scenario = mc.scenario;
      s.truth = truth.at(s.estimand).value;
      double sum = 0.0, sum_se = 0.0;
      int n_se = 0, n_ci = 0, covered = 0;
      std::vector<double> vals;
      for (std::size_t r = 0; r < reps; ++r) {
        const McReplicate& x = out.replicates[(r * M + m) * E + k];
        if (x.failed) {
          ++s.failures;
          continue;
        }
        vals.push_back(x.estimate);
        sum += x.estimate;
        if (!std::isnan(x.se)) {
          sum_se += x.se;
          ++n_se;
        }
        if (!std::isnan(x.lo)) {
          ++n_ci;
          covered += (x.lo <= s.truth && s.truth <= x.hi) ? 1 : 0;
        }
      }
      s.n_ok = static_cast<int>(vals.size());
      if (s.n_ok > 0) {
        s.mean = sum / s.n_ok;
        s.bias = s.mean - s.truth;
        s.sd = sample_sd(vals);
      }
      if (n_se > 0) s.mean_se = sum_se / n_se;
      if (n_ci > 0) s.coverage = static_cast<double>(covered) / n_ci;
      out.rows.push_back(s);
    }
  return out;
}

}  // namespace pscrt
