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

// End-to-end analysis of one dataset: nuisance fitting (full data or
// cross-fitted), theta and effect estimates, standard errors and intervals,
// and the sensitivity grid.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pscrt/core/error.hpp"
#include "pscrt/core/parallel.hpp"
#include "pscrt/core/random.hpp"
#include "pscrt/data_model.hpp"
#include "pscrt/estimators.hpp"
#include "pscrt/inference.hpp"
#include "pscrt/nuisance/nuisance.hpp"
#include "pscrt/principal_score.hpp"
#include "pscrt/sensitivity.hpp"
#include "pscrt/strata.hpp"

namespace pscrt {

enum class Method { Mo, Dr, Np };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::Mo: return "mo";
    case Method::Dr: return "dr";
    case Method::Np: return "np";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "mo") return Method::Mo;
  if (s == "dr") return Method::Dr;
  if (s == "np") return Method::Np;
  throw Error(ErrorCode::InvalidConfig, "unknown estimator '" + s + "' (expected mo, dr or np)");
}

// ---------------------------------------------------------------------------
// Estimands.

struct EstimandId {
  enum class Kind { Theta, Effect, Itt, Proportion };
  Kind kind = Kind::Effect;
  Stratum g = Stratum::Complier;
  Cell cell;
  EffectKind effect = EffectKind::NAE;

  static EstimandId theta(Stratum g, Cell c) { return {Kind::Theta, g, c, EffectKind::NAE}; }
  static EstimandId of(EffectKind k, Stratum g) { return {Kind::Effect, g, {}, k}; }
  static EstimandId itt() { return {Kind::Itt, Stratum::Complier, {}, EffectKind::NAE}; }
  static EstimandId proportion(Stratum g) { return {Kind::Proportion, g, {}, EffectKind::NAE}; }

  std::string name() const {
    const std::string gs(to_string(g));
    switch (kind) {
      case Kind::Theta: return "theta_" + gs + to_string(cell);
      case Kind::Effect: return to_string(effect) + "_" + gs;
      case Kind::Itt: return "ITT";
      case Kind::Proportion: return "e_" + gs;
    }
    return "?";
  }
};

inline EstimandId parse_estimand(const std::string& s) {
  if (s == "ITT") return EstimandId::itt();
  if (s.rfind("e_", 0) == 0) return EstimandId::proportion(parse_stratum(s.substr(2)));
  if (s.rfind("theta_", 0) == 0 && s.size() == 13 && s[8] == '(' && s[10] == ',' && s[12] == ')') {
    const int a = s[9] - '0', as = s[11] - '0';
    PSCRT_REQUIRE((a == 0 || a == 1) && (as == 0 || as == 1), ErrorCode::InvalidConfig,
                  "malformed estimand '" + s + "'");
    return EstimandId::theta(parse_stratum(s.substr(6, 2)), {a, as});
  }
  const auto us = s.find('_');
  if (us == 3) {
    const std::string k = s.substr(0, 3);
    const Stratum g = parse_stratum(s.substr(4));
    if (k == "ICE") return EstimandId::of(EffectKind::ICE, g);
    if (k == "NAE") return EstimandId::of(EffectKind::NAE, g);
    if (k == "PCE") return EstimandId::of(EffectKind::PCE, g);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown estimand '" + s + "'");
}

inline std::vector<EstimandId> default_estimands(Monotonicity mode) {
  std::vector<EstimandId> out;
  for (Stratum g : {Stratum::Complier, Stratum::NeverTaker, Stratum::AlwaysTaker}) {
    if (!stratum_available(g, mode)) continue;
    for (EffectKind k : {EffectKind::ICE, EffectKind::NAE, EffectKind::PCE}) out.push_back(EstimandId::of(k, g));
  }
  out.push_back(EstimandId::itt());
  for (Stratum g : {Stratum::Complier, Stratum::NeverTaker, Stratum::AlwaysTaker})
    if (stratum_available(g, mode)) out.push_back(EstimandId::proportion(g));
  return out;
}

inline void validate_estimand(const EstimandId& e, Monotonicity mode) {
  switch (e.kind) {
    case EstimandId::Kind::Theta:
      require_available(e.g, mode);
      require_cell(scheme(e.g), e.cell);
      break;
    case EstimandId::Kind::Effect: require_available(e.g, mode); break;
    default: break;
  }
}

// ---------------------------------------------------------------------------
// Configuration.

struct AnalysisConfig {
  Method method = Method::Np;
  NuisanceSpec nuisance;       // includes the monotonicity mode
  WeightSpec weight;
  FeatureSummary summary;
  std::vector<EstimandId> estimands;  // empty: default_estimands
  int folds = 5;
  int bootstrap_B = 1000;      // mo and dr; 0 skips the bootstrap
  double level = 0.95;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  Monotonicity mode() const { return nuisance.mode; }
  std::vector<EstimandId> resolved_estimands() const {
    auto e = estimands.empty() ? default_estimands(mode()) : estimands;
    for (const auto& x : e) validate_estimand(x, mode());
    return e;
  }
};

// ---------------------------------------------------------------------------
// Stages.

struct FitStage {
  NuisancePredictions pred;
  std::vector<ModelDiagnostics> models;
  std::optional<FoldAssignment> folds;
};

inline FitStage fit_stage(const FlatData& flat, const AnalysisConfig& cfg, unsigned threads) {
  FitStage st;
  if (cfg.method == Method::Np) {
    std::vector<int> arms;
    for (std::size_t i = 0; i < flat.num_clusters(); ++i) arms.push_back(flat.a[flat.offsets[i]]);
    FoldAssignment folds = make_folds(arms, cfg.folds, derive_seed(cfg.seed, {stream::kFolds}));
    CrossFit cf = cross_fit(flat, cfg.nuisance, folds, derive_seed(cfg.seed, {stream::kCrossFit}), threads);
    st.pred = std::move(cf.predictions);
    for (const auto& m : cf.models)
      st.models.insert(st.models.end(), m.diagnostics().begin(), m.diagnostics().end());
    st.folds = std::move(cf.folds);
  } else {
    FullFit ff = fit_full(flat, cfg.nuisance, derive_seed(cfg.seed, {stream::kForest}));
    st.pred = std::move(ff.predictions);
    st.models = ff.model.diagnostics();
  }
  return st;
}

inline std::size_t cell_index(Cell c) { return c.a == 0 ? 2 : c.a_star == 1 ? 0 : 1; }
inline constexpr std::array<Cell, 3> kCells{Cell{1, 1}, Cell{1, 0}, Cell{0, 0}};

// theta components for the (stratum, cell) pairs the estimands need.
struct EvalStage {
  std::array<std::array<std::optional<EifComponents>, 3>, 4> cells;

  const EifComponents& at(Stratum g, Cell c) const {
    const auto& o = cells[static_cast<std::size_t>(g)][cell_index(c)];
    PSCRT_REQUIRE(o.has_value(), ErrorCode::InvalidConfig, "theta component was not computed");
    return *o;
  }
  ThetaCells thetas(Stratum g) const {
    ThetaCells t;
    const auto& row = cells[static_cast<std::size_t>(g)];
    if (row[0]) t.t11 = row[0]->theta;
    if (row[1]) t.t10 = row[1]->theta;
    if (row[2]) t.t00 = row[2]->theta;
    return t;
  }
};

inline std::vector<std::pair<Stratum, Cell>> needed_cells(const std::vector<EstimandId>& est, Monotonicity mode) {
  std::vector<std::pair<Stratum, Cell>> out;
  auto add = [&](Stratum g, Cell c) {
    for (const auto& [h, d] : out)
      if (h == g && d == c) return;
    out.emplace_back(g, c);
  };
  for (const auto& e : est) {
    if (e.kind == EstimandId::Kind::Theta) add(e.g, e.cell);
    if (e.kind == EstimandId::Kind::Effect)
      for (const auto& [c, l] : effect_contrast(e.g, e.effect, mode)) add(e.g, c);
  }
  return out;
}

inline EvalStage evaluate_stage(const FlatData& flat, const NuisancePredictions& pred, Method method,
                                const std::vector<std::pair<Stratum, Cell>>& cells,
                                const SensitivityFunctions* sens = nullptr,
                                Monotonicity mode = Monotonicity::Standard) {
  EvalStage ev;
  for (const auto& [g, c] : cells) {
    std::optional<Eigen::VectorXd> omega;
    if (sens) omega = omega_rows(flat, pred, g, c, *sens, mode);
    const OmegaRows w = omega ? &*omega : nullptr;
    ev.cells[static_cast<std::size_t>(g)][cell_index(c)] =
        method == Method::Mo ? moment_components(flat, pred, g, c, w) : eif_components(flat, pred, g, c, w);
  }
  return ev;
}

// Augmented proportion (1/K) sum (W/N) sum_j psi2 / mean W and its
// influence-function variance.
struct ProportionEstimate {
  double value = 0.0;
  double variance = 0.0;
};

inline ProportionEstimate augmented_proportion(const FlatData& flat, const NuisancePredictions& pred, Stratum g) {
  const StratumScheme s = scheme(g);
  const auto K = flat.num_clusters();
  Eigen::VectorXd c2(static_cast<Eigen::Index>(K)), w(static_cast<Eigen::Index>(K));
  for (std::size_t i = 0; i < K; ++i) {
    double t = 0.0;
    for (std::size_t r = flat.offsets[i]; r < flat.offsets[i + 1]; ++r)
      t += eif_psi2(s, flat.a[r], flat.d[r], pred.p(1, 1, r), pred.p(0, 1, r), flat.pi);
    c2[static_cast<Eigen::Index>(i)] = flat.weight[i] / flat.size[i] * t;
    w[static_cast<Eigen::Index>(i)] = flat.weight[i];
  }
  ProportionEstimate out;
  out.value = mean_of(c2) / mean_of(w);
  out.variance = var_np(c2, w, out.value);
  return out;
}

// Point values in estimand order.
inline std::vector<double> point_values(const FlatData& flat, const NuisancePredictions& pred, Method method,
                                        const EvalStage& ev, const std::vector<EstimandId>& est, Monotonicity mode) {
  std::vector<double> out;
  std::optional<StratumProportions> props;
  for (const auto& e : est) {
    switch (e.kind) {
      case EstimandId::Kind::Theta: out.push_back(ev.at(e.g, e.cell).theta); break;
      case EstimandId::Kind::Effect: out.push_back(assemble_effects(e.g, ev.thetas(e.g), mode).get(e.effect)); break;
      case EstimandId::Kind::Itt: out.push_back(itt_estimate(flat).value); break;
      case EstimandId::Kind::Proportion:
        if (method == Method::Mo) {
          if (!props) props = stratum_proportions(flat, pred);
          out.push_back(props->value[static_cast<std::size_t>(e.g)]);
        } else {
          out.push_back(augmented_proportion(flat, pred, e.g).value);
        }
        break;
    }
  }
  return out;
}

// Influence-function variance of each estimand (np).
inline std::vector<double> eif_variances(const FlatData& flat, const NuisancePredictions& pred, const EvalStage& ev,
                                         const std::vector<EstimandId>& est, Monotonicity mode) {
  std::vector<double> out;
  for (const auto& e : est) {
    switch (e.kind) {
      case EstimandId::Kind::Theta: {
        const auto& c = ev.at(e.g, e.cell);
        out.push_back(var_np(c.c1, c.c2, c.theta));
        break;
      }
      case EstimandId::Kind::Effect: {
        const auto contrast = effect_contrast(e.g, e.effect, mode);
        if (contrast.empty()) {
          out.push_back(0.0);
          break;
        }
        std::vector<const EifComponents*> cells;
        std::vector<double> lambda;
        for (const auto& [c, l] : contrast) {
          cells.push_back(&ev.at(e.g, c));
          lambda.push_back(l);
        }
        out.push_back(contrast_variance(cells, lambda));
        break;
      }
      case EstimandId::Kind::Itt: out.push_back(itt_estimate(flat).variance); break;
      case EstimandId::Kind::Proportion: out.push_back(augmented_proportion(flat, pred, e.g).variance); break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports.

struct EstimateReport {
  std::string estimand;
  Method method = Method::Np;
  double point = 0.0;
  std::optional<double> se;
  std::optional<Interval> ci;
  std::string ci_method;  // "wald", "percentile" or empty
};

struct AnalysisResult {
  std::vector<EstimateReport> estimates;
  std::vector<ModelDiagnostics> models;
  StratumProportions plugin_proportions;
  std::size_t clipped = 0;
  int folds = 0;
  std::uint64_t fold_seed = 0;
  int bootstrap_B = 0;
  std::size_t bootstrap_failed = 0;
  std::optional<std::string> ci_error;

  const EstimateReport& get(const std::string& name) const {
    for (const auto& e : estimates)
      if (e.estimand == name) return e;
    throw Error(ErrorCode::InvalidConfig, "estimand '" + name + "' not in the report");
  }
};

// Everything an estimator replicate needs, without inference.
inline std::vector<double> estimate_points(const FlatData& flat, const AnalysisConfig& cfg,
                                           const std::vector<EstimandId>& est) {
  PSCRT_REQUIRE(flat.num_clusters() >= 2, ErrorCode::TooFewClusters, "at least two clusters are required");
  PSCRT_REQUIRE(num_in_arm(flat, 0) > 0 && num_in_arm(flat, 1) > 0, ErrorCode::ArmMissing,
                "both assignment arms must be present");
  const FitStage st = fit_stage(flat, cfg, 1);
  const EvalStage ev = evaluate_stage(flat, st.pred, cfg.method, needed_cells(est, cfg.mode()));
  return point_values(flat, st.pred, cfg.method, ev, est, cfg.mode());
}

inline AnalysisResult analyze_flat(const FlatData& flat, const AnalysisConfig& cfg) {
  PSCRT_REQUIRE(flat.num_clusters() >= 2, ErrorCode::TooFewClusters, "at least two clusters are required");
  PSCRT_REQUIRE(num_in_arm(flat, 0) > 0 && num_in_arm(flat, 1) > 0, ErrorCode::ArmMissing,
                "both assignment arms must be present");
  PSCRT_REQUIRE(cfg.level > 0.0 && cfg.level < 1.0, ErrorCode::InvalidConfig, "level must lie in (0, 1)");
  const auto est = cfg.resolved_estimands();
  const Monotonicity mode = cfg.mode();

  AnalysisResult res;
  const FitStage st = fit_stage(flat, cfg, cfg.threads);
  const EvalStage ev = evaluate_stage(flat, st.pred, cfg.method, needed_cells(est, mode));
  const auto points = point_values(flat, st.pred, cfg.method, ev, est, mode);
  res.models = st.models;
  res.clipped = st.pred.clipped;
  res.plugin_proportions = stratum_proportions(flat, st.pred);
  if (st.folds) {
    res.folds = st.folds->L;
    res.fold_seed = derive_seed(cfg.seed, {stream::kFolds});
  }
  for (std::size_t k = 0; k < est.size(); ++k) res.estimates.push_back({est[k].name(), cfg.method, points[k], {}, {}, {}});

  if (cfg.method == Method::Np) {
    const auto vars = eif_variances(flat, st.pred, ev, est, mode);
    for (std::size_t k = 0; k < est.size(); ++k) {
      auto& r = res.estimates[k];
      r.se = std::sqrt(vars[k]);
      r.ci = wald_ci(r.point, *r.se, cfg.level);
      r.ci_method = "wald";
    }
  } else if (cfg.bootstrap_B > 0) {
    BootstrapConfig bc;
    bc.B = cfg.bootstrap_B;
    bc.level = cfg.level;
    bc.seed = derive_seed(cfg.seed, {stream::kBootstrap});
    bc.threads = cfg.threads;
    res.bootstrap_B = bc.B;
    try {
      const auto dist = cluster_bootstrap_indices(
          flat.num_clusters(),
          [&](std::span<const std::size_t> idx) { return estimate_points(subset(flat, idx), cfg, est); }, bc);
      res.bootstrap_failed = dist.failed;
      for (std::size_t k = 0; k < est.size(); ++k) {
        auto& r = res.estimates[k];
        const auto vals = dist.component(k);
        r.se = sample_sd(vals);
        r.ci = percentile_ci(vals, cfg.level);
        r.ci_method = "percentile";
      }
    } catch (const Error& e) {
      res.ci_error = e.what();
      for (auto& r : res.estimates) {
        r.se.reset();
        r.ci.reset();
        r.ci_method.clear();
      }
    }
  }
  return res;
}

inline AnalysisResult analyze(const TrialDataset& ds, const AnalysisConfig& cfg) {
  ds.require_design();
  return analyze_flat(flatten(ds, cfg.summary, cfg.weight), cfg);
}

// ---------------------------------------------------------------------------
// Sensitivity grid.

inline std::vector<double> grid_range(double lo, double hi, double step) {
  PSCRT_REQUIRE(lo > 0.0 && hi >= lo, ErrorCode::InvalidConfig, "sensitivity ranges must be positive and ordered");
  PSCRT_REQUIRE(step > 0.0, ErrorCode::InvalidConfig, "grid step must be positive");
  std::vector<double> out;
  const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long k = 0; k <= n; ++k) out.push_back(lo + static_cast<double>(k) * step);
  return out;
}

struct GridAxes {
  std::vector<double> alpha{1.0}, beta{1.0}, gamma{1.0};
};

struct GridRow {
  double alpha = 1.0, beta = 1.0, gamma = 1.0;  // beta is NaN under strong monotonicity
  std::string estimand;
  double estimate = 0.0;
  std::optional<double> se;
  std::optional<Interval> ci;
};

// Dependence of an estimand on the sensitivity functions.
inline std::vector<SensParam> estimand_dependence(const EstimandId& e, Monotonicity mode) {
  if (e.kind == EstimandId::Kind::Theta) return cell_dependence(e.g, e.cell, mode);
  PSCRT_REQUIRE(e.kind == EstimandId::Kind::Effect, ErrorCode::InvalidConfig,
                "sensitivity grids cover theta and effect estimands only, not '" + e.name() + "'");
  return dependence_filter(e.g, e.effect, mode);
}

// Evaluates bias-corrected estimates over the Cartesian grid. Each estimand
// is computed once per combination of the functions it depends on (the
// others held at 1) and copied along the remaining axes. Nuisances and
// folds are fitted once.
inline std::vector<GridRow> grid_scan_flat(const FlatData& flat, const AnalysisConfig& cfg,
                                           const std::vector<EstimandId>& est, const GridAxes& axes) {
  PSCRT_REQUIRE(cfg.method != Method::Dr, ErrorCode::InvalidConfig,
                "bias-corrected estimates are available for the mo and np estimators");
  PSCRT_REQUIRE(!axes.alpha.empty() && !axes.beta.empty() && !axes.gamma.empty(), ErrorCode::InvalidConfig,
                "empty sensitivity axis");
  for (const auto* ax : {&axes.alpha, &axes.beta, &axes.gamma})
    for (double v : *ax) PSCRT_REQUIRE(v > 0.0, ErrorCode::InvalidConfig, "sensitivity values must be positive");
  const Monotonicity mode = cfg.mode();
  for (const auto& e : est) {
    validate_estimand(e, mode);
    (void)estimand_dependence(e, mode);
  }
  const bool strong = mode == Monotonicity::Strong;
  const std::vector<double> beta_axis = strong ? std::vector<double>{1.0} : axes.beta;

  const FitStage st = fit_stage(flat, cfg, cfg.threads);

  // Unique evaluation points: (estimand, alpha, beta, gamma) with unused
  // parameters fixed at 1.
  struct Job {
    std::size_t estimand;
    double a, b, g;
    double value = 0.0;
    std::optional<double> se;
  };
  std::vector<Job> jobs;
  std::vector<std::vector<std::size_t>> job_of_row;  // per estimand: grid row -> job
  for (std::size_t k = 0; k < est.size(); ++k) {
    const auto dep = estimand_dependence(est[k], mode);
    auto uses = [&](SensParam p) { return std::find(dep.begin(), dep.end(), p) != dep.end(); };
    std::vector<std::size_t> map;
    for (double a : axes.alpha)
      for (double b : beta_axis)
        for (double g : axes.gamma) {
          const double ea = uses(SensParam::Alpha) ? a : 1.0;
          const double eb = uses(SensParam::Beta) ? b : 1.0;
          const double eg = uses(SensParam::Gamma) ? g : 1.0;
          std::size_t j = jobs.size();
          for (std::size_t q = 0; q < jobs.size(); ++q)
            if (jobs[q].estimand == k && jobs[q].a == ea && jobs[q].b == eb && jobs[q].g == eg) j = q;
          if (j == jobs.size()) jobs.push_back({k, ea, eb, eg, 0.0, std::nullopt});
          map.push_back(j);
        }
    job_of_row.push_back(std::move(map));
  }

  parallel_for(jobs.size(), cfg.threads, [&](std::size_t j) {
    Job& job = jobs[j];
    const std::vector<EstimandId> one{est[job.estimand]};
    const auto s = SensitivityFunctions::constants(job.a, job.b, job.g);
    const EvalStage ev = evaluate_stage(flat, st.pred, cfg.method, needed_cells(one, mode), &s, mode);
    job.value = point_values(flat, st.pred, cfg.method, ev, one, mode)[0];
    if (cfg.method == Method::Np) job.se = std::sqrt(eif_variances(flat, st.pred, ev, one, mode)[0]);
  });

  std::vector<GridRow> rows;
  for (std::size_t k = 0; k < est.size(); ++k) {
    std::size_t r = 0;
    for (double a : axes.alpha)
      for (double b : beta_axis)
        for (double g : axes.gamma) {
          const Job& job = jobs[job_of_row[k][r++]];
          GridRow row;
          row.alpha = a;
          row.beta = strong ? std::nan("") : b;
          row.gamma = g;
          row.estimand = est[k].name();
          row.estimate = job.value;
          row.se = job.se;
          if (job.se) row.ci = wald_ci(job.value, *job.se, cfg.level);
          rows.push_back(std::move(row));
        }
  }
  return rows;
}

inline std::vector<GridRow> grid_scan(const TrialDataset& ds, const AnalysisConfig& cfg,
                                      const std::vector<EstimandId>& est, const GridAxes& axes) {
  ds.require_design();
  return grid_scan_flat(flatten(ds, cfg.summary, cfg.weight), cfg, est, axes);
}

// Single bias-corrected analysis at given sensitivity functions (np: with
// Wald intervals; mo: points only).
inline AnalysisResult analyze_bc_flat(const FlatData& flat, const AnalysisConfig& cfg, const SensitivityFunctions& s) {
  PSCRT_REQUIRE(cfg.method != Method::Dr, ErrorCode::InvalidConfig,
                "bias-corrected estimates are available for the mo and np estimators");
  const auto est = cfg.resolved_estimands();
  const Monotonicity mode = cfg.mode();
  for (const auto& e : est) (void)estimand_dependence(e, mode);
  const FitStage st = fit_stage(flat, cfg, cfg.threads);
  const EvalStage ev = evaluate_stage(flat, st.pred, cfg.method, needed_cells(est, mode), &s, mode);
  const auto points = point_values(flat, st.pred, cfg.method, ev, est, mode);
  AnalysisResult res;
  res.models = st.models;
  res.clipped = st.pred.clipped;
  res.plugin_proportions = stratum_proportions(flat, st.pred);
  for (std::size_t k = 0; k < est.size(); ++k) res.estimates.push_back({est[k].name(), cfg.method, points[k], {}, {}, {}});
  if (cfg.method == Method::Np) {
    const auto vars = eif_variances(flat, st.pred, ev, est, mode);
    for (std::size_t k = 0; k < est.size(); ++k) {
      auto& r = res.estimates[k];
      r.se = std::sqrt(vars[k]);
      r.ci = wald_ci(r.point, *r.se, cfg.level);
      r.ci_method = "wald";
    }
  }
  return res;
}

}  // namespace pscrt
