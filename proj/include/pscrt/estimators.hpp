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

// theta_g(a, a*) = E[W/N sum_j e_j(g) mu_j(a, d*)] / E[W/N sum_j e_j(g)]
// by the moment (plug-in) ratio and by the influence-function ratio used
// for both the doubly robust (full-data parametric fits) and the
// cross-fitted estimator. Effects are contrasts of theta across cells.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pscrt/core/error.hpp"
#include "pscrt/data_model.hpp"
#include "pscrt/nuisance/nuisance.hpp"
#include "pscrt/principal_score.hpp"
#include "pscrt/strata.hpp"

namespace pscrt {

inline constexpr double kDenominatorGuard = 1e-8;

// Augmented principal score:
//   I(A=a_dag)(I(D=d_dag) - p(a_dag,d_dag))/pi_{a_dag}
//   - h (1-A)(D - p(0,1))/pi_0 + p(a_dag,d_dag) - h p(0,1)
inline double eif_psi2(const StratumScheme& s, int A, int D, double p11, double p01, double pi) {
  const double p1 = s.a_dagger == 1 ? p11 : p01;
  const double pad = s.d_dagger == 1 ? p1 : 1.0 - p1;
  const double pi_dag = s.a_dagger == 1 ? pi : 1.0 - pi;
  double v = 0.0;
  if (A == s.a_dagger) v += ((D == s.d_dagger ? 1.0 : 0.0) - pad) / pi_dag;
  if (s.h != 0 && A == 0) v -= (D - p01) / (1.0 - pi);
  return v + pad - s.h * p01;
}

// Outcome component, optionally scaled by a sensitivity weight omega:
//   omega * I(A=a, D=d*)/(pi_a p(a,d*)) (Y - mu(a,d*)) e_g + (psi2 omega) mu(a,d*)
// omega = 1 gives the unweighted component exactly. e_g is the raw
// (unfloored) principal score.
inline double eif_psi1(const StratumScheme& s, Cell c, int A, int D, double Y, double p11, double p01,
                       double mu, double pi, double omega = 1.0) {
  const int ds = s.d_star(c);
  const double psi2 = eif_psi2(s, A, D, p11, p01, pi);
  double t1 = 0.0;
  if (A == c.a && D == ds) {
    const double pa1 = c.a == 1 ? p11 : p01;
    const double pad = ds == 1 ? pa1 : 1.0 - pa1;
    const double pi_a = c.a == 1 ? pi : 1.0 - pi;
    t1 = (1.0 / (pi_a * pad)) * (Y - mu) * principal_score_raw(s, p11, p01);
  }
  return omega * t1 + (psi2 * omega) * mu;
}

// Cluster-level numerator and denominator contributions (W/N) sum_j ...
// for one (stratum, cell), together with the resulting ratio.
struct EifComponents {
  Stratum g = Stratum::Complier;
  Cell cell;
  Eigen::VectorXd psi1, psi2;  // per row (empty for the moment estimator)
  Eigen::VectorXd c1, c2;      // per cluster
  double theta = 0.0;
  std::size_t floored = 0;     // moment estimator: rows with negative scores
};

inline double mean_of(const Eigen::VectorXd& v) { return v.sum() / static_cast<double>(v.size()); }

inline double ratio_estimate(const Eigen::VectorXd& c1, const Eigen::VectorXd& c2) {
  const double den = mean_of(c2);
  PSCRT_REQUIRE(std::isfinite(den) && den > kDenominatorGuard, ErrorCode::ZeroDenominator,
                "estimated stratum mass " + std::to_string(den) + " is not above 1e-8");
  return mean_of(c1) / den;
}

// Per-row sensitivity weights, or null for omega = 1.
using OmegaRows = const Eigen::VectorXd*;

inline EifComponents eif_components(const FlatData& flat, const NuisancePredictions& pred, Stratum g, Cell cell,
                                    OmegaRows omega = nullptr) {
  const StratumScheme s = scheme(g);
  require_cell(s, cell);
  const int ds = s.d_star(cell);
  EifComponents out;
  out.g = g;
  out.cell = cell;
  const auto n = static_cast<Eigen::Index>(flat.num_rows());
  const auto K = static_cast<Eigen::Index>(flat.num_clusters());
  out.psi1.resize(n);
  out.psi2.resize(n);
  out.c1.resize(K);
  out.c2.resize(K);
  for (std::size_t i = 0; i < flat.num_clusters(); ++i) {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t r = flat.offsets[i]; r < flat.offsets[i + 1]; ++r) {
      const auto ri = static_cast<Eigen::Index>(r);
      const double p11 = pred.p(1, 1, r), p01 = pred.p(0, 1, r);
      const double w = omega ? (*omega)[ri] : 1.0;
      const double v2 = eif_psi2(s, flat.a[r], flat.d[r], p11, p01, flat.pi);
      const double v1 = eif_psi1(s, cell, flat.a[r], flat.d[r], flat.y[r], p11, p01, pred.m(cell.a, ds, r), flat.pi, w);
      out.psi1[ri] = v1;
      out.psi2[ri] = v2;
      s1 += v1;
      s2 += v2;
    }
    const double wn = flat.weight[i] / flat.size[i];
    out.c1[static_cast<Eigen::Index>(i)] = wn * s1;
    out.c2[static_cast<Eigen::Index>(i)] = wn * s2;
  }
  out.theta = ratio_estimate(out.c1, out.c2);
  return out;
}

// Plug-in ratio with floored scores: numerator omega e mu, denominator e.
inline EifComponents moment_components(const FlatData& flat, const NuisancePredictions& pred, Stratum g, Cell cell,
                                       OmegaRows omega = nullptr) {
  const StratumScheme s = scheme(g);
  require_cell(s, cell);
  const int ds = s.d_star(cell);
  EifComponents out;
  out.g = g;
  out.cell = cell;
  const auto K = static_cast<Eigen::Index>(flat.num_clusters());
  out.c1.resize(K);
  out.c2.resize(K);
  for (std::size_t i = 0; i < flat.num_clusters(); ++i) {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t r = flat.offsets[i]; r < flat.offsets[i + 1]; ++r) {
      const double raw = principal_score_raw(s, pred.p(1, 1, r), pred.p(0, 1, r));
      if (raw < 0.0) ++out.floored;
      const double e = std::max(0.0, raw);
      const double w = omega ? (*omega)[static_cast<Eigen::Index>(r)] : 1.0;
      s1 += w * e * pred.m(cell.a, ds, r);
      s2 += e;
    }
    const double wn = flat.weight[i] / flat.size[i];
    out.c1[static_cast<Eigen::Index>(i)] = wn * s1;
    out.c2[static_cast<Eigen::Index>(i)] = wn * s2;
  }
  out.theta = ratio_estimate(out.c1, out.c2);
  return out;
}

// (1/K^2) sum_i (c1_i - theta c2_i)^2 / (mean c2)^2.
inline double var_np(const Eigen::VectorXd& c1, const Eigen::VectorXd& c2, double theta) {
  PSCRT_REQUIRE(c1.size() == c2.size() && c1.size() > 0, ErrorCode::InvalidData, "mismatched EIF contributions");
  const double den = mean_of(c2);
  PSCRT_REQUIRE(std::isfinite(den) && den > kDenominatorGuard, ErrorCode::ZeroDenominator,
                "estimated stratum mass is not above 1e-8");
  const double K = static_cast<double>(c1.size());
  return (c1 - theta * c2).squaredNorm() / (K * K) / (den * den);
}

// Variance of sum_c lambda_c theta_c for cells of one stratum. The cells
// share the denominator contributions c2.
inline double contrast_variance(std::span<const EifComponents* const> cells, std::span<const double> lambda) {
  PSCRT_REQUIRE(!cells.empty() && cells.size() == lambda.size(), ErrorCode::InvalidData,
                "contrast needs one coefficient per cell");
  const Stratum g = cells.front()->g;
  for (const auto* c : cells)
    PSCRT_REQUIRE(c->g == g, ErrorCode::MixedStrata, "contrast mixes cells from different strata");
  const Eigen::VectorXd& c2 = cells.front()->c2;
  Eigen::VectorXd num = Eigen::VectorXd::Zero(c2.size());
  double theta = 0.0;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    num += lambda[k] * cells[k]->c1;
    theta += lambda[k] * cells[k]->theta;
  }
  return var_np(num, c2, theta);
}

// ---------------------------------------------------------------------------
// Effects.

enum class EffectKind { ICE, NAE, PCE };

inline std::string to_string(EffectKind k) {
  switch (k) {
    case EffectKind::ICE: return "ICE";
    case EffectKind::NAE: return "NAE";
    case EffectKind::PCE: return "PCE";
  }
  return "?";
}

// Cells and coefficients defining an effect. An empty list is the literal
// zero (ICE of always- and never-takers).
inline std::vector<std::pair<Cell, double>> effect_contrast(Stratum g, EffectKind k, Monotonicity mode) {
  require_available(g, mode);
  const Cell c11{1, 1}, c10{1, 0}, c00{0, 0};
  if (g == Stratum::Complier) {
    switch (k) {
      case EffectKind::ICE: return {{c11, 1.0}, {c10, -1.0}};
      case EffectKind::NAE: return {{c10, 1.0}, {c00, -1.0}};
      case EffectKind::PCE: return {{c11, 1.0}, {c00, -1.0}};
    }
  }
  if (k == EffectKind::ICE) return {};
  return {{c10, 1.0}, {c00, -1.0}};
}

struct Effects {
  double ice = 0.0, nae = 0.0, pce = 0.0;
  double get(EffectKind k) const { return k == EffectKind::ICE ? ice : k == EffectKind::NAE ? nae : pce; }
};

// theta(a, a*) lookup for one stratum; cells not defined for the stratum are
// never read.
struct ThetaCells {
  double t11 = 0.0, t10 = 0.0, t00 = 0.0;
  double at(Cell c) const { return c.a == 0 ? t00 : c.a_star == 1 ? t11 : t10; }
};

// PCE is formed as ICE + NAE so that the telescoping identity holds to the
// last bit; ICE of always- and never-takers is the literal zero.
inline Effects assemble_effects(Stratum g, const ThetaCells& t, Monotonicity mode) {
  require_available(g, mode);
  Effects e;
  if (g == Stratum::Complier) {
    e.ice = t.t11 - t.t10;
    e.nae = t.t10 - t.t00;
    e.pce = e.ice + e.nae;
  } else {
    e.ice = 0.0;
    e.nae = t.t10 - t.t00;
    e.pce = e.nae;
  }
  return e;
}

// ---------------------------------------------------------------------------
// Intention to treat.

struct IttResult {
  double value = 0.0;
  double variance = 0.0;  // delta method over clusters
};

// Difference of the W-weighted cluster-mean outcomes between arms.
inline IttResult itt_estimate(const FlatData& flat) {
  const std::size_t K = flat.num_clusters();
  std::vector<double> ybar(K);
  double sw[2] = {0, 0}, swy[2] = {0, 0};
  for (std::size_t i = 0; i < K; ++i) {
    double s = 0.0;
    for (std::size_t r = flat.offsets[i]; r < flat.offsets[i + 1]; ++r) s += flat.y[r];
    ybar[i] = s / flat.size[i];
    const int a = flat.a[flat.offsets[i]];
    sw[a] += flat.weight[i];
    swy[a] += flat.weight[i] * ybar[i];
  }
  PSCRT_REQUIRE(sw[0] > 0.0 && sw[1] > 0.0, ErrorCode::ArmMissing, "both assignment arms must be present");
  const double m1 = swy[1] / sw[1], m0 = swy[0] / sw[0];
  IttResult out;
  out.value = m1 - m0;
  const double k = static_cast<double>(K);
  double v = 0.0;
  for (std::size_t i = 0; i < K; ++i) {
    const int a = flat.a[flat.offsets[i]];
    const double inf = a == 1 ? flat.weight[i] * (ybar[i] - m1) / (sw[1] / k)
                              : -flat.weight[i] * (ybar[i] - m0) / (sw[0] / k);
    v += inf * inf;
  }
  out.variance = v / (k * k);
  return out;
}

}  // namespace pscrt
