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

// Sensitivity to principal ignorability. Three ratios of conditional
// outcome means relax it:
//   alpha = E[Y(0) | co] / E[Y(0) | nt]
//   beta  = E[Y(1) | co] / E[Y(1) | at]
//   gamma = E[Y(1, own uptake 0) | co] / E[same | nt]
// and enter the estimators through a per-row weight omega(g, a, a*).

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "pscrt/core/error.hpp"
#include "pscrt/core/expression.hpp"
#include "pscrt/data_model.hpp"
#include "pscrt/estimators.hpp"
#include "pscrt/nuisance/nuisance.hpp"
#include "pscrt/strata.hpp"

namespace pscrt {

enum class SensParam { Alpha, Beta, Gamma };

inline std::string to_string(SensParam p) {
  switch (p) {
    case SensParam::Alpha: return "alpha";
    case SensParam::Beta: return "beta";
    case SensParam::Gamma: return "gamma";
  }
  return "?";
}

// A positive constant or an expression over the feature names of a layout
// (x1.., v1.., n).
class SensitivityFn {
 public:
  SensitivityFn() = default;
  explicit SensitivityFn(double c) : constant_(c) {
    PSCRT_REQUIRE(std::isfinite(c) && c > 0.0, ErrorCode::InvalidConfig,
                  "sensitivity constants must be positive, got " + std::to_string(c));
  }

  static SensitivityFn expression(const std::string& text, const FeatureLayout& layout) {
    SensitivityFn f;
    f.expr_ = Expression::compile(text, [&layout](const std::string& name) { return layout.index_of(name); });
    f.has_expr_ = true;
    return f;
  }

  bool is_constant() const { return !has_expr_; }
  double constant() const { return constant_; }
  const std::string& text() const { return expr_.text(); }

  double operator()(const Eigen::Ref<const Eigen::RowVectorXd>& features) const {
    if (!has_expr_) return constant_;
    std::vector<double> vars(features.data(), features.data() + features.size());
    const double v = expr_(vars);
    PSCRT_REQUIRE(std::isfinite(v) && v > 0.0, ErrorCode::InvalidConfig,
                  "sensitivity function '" + expr_.text() + "' returned " + std::to_string(v));
    return v;
  }

 private:
  double constant_ = 1.0;
  Expression expr_;
  bool has_expr_ = false;
};

struct SensitivityFunctions {
  SensitivityFn alpha, beta, gamma;

  static SensitivityFunctions constants(double a, double b, double g) {
    return {SensitivityFn(a), SensitivityFn(b), SensitivityFn(g)};
  }
};

// omega(g, a, a*) at one row. Under strong monotonicity beta is fixed at 1.
inline double omega_weight(Stratum g, Cell c, double p11, double p01, double alpha, double beta, double gamma,
                           Monotonicity mode = Monotonicity::Standard) {
  require_cell(scheme(g), c);
  if (mode == Monotonicity::Strong) beta = 1.0;
  auto omega_at10 = [&] {
    const double den = beta * p11 + (1.0 - beta) * p01;
    PSCRT_REQUIRE(den > 0.0, ErrorCode::NonPositiveDenominator,
                  "always-taker weight denominator " + std::to_string(den) + " at p(1,1)=" + std::to_string(p11) +
                      ", p(0,1)=" + std::to_string(p01));
    return p11 / den;
  };
  auto omega_nt00 = [&] {
    const double p00 = 1.0 - p01;
    const double den = 1.0 - alpha * p01 + (alpha - 1.0) * p11;
    PSCRT_REQUIRE(den > 0.0, ErrorCode::NonPositiveDenominator,
                  "never-taker weight denominator " + std::to_string(den) + " at p(1,1)=" + std::to_string(p11) +
                      ", p(0,1)=" + std::to_string(p01));
    return p00 / den;
  };
  switch (g) {
    case Stratum::AlwaysTaker: return c.a == 1 ? omega_at10() : 1.0;
    case Stratum::NeverTaker: return c.a == 0 ? omega_nt00() : 1.0;
    case Stratum::Complier:
      if (c.a == 0) return alpha * omega_nt00();
      if (c.a_star == 1) return mode == Monotonicity::Strong ? 1.0 : beta * omega_at10();
      return gamma;
    case Stratum::Defier: break;
  }
  return 1.0;
}

// Sensitivity functions the weight of (g, cell) actually uses.
inline std::vector<SensParam> cell_dependence(Stratum g, Cell c, Monotonicity mode) {
  require_cell(scheme(g), c);
  switch (g) {
    case Stratum::AlwaysTaker: return c.a == 1 ? std::vector{SensParam::Beta} : std::vector<SensParam>{};
    case Stratum::NeverTaker: return c.a == 0 ? std::vector{SensParam::Alpha} : std::vector<SensParam>{};
    case Stratum::Complier:
      if (c.a == 0) return {SensParam::Alpha};
      if (c.a_star == 1) return mode == Monotonicity::Strong ? std::vector<SensParam>{} : std::vector{SensParam::Beta};
      return {SensParam::Gamma};
    case Stratum::Defier: break;
  }
  return {};
}

// Union of the cell dependencies over the cells of the effect, in the
// order alpha, beta, gamma.
inline std::vector<SensParam> dependence_filter(Stratum g, EffectKind k, Monotonicity mode) {
  bool used[3] = {false, false, false};
  for (const auto& [cell, lambda] : effect_contrast(g, k, mode))
    for (SensParam p : cell_dependence(g, cell, mode)) used[static_cast<int>(p)] = true;
  std::vector<SensParam> out;
  for (int p = 0; p < 3; ++p)
    if (used[p]) out.push_back(static_cast<SensParam>(p));
  return out;
}

// Per-row omega for one (stratum, cell); features are the untransformed
// feature rows of `flat`.
inline Eigen::VectorXd omega_rows(const FlatData& flat, const NuisancePredictions& pred, Stratum g, Cell c,
                                  const SensitivityFunctions& s, Monotonicity mode) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(flat.num_rows()));
  for (std::size_t r = 0; r < flat.num_rows(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    const auto row = flat.features.row(ri);
    try {
      out[ri] = omega_weight(g, c, pred.p(1, 1, r), pred.p(0, 1, r), s.alpha(row), s.beta(row), s.gamma(row), mode);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonPositiveDenominator) throw;
      throw Error(e.code(), e.detail() + " (feature row " + std::to_string(r) + ")");
    }
  }
  return out;
}

}  // namespace pscrt
