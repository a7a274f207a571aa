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

// Principal scores e_g(C) from the uptake surface, and the weighted
// stratum proportions.

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>

#include "pscrt/data_model.hpp"
#include "pscrt/nuisance/nuisance.hpp"
#include "pscrt/strata.hpp"

namespace pscrt {

// p(a_dag, d_dag) - h p(0, 1), before flooring. p11 = p(1,1,C),
// p01 = p(0,1,C).
inline double principal_score_raw(const StratumScheme& s, double p11, double p01) {
  const double p1 = s.a_dagger == 1 ? p11 : p01;
  const double pad = s.d_dagger == 1 ? p1 : 1.0 - p1;
  return pad - s.h * p01;
}

inline double principal_score_raw(Stratum g, double p11, double p01) {
  return principal_score_raw(scheme(g), p11, p01);
}

// Floored at zero.
inline double principal_score(Stratum g, double p11, double p01) {
  return std::max(0.0, principal_score_raw(g, p11, p01));
}

struct StratumProportions {
  std::array<double, 4> value{};        // by Stratum
  std::array<std::size_t, 4> floored{}; // rows with a negative raw score
};

// (1/K) sum_i (W_i/N_i) sum_j e_j(g) / (1/K) sum_i W_i for every stratum.
inline StratumProportions stratum_proportions(const FlatData& flat, const NuisancePredictions& pred) {
  StratumProportions out;
  std::array<double, 4> num{};
  double den = 0.0;
  for (std::size_t i = 0; i < flat.num_clusters(); ++i) {
    std::array<double, 4> s{};
    for (std::size_t r = flat.offsets[i]; r < flat.offsets[i + 1]; ++r) {
      const double p11 = pred.p(1, 1, r), p01 = pred.p(0, 1, r);
      for (Stratum g : kAllStrata) {
        const auto k = static_cast<std::size_t>(g);
        const double e = principal_score_raw(g, p11, p01);
        if (e < 0.0) ++out.floored[k];
        s[k] += std::max(0.0, e);
      }
    }
    const double w = flat.weight[i] / flat.size[i];
    for (std::size_t k = 0; k < 4; ++k) num[k] += w * s[k];
    den += flat.weight[i];
  }
  for (std::size_t k = 0; k < 4; ++k) out.value[k] = num[k] / den;
  return out;
}

}  // namespace pscrt
