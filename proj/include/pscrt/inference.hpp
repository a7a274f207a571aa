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

// Cluster bootstrap and interval construction.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "pscrt/core/error.hpp"
#include "pscrt/core/normal.hpp"
#include "pscrt/core/parallel.hpp"
#include "pscrt/core/random.hpp"
#include "pscrt/data_model.hpp"

namespace pscrt {

struct BootstrapConfig {
  int B = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  double max_failed_fraction = 0.10;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.95;
};

// Replicates of a vector-valued estimator. replicates[b] is empty when
// replicate b failed.
struct BootstrapDistribution {
  std::vector<std::vector<double>> replicates;
  std::size_t failed = 0;

  // Successful values of component k, in replicate order.
  std::vector<double> component(std::size_t k) const {
    std::vector<double> out;
    for (const auto& r : replicates)
      if (!r.empty()) out.push_back(r[k]);
    return out;
  }
};

// Cluster indices of replicate b: K draws with replacement.
inline std::vector<std::size_t> bootstrap_indices(std::size_t K, std::uint64_t seed, std::size_t b) {
  Rng rng = make_rng(seed, {stream::kBootstrap, static_cast<std::uint64_t>(b)});
  std::vector<std::size_t> idx(K);
  for (auto& i : idx) i = uniform_index(rng, K);
  return idx;
}

// Evaluates `estimator` on B cluster resamples given as index lists.
// Replicates where the estimator throws a pscrt::Error are dropped and
// counted; more than the configured fraction is an error.
inline BootstrapDistribution cluster_bootstrap_indices(
    std::size_t K, const std::function<std::vector<double>(std::span<const std::size_t>)>& estimator,
    const BootstrapConfig& cfg) {
  PSCRT_REQUIRE(cfg.B >= 1, ErrorCode::InvalidConfig, "bootstrap needs at least one replicate");
  PSCRT_REQUIRE(K >= 1, ErrorCode::TooFewClusters, "bootstrap needs clusters");
  BootstrapDistribution out;
  out.replicates.resize(static_cast<std::size_t>(cfg.B));
  std::vector<char> failed(static_cast<std::size_t>(cfg.B), 0);
  parallel_for(static_cast<std::size_t>(cfg.B), cfg.threads, [&](std::size_t b) {
    const auto idx = bootstrap_indices(K, cfg.seed, b);
    try {
      out.replicates[b] = estimator(idx);
    } catch (const Error&) {
      failed[b] = 1;
      out.replicates[b].clear();
    }
  });
  for (char f : failed) out.failed += static_cast<std::size_t>(f);
  PSCRT_REQUIRE(static_cast<double>(out.failed) <= cfg.max_failed_fraction * cfg.B,
                ErrorCode::TooManyFailedReplicates,
                std::to_string(out.failed) + " of " + std::to_string(cfg.B) + " bootstrap replicates failed");
  return out;
}

// Same with the estimator written against a resampled dataset.
inline BootstrapDistribution cluster_bootstrap(const std::function<std::vector<double>(const TrialDataset&)>& estimator,
                                               const TrialDataset& ds, const BootstrapConfig& cfg) {
  return cluster_bootstrap_indices(
      ds.num_clusters(), [&](std::span<const std::size_t> idx) { return estimator(ds.subset(idx)); }, cfg);
}

// Empirical quantile with linear interpolation between order statistics
// (h = (n - 1) q, inclusive endpoints).
inline double quantile_linear(std::vector<double> v, double q) {
  PSCRT_REQUIRE(!v.empty(), ErrorCode::InsufficientReplicates, "quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline Interval percentile_ci(const std::vector<double>& values, double level) {
  PSCRT_REQUIRE(values.size() >= 100, ErrorCode::InsufficientReplicates,
                "percentile interval needs at least 100 replicates, got " + std::to_string(values.size()));
  PSCRT_REQUIRE(level > 0.0 && level < 1.0, ErrorCode::InvalidConfig, "interval level must lie in (0, 1)");
  const double alpha = 1.0 - level;
  return {quantile_linear(values, alpha / 2.0), quantile_linear(values, 1.0 - alpha / 2.0), level};
}

inline Interval wald_ci(double point, double se, double level) {
  PSCRT_REQUIRE(se >= 0.0, ErrorCode::InvalidData, "standard error must be non-negative");
  PSCRT_REQUIRE(level > 0.0 && level < 1.0, ErrorCode::InvalidConfig, "interval level must lie in (0, 1)");
  const double z = normal_quantile(1.0 - (1.0 - level) / 2.0);
  return {point - z * se, point + z * se, level};
}

inline double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace pscrt
