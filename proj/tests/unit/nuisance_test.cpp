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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "pscrt/nuisance/nuisance.hpp"
#include "pscrt/simulation.hpp"
#include "test_util.hpp"

namespace pscrt {
namespace {

using testing::expect_error;

TEST(Folds, EvenSplit) {
  std::vector<int> arms{1, 0, 1, 0, 1, 0, 1, 0, 1, 0};
  const auto f = make_folds(arms, 5, 1);
  for (int l = 0; l < 5; ++l) {
    const auto m = f.members(l);
    ASSERT_EQ(m.size(), 2u);
    EXPECT_NE(arms[m[0]], arms[m[1]]);
  }
}

TEST(Folds, BalancedByArmAndDeterministic) {
  std::vector<int> arms;
  for (int i = 0; i < 37; ++i) arms.push_back(i % 3 == 0 ? 1 : 0);
  const auto f = make_folds(arms, 5, 9);
  EXPECT_EQ(f.fold_of, make_folds(arms, 5, 9).fold_of);
  std::size_t lo = 1000, hi = 0, lo1 = 1000, hi1 = 0;
  for (int l = 0; l < 5; ++l) {
    const auto m = f.members(l);
    lo = std::min(lo, m.size());
    hi = std::max(hi, m.size());
    const auto t = static_cast<std::size_t>(std::count_if(m.begin(), m.end(), [&](std::size_t i) { return arms[i] == 1; }));
    lo1 = std::min(lo1, t);
    hi1 = std::max(hi1, t);
  }
  EXPECT_LE(hi - lo, 1u);
  EXPECT_LE(hi1 - lo1, 1u);
}

TEST(Folds, FoldCountBounds) {
  std::vector<int> arms{1, 0, 1};
  expect_error(ErrorCode::InvalidConfig, [&] { make_folds(arms, 1, 1); });
  expect_error(ErrorCode::TooFewClusters, [&] { make_folds(arms, 4, 1); });
}

NuisanceSpec glm_spec(Monotonicity mode = Monotonicity::Standard) {
  NuisanceSpec s;
  s.mode = mode;
  return s;
}

TEST(Nuisance, PredictionsAreCompleteAndClipped) {
  const FlatData flat = testing::sim_flat(40, 1);
  NuisanceSpec spec = glm_spec();
  spec.clip_eps = 0.2;
  const auto fit = fit_full(flat, spec, 1);
  const auto& p = fit.predictions;
  for (std::size_t r = 0; r < flat.num_rows(); ++r) {
    for (int a : {0, 1}) {
      EXPECT_GE(p.p(a, 1, r), 0.2);
      EXPECT_LE(p.p(a, 1, r), 0.8);
      EXPECT_EQ(p.p(a, 1, r) + p.p(a, 0, r), 1.0);
      for (int d : {0, 1}) EXPECT_TRUE(std::isfinite(p.m(a, d, r)));
    }
  }
  EXPECT_GT(p.clipped, 0u);
  spec.clip_eps = 0.5;
  expect_error(ErrorCode::InvalidConfig, [&] { fit_full(flat, spec, 1); });
}

TEST(Nuisance, StrongModeFixesControlUptakeAtZero) {
  DGPConfig cfg;
  cfg.K = 40;
  const FlatData flat = flatten(simulate_dataset(cfg, 2), FeatureSummary{}, WeightSpec{});
  const auto fit = fit_full(flat, glm_spec(Monotonicity::Strong), 1);
  for (std::size_t r = 0; r < flat.num_rows(); ++r) EXPECT_EQ(fit.predictions.p(0, 1, r), 0.0);
}

TEST(Nuisance, UptakeFormulaCannotUseUptake) {
  const FlatData flat = testing::sim_flat(20, 3);
  NuisanceSpec spec = glm_spec();
  spec.p_formula = "a + d";
  expect_error(ErrorCode::InvalidConfig, [&] { fit_full(flat, spec, 1); });
}

TEST(CrossFit, NoClusterIsPredictedByAModelTrainedOnIt) {
  const TrialDataset ds = testing::sim_trial(30, 4);
  const FlatData flat = flatten(ds, FeatureSummary{}, WeightSpec{});
  const auto folds = make_folds(ds, 5, 4);
  const auto cf = cross_fit(flat, glm_spec(), folds, 4, 2);
  ASSERT_EQ(cf.models.size(), 5u);
  for (int l = 0; l < 5; ++l) {
    const auto& tr = cf.models[static_cast<std::size_t>(l)].training_clusters();
    const std::set<std::size_t> trained(tr.begin(), tr.end());
    for (std::size_t c : folds.members(l)) EXPECT_EQ(trained.count(c), 0u);
    EXPECT_EQ(trained.size() + folds.members(l).size(), 30u);
  }
  for (std::size_t r = 0; r < flat.num_rows(); ++r) EXPECT_TRUE(std::isfinite(cf.predictions.p(1, 1, r)));
  // Thread count does not change the result.
  const auto cf1 = cross_fit(flat, glm_spec(), folds, 4, 1);
  EXPECT_EQ(cf1.predictions.p1[1], cf.predictions.p1[1]);
  EXPECT_EQ(cf1.predictions.mu[2], cf.predictions.mu[2]);
}

TEST(CrossFit, IdenticalFoldsReproduceFullFit) {
  // Duplicating every cluster L times and putting one copy in each fold
  // gives every fold the same training data (up to duplication), so GLM
  // predictions equal the full-data fit.
  const TrialDataset base = testing::sim_trial(20, 5);
  std::vector<std::size_t> idx;
  for (int copy = 0; copy < 3; ++copy)
    for (std::size_t i = 0; i < base.num_clusters(); ++i) idx.push_back(i);
  const FlatData flat = flatten(base.subset(idx), FeatureSummary{}, WeightSpec{});
  FoldAssignment f;
  f.L = 3;
  for (int copy = 0; copy < 3; ++copy)
    for (std::size_t i = 0; i < base.num_clusters(); ++i) f.fold_of.push_back(copy);
  const auto cf = cross_fit(flat, glm_spec(), f, 1);
  const auto full = fit_full(flatten(base, FeatureSummary{}, WeightSpec{}), glm_spec(), 1);
  const std::size_t n = full.predictions.rows();
  for (std::size_t r = 0; r < n; ++r) {
    EXPECT_NEAR(cf.predictions.p(1, 1, r), full.predictions.p(1, 1, r), 1e-8);
    EXPECT_NEAR(cf.predictions.m(1, 0, r), full.predictions.m(1, 0, r), 1e-8);
  }
}

TEST(CrossFit, DegenerateComplementIsReported) {
  const TrialDataset ds = testing::sim_trial(10, 6);
  const FlatData flat = flatten(ds, FeatureSummary{}, WeightSpec{});
  FoldAssignment f;
  f.L = 2;
  for (const auto& c : ds.clusters()) f.fold_of.push_back(c.a);  // each fold is one arm
  expect_error(ErrorCode::FoldDegenerate, [&] { cross_fit(flat, glm_spec(), f, 1); });
}

TEST(CrossFit, EnsembleIsDeterministic) {
  const FlatData flat = testing::sim_flat(30, 7);
  NuisanceSpec spec = glm_spec();
  spec.learner = LearnerKind::Ensemble;
  spec.ensemble.forest.trees = 10;
  std::vector<int> arms;
  for (std::size_t i = 0; i < flat.num_clusters(); ++i) arms.push_back(flat.a[flat.offsets[i]]);
  const auto folds = make_folds(arms, 3, 7);
  const auto a = cross_fit(flat, spec, folds, 7, 1);
  const auto b = cross_fit(flat, spec, folds, 7, 3);
  EXPECT_EQ(a.predictions.p1[1], b.predictions.p1[1]);
  EXPECT_EQ(a.predictions.mu[0], b.predictions.mu[0]);
}

}  // namespace
}  // namespace pscrt
