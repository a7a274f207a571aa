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

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <vector>

#include "pscrt/core/normal.hpp"
#include "pscrt/core/random.hpp"
#include "pscrt/nuisance/ensemble.hpp"
#include "pscrt/nuisance/forest.hpp"
#include "test_util.hpp"

namespace pscrt {
namespace {

struct Problem {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::size_t> groups;
};

// Nonlinear signal in the first column, a linear one in the second.
Problem regression_problem(int n, std::uint64_t seed, bool binary) {
  Rng rng = make_rng(seed, {0});
  NormalSampler z;
  Problem p{Eigen::MatrixXd(n, 3), Eigen::VectorXd(n), std::vector<std::size_t>(static_cast<std::size_t>(n))};
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) p.x(i, k) = z(rng);
    const double s = 1.5 * std::sin(2.0 * p.x(i, 0)) + 0.8 * p.x(i, 1);
    p.y[i] = binary ? (uniform01(rng) < expit(s) ? 1.0 : 0.0) : s + 0.5 * z(rng);
    p.groups[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i / 4);
  }
  return p;
}

TEST(Forest, DeterministicGivenSeed) {
  const auto p = regression_problem(300, 1, false);
  ForestOptions opt;
  opt.trees = 30;
  const auto a = RegressionForest::fit(p.x, p.y, opt, 9).predict(p.x);
  const auto b = RegressionForest::fit(p.x, p.y, opt, 9).predict(p.x);
  const auto c = RegressionForest::fit(p.x, p.y, opt, 10).predict(p.x);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Forest, ConstantLabelsGiveConstantPredictions) {
  const auto p = regression_problem(100, 2, false);
  ForestOptions opt;
  opt.trees = 10;
  const auto pred = RegressionForest::fit(p.x, Eigen::VectorXd::Constant(100, 3.5), opt, 1).predict(p.x);
  for (Eigen::Index i = 0; i < pred.size(); ++i) EXPECT_DOUBLE_EQ(pred[i], 3.5);
}

TEST(Forest, CapturesNonlinearSignal) {
  const auto train = regression_problem(2000, 3, false);
  const auto test = regression_problem(1000, 4, false);
  ForestOptions opt;
  opt.trees = 50;
  const auto pred = RegressionForest::fit(train.x, train.y, opt, 1).predict(test.x);
  const double mse = (pred - test.y).squaredNorm() / 1000.0;
  const double var = (test.y.array() - test.y.mean()).square().mean();
  EXPECT_LT(mse, 0.5 * var);
}

TEST(Forest, RejectsBadOptions) {
  const auto p = regression_problem(20, 1, false);
  ForestOptions opt;
  opt.trees = 0;
  testing::expect_error(ErrorCode::InvalidConfig, [&] { RegressionForest::fit(p.x, p.y, opt, 1); });
}

TEST(Stacking, ProjectSimplex) {
  const Eigen::VectorXd a = project_simplex(Eigen::Vector3d(0.2, 0.3, 0.5));
  EXPECT_NEAR(a[0], 0.2, 1e-15);
  EXPECT_NEAR(a[2], 0.5, 1e-15);
  const Eigen::VectorXd b = project_simplex(Eigen::Vector2d(2.0, -1.0));
  EXPECT_DOUBLE_EQ(b[0], 1.0);
  EXPECT_DOUBLE_EQ(b[1], 0.0);
  const Eigen::VectorXd c = project_simplex(Eigen::Vector3d(1.0, 1.0, 1.0));
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(c[k], 1.0 / 3.0, 1e-15);
  const Eigen::VectorXd d = project_simplex(Eigen::Vector4d(0.9, -3.0, 0.4, 7.0));
  EXPECT_NEAR(d.sum(), 1.0, 1e-15);
  EXPECT_GE(d.minCoeff(), 0.0);
}

TEST(Stacking, WeightsRecoverExactMember) {
  const auto p = regression_problem(200, 5, false);
  Eigen::MatrixXd z(200, 3);
  z.col(0) = p.y;
  z.col(1) = p.y.array() + 1.0;
  z.col(2) = p.x.col(2);
  const Eigen::VectorXd w = stack_weights(z, p.y, Loss::Squared);
  EXPECT_NEAR(w[0], 1.0, 1e-6);
  EXPECT_NEAR(w.sum(), 1.0, 1e-12);
}

TEST(Stacking, WeightsFindInteriorOptimum) {
  // y = (z1 + z2) / 2 with independent members: the optimum is (1/2, 1/2).
  const auto p = regression_problem(500, 6, false);
  Eigen::MatrixXd z(500, 2);
  z.col(0) = p.x.col(0);
  z.col(1) = p.x.col(1);
  const Eigen::VectorXd y = 0.5 * (z.col(0) + z.col(1));
  const Eigen::VectorXd w = stack_weights(z, y, Loss::Squared);
  EXPECT_NEAR(w[0], 0.5, 1e-6);
  EXPECT_NEAR(w[1], 0.5, 1e-6);
}

class EnsembleLoss : public ::testing::TestWithParam<bool> {};

TEST_P(EnsembleLoss, StackedCvLossNoWorseThanBestMember) {
  const bool binary = GetParam();
  for (std::uint64_t seed : {11, 12, 13}) {
    const auto p = regression_problem(400, seed, binary);
    EnsembleOptions opt;
    opt.forest.trees = 30;
    EnsembleDiagnostics d;
    const auto model = fit_ensemble(p.x, p.y, p.groups, binary ? Loss::Log : Loss::Squared, opt, seed, &d);
    ASSERT_EQ(d.cv_loss.size(), 2u);
    EXPECT_LE(d.stacked_cv_loss, std::min(d.cv_loss[0], d.cv_loss[1]) + 1e-6);
    EXPECT_NEAR(d.weights[0] + d.weights[1], 1.0, 1e-12);
    EXPECT_GE(std::min(d.weights[0], d.weights[1]), 0.0);
    const Eigen::VectorXd q = model->predict(p.x);
    if (binary) {
      EXPECT_GE(q.minCoeff(), 0.0);
      EXPECT_LE(q.maxCoeff(), 1.0);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Losses, EnsembleLoss, ::testing::Values(false, true));

TEST(Ensemble, DeterministicGivenSeed) {
  const auto p = regression_problem(200, 7, false);
  EnsembleOptions opt;
  opt.forest.trees = 20;
  const auto a = fit_ensemble(p.x, p.y, p.groups, Loss::Squared, opt, 3)->predict(p.x);
  const auto b = fit_ensemble(p.x, p.y, p.groups, Loss::Squared, opt, 3)->predict(p.x);
  EXPECT_EQ(a, b);
}

TEST(Ensemble, TiedMembersGetUniformWeights) {
  const auto p = regression_problem(100, 8, false);
  EnsembleOptions opt;
  opt.members = {MemberKind::Glm, MemberKind::Glm};
  EnsembleDiagnostics d;
  (void)fit_ensemble(p.x, p.y, p.groups, Loss::Squared, opt, 1, &d);
  EXPECT_TRUE(d.degenerate);
  EXPECT_DOUBLE_EQ(d.weights[0], 0.5);
  EXPECT_DOUBLE_EQ(d.weights[1], 0.5);
}

TEST(Ensemble, TooFewGroupsIsAnError) {
  auto p = regression_problem(40, 9, false);
  std::fill(p.groups.begin(), p.groups.end(), 0);
  testing::expect_error(ErrorCode::TooFewClusters,
                        [&] { fit_ensemble(p.x, p.y, p.groups, Loss::Squared, EnsembleOptions{}, 1); });
}

}  // namespace
}  // namespace pscrt
