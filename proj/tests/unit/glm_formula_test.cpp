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

#include "pscrt/core/normal.hpp"
#include "pscrt/core/random.hpp"
#include "pscrt/nuisance/formula.hpp"
#include "pscrt/nuisance/glm.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace pscrt {
namespace {

using testing::expect_error;
using oracles::bfgs_oracle;
using oracles::logistic_problem;

TEST(Glm, IrlsMatchesDirectLikelihoodMaximization) {
  for (std::uint64_t seed : {1, 2, 3}) {
    for (bool weighted : {false, true}) {
      const auto p = logistic_problem(100, seed, weighted);
      const LogisticFit fit = fit_logistic(p.x, p.y, p.w);
      ASSERT_TRUE(fit.converged);
      EXPECT_FALSE(fit.separation);
      const Eigen::VectorXd oracle = bfgs_oracle(p);
      for (Eigen::Index k = 0; k < oracle.size(); ++k) EXPECT_NEAR(fit.coef[k], oracle[k], 1e-6) << "seed " << seed;
    }
  }
}

TEST(Glm, SeparationIsFlagged) {
  Eigen::MatrixXd x(20, 2);
  Eigen::VectorXd y(20), w = Eigen::VectorXd::Ones(20);
  for (int i = 0; i < 20; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = i - 9.5;
    y[i] = i >= 10 ? 1.0 : 0.0;
  }
  EXPECT_TRUE(fit_logistic(x, y, w).separation);
}

TEST(Glm, RankDeficientDesignIsRejected) {
  Eigen::MatrixXd x(10, 3);
  for (int i = 0; i < 10; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = i;
    x(i, 2) = 2.0 * i;
  }
  const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(10, 0, 1).array().round();
  expect_error(ErrorCode::SingularDesign, [&] { fit_logistic(x, y, Eigen::VectorXd::Ones(10)); });
}

TEST(Glm, LinearMatchesNormalEquations) {
  Rng rng = make_rng(5, {0});
  NormalSampler z;
  const int n = 300;
  Eigen::MatrixXd x(n, 5);
  Eigen::VectorXd y(n), w(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (int k = 1; k < 5; ++k) x(i, k) = z(rng) * (k + 1);
    y[i] = 2.0 - x(i, 1) + 0.25 * x(i, 3) + z(rng);
    w[i] = 0.1 + uniform01(rng);
  }
  const Eigen::VectorXd qr = fit_linear(x, y, w);
  const Eigen::MatrixXd xtwx = x.transpose() * w.asDiagonal() * x;
  const Eigen::VectorXd ne = xtwx.llt().solve(x.transpose() * w.asDiagonal() * y);
  for (Eigen::Index k = 0; k < 5; ++k) EXPECT_NEAR(qr[k], ne[k], 1e-8);
}

TEST(Glm, LinearNeedsEnoughRows) {
  expect_error(ErrorCode::SingularDesign,
               [] { fit_linear(Eigen::MatrixXd::Ones(2, 3), Eigen::VectorXd::Ones(2), Eigen::VectorXd::Ones(2)); });
}

FeatureLayout own_layout() { return FeatureLayout{1, 1, SummaryMode::Own}; }

TEST(Formula, ParsesTermsAndInteractions) {
  const Formula f = Formula::parse("a + a:n + x1 + d:x1", own_layout());
  EXPECT_EQ(f.size(), 4u);
  EXPECT_TRUE(f.uses(Factor::Kind::Assignment));
  EXPECT_TRUE(f.uses(Factor::Kind::Uptake));
  Eigen::MatrixXd feat(1, 3);
  feat << 2.0, 5.0, 30.0;  // x1, v1, n
  const Eigen::MatrixXd d = f.design(feat, 1, 1);
  EXPECT_EQ(d(0, 0), 1.0);
  EXPECT_EQ(d(0, 1), 30.0);
  EXPECT_EQ(d(0, 2), 2.0);
  EXPECT_EQ(d(0, 3), 2.0);
  EXPECT_EQ(f.design(feat, 0, 0)(0, 3), 0.0);
}

TEST(Formula, UnknownNamesAndEmptyTermsAreRejected) {
  expect_error(ErrorCode::InvalidConfig, [] { Formula::parse("a + x7", own_layout()); });
  expect_error(ErrorCode::InvalidConfig, [] { Formula::parse("a + + x1", own_layout()); });
}

TEST(Formula, FixingDropsFactorsOrTerms) {
  const Formula f = Formula::parse("a + a:n + x1 + n", own_layout());
  const Formula one = f.fixing(Factor::Kind::Assignment, 1);
  EXPECT_EQ(one.size(), 2u);  // a -> intercept (dropped), a:n -> n (duplicate), x1, n
  const Formula zero = f.fixing(Factor::Kind::Assignment, 0);
  EXPECT_EQ(zero.size(), 2u);
  EXPECT_FALSE(zero.uses(Factor::Kind::Assignment));
}

TEST(Formula, DefaultsCoverEveryFeature) {
  const FeatureLayout l{1, 1, SummaryMode::OwnPlusPeerMean};
  EXPECT_EQ(Formula::default_uptake(l).size(), 2u + 4u);
  EXPECT_EQ(Formula::default_outcome(l).size(), 2u + 2u + 4u);
}

}  // namespace
}  // namespace pscrt
