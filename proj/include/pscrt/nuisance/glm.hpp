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

// Weighted logistic regression by iteratively reweighted least squares and
// weighted linear least squares. Observations are treated as independent
// (working independence); the design matrix carries its own intercept.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "pscrt/core/error.hpp"
#include "pscrt/core/normal.hpp"

namespace pscrt {

struct LogisticFit {
  Eigen::VectorXd coef;
  int iterations = 0;
  bool converged = false;
  // Set when a coefficient exceeded the separation bound (|b| > 30) or the
  // information matrix collapsed because fitted probabilities hit 0 or 1.
  bool separation = false;
};

struct IrlsOptions {
  int max_iterations = 100;
  double tolerance = 1e-8;       // max absolute coefficient change
  double separation_bound = 30.0;
};

namespace detail {

inline double logistic_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& w, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = x * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // log(1 + e^eta) computed without overflow
    const double e = eta[i];
    const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    ll += w[i] * (y[i] * e - softplus);
  }
  return ll;
}

inline bool information_is_degenerate(const Eigen::LDLT<Eigen::MatrixXd>& ldlt) {
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return true;
  const Eigen::VectorXd piv = ldlt.vectorD();
  const double hi = piv.cwiseAbs().maxCoeff();
  return !(hi > 0.0) || piv.minCoeff() <= 1e-13 * hi;
}

}  // namespace detail

inline LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& w, const IrlsOptions& opt = {}) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  PSCRT_REQUIRE(y.size() == n && w.size() == n, ErrorCode::InvalidData,
                "logistic regression inputs have mismatched lengths");
  PSCRT_REQUIRE(n > 0 && p > 0, ErrorCode::SingularDesign, "empty logistic design");
  {
    const Eigen::MatrixXd gram = x.transpose() * w.asDiagonal() * x;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    PSCRT_REQUIRE(!detail::information_is_degenerate(ldlt), ErrorCode::SingularDesign,
                  "logistic design matrix is rank deficient");
  }

  LogisticFit fit;
  fit.coef = Eigen::VectorXd::Zero(p);
  double ll = detail::logistic_loglik(x, y, w, fit.coef);
  Eigen::VectorXd prob(n), curv(n);
  for (fit.iterations = 1; fit.iterations <= opt.max_iterations; ++fit.iterations) {
    const Eigen::VectorXd eta = x * fit.coef;
    for (Eigen::Index i = 0; i < n; ++i) {
      prob[i] = expit(eta[i]);
      curv[i] = w[i] * prob[i] * (1.0 - prob[i]);
    }
    const Eigen::VectorXd grad = x.transpose() * (w.array() * (y - prob).array()).matrix();
    const Eigen::MatrixXd info = x.transpose() * curv.asDiagonal() * x;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (detail::information_is_degenerate(ldlt)) {
      fit.separation = true;
      break;
    }
    Eigen::VectorXd step = ldlt.solve(grad);

    // Step halving keeps the log-likelihood non-decreasing.
    Eigen::VectorXd next = fit.coef + step;
    double ll_next = detail::logistic_loglik(x, y, w, next);
    for (int h = 0; h < 30 && !(ll_next >= ll - 1e-12 * (1.0 + std::fabs(ll))); ++h) {
      step *= 0.5;
      next = fit.coef + step;
      ll_next = detail::logistic_loglik(x, y, w, next);
    }
    fit.coef = next;
    ll = ll_next;
    if (fit.coef.cwiseAbs().maxCoeff() > opt.separation_bound) {
      fit.separation = true;
      break;
    }
    if (step.cwiseAbs().maxCoeff() < opt.tolerance) {
      fit.converged = true;
      break;
    }
  }
  fit.iterations = std::min(fit.iterations, opt.max_iterations);
  return fit;
}

// Weighted least squares via column-pivoted QR of the row-scaled design.
inline Eigen::VectorXd fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& w) {
  const Eigen::Index n = x.rows();
  PSCRT_REQUIRE(y.size() == n && w.size() == n, ErrorCode::InvalidData,
                "linear regression inputs have mismatched lengths");
  PSCRT_REQUIRE(n >= x.cols() && x.cols() > 0, ErrorCode::SingularDesign,
                "linear design has fewer rows than columns");
  PSCRT_REQUIRE((w.array() >= 0.0).all(), ErrorCode::InvalidData, "negative regression weight");
  const Eigen::VectorXd sw = w.cwiseSqrt();
  const Eigen::MatrixXd xs = sw.asDiagonal() * x;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xs);
  qr.setThreshold(1e-10);
  PSCRT_REQUIRE(qr.rank() == x.cols(), ErrorCode::SingularDesign,
                "linear design matrix is rank deficient (rank " + std::to_string(qr.rank()) +
                    " < " + std::to_string(x.cols()) + ")");
  return qr.solve(sw.cwiseProduct(y));
}

}  // namespace pscrt
