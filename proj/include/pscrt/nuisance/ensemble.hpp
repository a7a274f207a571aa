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

// Base learners and their stacked (convex) combination. Learners see design
// matrices without an intercept column; the GLM members add their own.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pscrt/core/error.hpp"
#include "pscrt/core/normal.hpp"
#include "pscrt/core/random.hpp"
#include "pscrt/nuisance/forest.hpp"
#include "pscrt/nuisance/glm.hpp"

namespace pscrt {

enum class Loss { Squared, Log };
enum class MemberKind { Glm, Forest };

inline std::string to_string(MemberKind m) { return m == MemberKind::Glm ? "glm" : "forest"; }

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Eigen::VectorXd predict(const Eigen::MatrixXd& x) const = 0;
};

inline Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(x.cols()) = x;
  return out;
}

class GlmPredictor final : public Predictor {
 public:
  GlmPredictor(Eigen::VectorXd coef, Loss loss, bool separation)
      : coef_(std::move(coef)), loss_(loss), separation_(separation) {}

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override {
    Eigen::VectorXd eta = Eigen::VectorXd::Constant(x.rows(), coef_[0]);
    if (x.cols() > 0) eta.noalias() += x * coef_.tail(coef_.size() - 1);
    if (loss_ == Loss::Log)
      for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = expit(eta[i]);
    return eta;
  }

  const Eigen::VectorXd& coef() const { return coef_; }
  bool separation() const { return separation_; }

 private:
  Eigen::VectorXd coef_;
  Loss loss_;
  bool separation_;
};

class ForestPredictor final : public Predictor {
 public:
  explicit ForestPredictor(RegressionForest f) : forest_(std::move(f)) {}
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override { return forest_.predict(x); }

 private:
  RegressionForest forest_;
};

inline std::unique_ptr<Predictor> fit_member(MemberKind kind, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                             Loss loss, const ForestOptions& forest, std::uint64_t seed) {
  if (kind == MemberKind::Glm) {
    const Eigen::MatrixXd xi = with_intercept(x);
    const Eigen::VectorXd w = Eigen::VectorXd::Ones(y.size());
    if (loss == Loss::Log) {
      const LogisticFit fit = fit_logistic(xi, y, w);
      return std::make_unique<GlmPredictor>(fit.coef, loss, fit.separation);
    }
    return std::make_unique<GlmPredictor>(fit_linear(xi, y, w), loss, false);
  }
  // A forest with no features degenerates to the mean; give it a constant
  // column so the tree code always has something to look at.
  if (x.cols() == 0)
    return std::make_unique<ForestPredictor>(
        RegressionForest::fit(Eigen::MatrixXd::Zero(x.rows(), 1), y, forest, seed));
  return std::make_unique<ForestPredictor>(RegressionForest::fit(x, y, forest, seed));
}

// Mean loss of predictions q against labels y. Probabilities are clipped to
// [eps, 1 - eps] for the log loss.
inline double mean_loss(Loss loss, const Eigen::VectorXd& q, const Eigen::VectorXd& y, double eps) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (loss == Loss::Squared) {
      const double r = y[i] - q[i];
      s += r * r;
    } else {
      const double p = std::clamp(q[i], eps, 1.0 - eps);
      s -= y[i] * std::log(p) + (1.0 - y[i]) * std::log1p(-p);
    }
  }
  return s / static_cast<double>(y.size());
}

// Euclidean projection onto the probability simplex (sort-based).
inline Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index m = v.size();
  std::vector<double> u(v.data(), v.data() + m);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, tau = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    cum += u[static_cast<std::size_t>(k)];
    const double t = (cum - 1.0) / static_cast<double>(k + 1);
    if (u[static_cast<std::size_t>(k)] - t > 0.0) tau = t;
  }
  return (v.array() - tau).cwiseMax(0.0).matrix();
}

struct StackOptions {
  int max_iterations = 500;
  double step = 0.1;
  double clip_eps = 1e-3;
};

// Convex weights minimizing the loss of z * w against y, where the columns
// of z are cross-validated member predictions. Projected gradient from the
// uniform point with backtracking; the best vertex is kept if it is better.
inline Eigen::VectorXd stack_weights(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, Loss loss,
                                     const StackOptions& opt = {}) {
  const Eigen::Index m = z.cols();
  const double n = static_cast<double>(z.rows());
  Eigen::VectorXd w = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  if (m == 1) return w;

  Eigen::MatrixXd gram;
  Eigen::VectorXd zy;
  double yy = 0.0;
  if (loss == Loss::Squared) {
    gram = z.transpose() * z / n;
    zy = z.transpose() * y / n;
    yy = y.squaredNorm() / n;
  }
  auto objective = [&](const Eigen::VectorXd& v) {
    if (loss == Loss::Squared) return v.dot(gram * v) - 2.0 * zy.dot(v) + yy;
    return mean_loss(loss, z * v, y, opt.clip_eps);
  };
  auto gradient = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    if (loss == Loss::Squared) return 2.0 * (gram * v - zy);
    const Eigen::VectorXd q = z * v;
    Eigen::VectorXd r(q.size());
    for (Eigen::Index i = 0; i < q.size(); ++i) {
      const double p = std::clamp(q[i], opt.clip_eps, 1.0 - opt.clip_eps);
      r[i] = (p - y[i]) / (p * (1.0 - p));
    }
    return z.transpose() * r / n;
  };

  double f = objective(w);
  double step = opt.step;
  for (int it = 0; it < opt.max_iterations; ++it) {
    const Eigen::VectorXd g = gradient(w);
    Eigen::VectorXd next = project_simplex(w - step * g);
    double fn = objective(next);
    int halvings = 0;
    while (fn > f + g.dot(next - w) + (next - w).squaredNorm() / (2.0 * step) && halvings < 50) {
      step *= 0.5;
      next = project_simplex(w - step * g);
      fn = objective(next);
      ++halvings;
    }
    const double moved = (next - w).cwiseAbs().maxCoeff();
    if (fn <= f) {
      w = next;
      f = fn;
    }
    if (moved < 1e-12) break;
    if (halvings == 0) step *= 2.0;  // regain step length after easy iterations
  }

  for (Eigen::Index k = 0; k < m; ++k) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
    e[k] = 1.0;
    const double fk = objective(e);
    if (fk < f) {
      f = fk;
      w = e;
    }
  }
  return w;
}

struct EnsembleDiagnostics {
  std::vector<MemberKind> members;
  std::vector<double> weights;
  std::vector<double> cv_loss;  // per member
  double stacked_cv_loss = 0.0;
  bool degenerate = false;      // members tied, uniform weights used
  bool separation = false;      // a GLM member hit the separation bound
  std::vector<double> glm_coef; // full-data GLM member coefficients, if any
};

struct EnsembleOptions {
  std::vector<MemberKind> members{MemberKind::Glm, MemberKind::Forest};
  int stack_folds = 5;
  ForestOptions forest;
  StackOptions stack;
};

class StackedPredictor final : public Predictor {
 public:
  StackedPredictor(std::vector<std::unique_ptr<Predictor>> members, Eigen::VectorXd weights)
      : members_(std::move(members)), weights_(std::move(weights)) {}

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(x.rows());
    for (std::size_t k = 0; k < members_.size(); ++k)
      if (weights_[static_cast<Eigen::Index>(k)] != 0.0)
        out += weights_[static_cast<Eigen::Index>(k)] * members_[k]->predict(x);
    return out;
  }

 private:
  std::vector<std::unique_ptr<Predictor>> members_;
  Eigen::VectorXd weights_;
};

// Fits the stacked ensemble. `groups` labels the cluster of every row; the
// stacking folds never split a cluster.
inline std::unique_ptr<Predictor> fit_ensemble(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                               std::span<const std::size_t> groups, Loss loss,
                                               const EnsembleOptions& opt, std::uint64_t seed,
                                               EnsembleDiagnostics* diag = nullptr) {
  const auto m = opt.members.size();
  PSCRT_REQUIRE(m >= 1, ErrorCode::InvalidConfig, "ensemble has no members");
  PSCRT_REQUIRE(opt.stack_folds >= 2, ErrorCode::InvalidConfig, "stack_folds must be at least 2");
  PSCRT_REQUIRE(x.rows() >= 2 * opt.stack_folds, ErrorCode::TooFewClusters,
                "ensemble needs at least 2 * stack_folds rows");
  PSCRT_REQUIRE(static_cast<Eigen::Index>(groups.size()) == x.rows(), ErrorCode::InvalidData,
                "ensemble group labels do not match the rows");

  EnsembleDiagnostics local;
  EnsembleDiagnostics& d = diag ? *diag : local;
  d = {};
  d.members = opt.members;

  auto fit_all = [&](const Eigen::MatrixXd& xt, const Eigen::VectorXd& yt, std::uint64_t s) {
    std::vector<std::unique_ptr<Predictor>> out;
    for (std::size_t k = 0; k < m; ++k) out.push_back(fit_member(opt.members[k], xt, yt, loss, opt.forest, derive_seed(s, {k})));
    return out;
  };

  Eigen::VectorXd weights = Eigen::VectorXd::Ones(1);
  if (m > 1) {
    // Stacking folds over the distinct groups, in first-appearance order.
    std::vector<std::size_t> distinct;
    for (std::size_t g : groups)
      if (std::find(distinct.begin(), distinct.end(), g) == distinct.end()) distinct.push_back(g);
    PSCRT_REQUIRE(distinct.size() >= static_cast<std::size_t>(opt.stack_folds), ErrorCode::TooFewClusters,
                  "ensemble needs at least stack_folds clusters");
    Rng rng = make_rng(seed, {stream::kStack});
    std::vector<std::size_t> order(distinct.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    std::vector<int> fold_of_group(distinct.size());
    for (std::size_t i = 0; i < order.size(); ++i)
      fold_of_group[order[i]] = static_cast<int>(i % static_cast<std::size_t>(opt.stack_folds));
    std::vector<int> fold(groups.size());
    for (std::size_t r = 0; r < groups.size(); ++r) {
      const auto pos = std::find(distinct.begin(), distinct.end(), groups[r]) - distinct.begin();
      fold[r] = fold_of_group[static_cast<std::size_t>(pos)];
    }

    Eigen::MatrixXd z(x.rows(), static_cast<Eigen::Index>(m));
    for (int v = 0; v < opt.stack_folds; ++v) {
      std::vector<Eigen::Index> tr, te;
      for (std::size_t r = 0; r < fold.size(); ++r) (fold[r] == v ? te : tr).push_back(static_cast<Eigen::Index>(r));
      const Eigen::MatrixXd xt = x(tr, Eigen::all);
      const Eigen::VectorXd yt = y(tr);
      const Eigen::MatrixXd xv = x(te, Eigen::all);
      const auto learners = fit_all(xt, yt, derive_seed(seed, {stream::kStack, static_cast<std::uint64_t>(v) + 1}));
      for (std::size_t k = 0; k < m; ++k) {
        const Eigen::VectorXd pv = learners[k]->predict(xv);
        for (std::size_t i = 0; i < te.size(); ++i) z(te[i], static_cast<Eigen::Index>(k)) = pv[static_cast<Eigen::Index>(i)];
      }
    }
    for (std::size_t k = 0; k < m; ++k)
      d.cv_loss.push_back(mean_loss(loss, z.col(static_cast<Eigen::Index>(k)), y, opt.stack.clip_eps));
    const auto [lo, hi] = std::minmax_element(d.cv_loss.begin(), d.cv_loss.end());
    if (*hi - *lo <= 1e-12 * (1.0 + std::fabs(*lo))) {
      d.degenerate = true;
      weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m), 1.0 / static_cast<double>(m));
    } else {
      weights = stack_weights(z, y, loss, opt.stack);
    }
    d.stacked_cv_loss = mean_loss(loss, z * weights, y, opt.stack.clip_eps);
  }

  auto members = fit_all(x, y, derive_seed(seed, {stream::kStack, 0}));
  for (std::size_t k = 0; k < m; ++k) {
    if (const auto* g = dynamic_cast<const GlmPredictor*>(members[k].get())) {
      d.separation = d.separation || g->separation();
      d.glm_coef.assign(g->coef().data(), g->coef().data() + g->coef().size());
    }
  }
  d.weights.assign(weights.data(), weights.data() + weights.size());
  if (m == 1) return std::move(members.front());
  return std::make_unique<StackedPredictor>(std::move(members), weights);
}

}  // namespace pscrt
