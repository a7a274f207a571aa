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

// The two nuisance surfaces: the uptake probability p(a, d, C) and the
// outcome mean mu(a, d, C). Fitting on all clusters, on fold complements
// (cross-fitting), and evaluation into a per-row prediction table.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pscrt/core/error.hpp"
#include "pscrt/core/parallel.hpp"
#include "pscrt/core/random.hpp"
#include "pscrt/data_model.hpp"
#include "pscrt/nuisance/ensemble.hpp"
#include "pscrt/nuisance/formula.hpp"
#include "pscrt/strata.hpp"

namespace pscrt {

// ---------------------------------------------------------------------------
// Folds.

struct FoldAssignment {
  int L = 0;
  std::vector<int> fold_of;  // per cluster, in dataset order

  std::vector<std::size_t> members(int l) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] == l) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> complement(int l) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] != l) out.push_back(i);
    return out;
  }
};

// Treated and control clusters are shuffled separately, concatenated and
// dealt round-robin, so every fold gets its share of both arms and fold
// sizes differ by at most one (the first folds take the remainder).
inline FoldAssignment make_folds(std::span<const int> arm_of_cluster, int L, std::uint64_t seed) {
  const std::size_t K = arm_of_cluster.size();
  PSCRT_REQUIRE(L >= 2, ErrorCode::InvalidConfig, "fold count must be at least 2");
  PSCRT_REQUIRE(static_cast<std::size_t>(L) <= K, ErrorCode::TooFewClusters,
                "fold count " + std::to_string(L) + " exceeds the " + std::to_string(K) + " clusters");
  Rng rng = make_rng(seed, {stream::kFolds});
  std::vector<std::size_t> order;
  for (int arm : {1, 0}) {
    std::vector<std::size_t> part;
    for (std::size_t i = 0; i < K; ++i)
      if (arm_of_cluster[i] == arm) part.push_back(i);
    for (std::size_t i = part.size(); i > 1; --i) std::swap(part[i - 1], part[uniform_index(rng, i)]);
    order.insert(order.end(), part.begin(), part.end());
  }
  FoldAssignment f;
  f.L = L;
  f.fold_of.assign(K, 0);
  for (std::size_t k = 0; k < K; ++k) f.fold_of[order[k]] = static_cast<int>(k % static_cast<std::size_t>(L));
  return f;
}

inline FoldAssignment make_folds(const TrialDataset& ds, int L, std::uint64_t seed) {
  std::vector<int> arms;
  for (const auto& c : ds.clusters()) arms.push_back(c.a);
  return make_folds(arms, L, seed);
}

// ---------------------------------------------------------------------------
// Specification.

enum class LearnerKind { Glm, Ensemble };
enum class MuStrategy { ByArm, ByCell };

inline std::string to_string(LearnerKind k) { return k == LearnerKind::Glm ? "glm" : "ensemble"; }

// Maps a block of feature rows to the features a model actually sees. Must
// keep the column layout (names resolve by position).
using FeatureTransform = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&, const FeatureLayout&)>;

struct NuisanceSpec {
  LearnerKind learner = LearnerKind::Glm;
  std::string p_formula;   // empty: Formula::default_uptake
  std::string mu_formula;  // empty: Formula::default_outcome
  EnsembleOptions ensemble;
  MuStrategy mu_strategy = MuStrategy::ByArm;
  Monotonicity mode = Monotonicity::Standard;
  double clip_eps = 1e-3;
  FeatureTransform p_transform;   // empty: identity
  FeatureTransform mu_transform;  // empty: identity
};

// Per-row predictions. p1[a] is p(a, 1, C) after clipping (p(a, 0, C) is
// 1 - p1[a]); mu[2a + d] is mu(a, d, C).
struct NuisancePredictions {
  std::array<Eigen::VectorXd, 2> p1;
  std::array<Eigen::VectorXd, 4> mu;
  std::size_t clipped = 0;

  explicit NuisancePredictions(std::size_t rows = 0) { resize(rows); }
  void resize(std::size_t rows) {
    for (auto& v : p1) v = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(rows), std::nan(""));
    for (auto& v : mu) v = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(rows), std::nan(""));
  }
  std::size_t rows() const { return static_cast<std::size_t>(p1[0].size()); }

  double p(int a, int d, std::size_t r) const {
    const double q = p1[static_cast<std::size_t>(a)][static_cast<Eigen::Index>(r)];
    return d == 1 ? q : 1.0 - q;
  }
  double m(int a, int d, std::size_t r) const { return mu[static_cast<std::size_t>(2 * a + d)][static_cast<Eigen::Index>(r)]; }
};

struct ModelDiagnostics {
  std::string name;         // "p", "mu[a=1]", "mu[a=0,d=0]", ...
  std::string learner;
  std::size_t rows = 0;
  std::size_t terms = 0;
  bool uptake_dropped = false;  // D constant in the training rows
  EnsembleDiagnostics ensemble;
};

// ---------------------------------------------------------------------------
// Fitted surfaces.

class FittedNuisance {
 public:
  static constexpr int kFullData = -1;

  int fold_tag() const { return fold_tag_; }
  const std::vector<std::size_t>& training_clusters() const { return training_; }
  const std::vector<ModelDiagnostics>& diagnostics() const { return diagnostics_; }
  Monotonicity mode() const { return mode_; }

  // Fits on the listed clusters of `flat`.
  static FittedNuisance fit(const FlatData& flat, std::span<const std::size_t> clusters, const NuisanceSpec& spec,
                            std::uint64_t seed, int fold_tag = kFullData) {
    FittedNuisance f;
    f.fold_tag_ = fold_tag;
    f.training_.assign(clusters.begin(), clusters.end());
    f.layout_ = flat.layout;
    f.mode_ = spec.mode;
    f.clip_eps_ = spec.clip_eps;
    f.p_transform_ = spec.p_transform;
    f.mu_transform_ = spec.mu_transform;
    PSCRT_REQUIRE(spec.clip_eps > 0.0 && spec.clip_eps < 0.5, ErrorCode::InvalidConfig,
                  "probability clip must lie in (0, 0.5)");

    const Formula p_formula = spec.p_formula.empty() ? Formula::default_uptake(flat.layout)
                                                     : Formula::parse(spec.p_formula, flat.layout);
    const Formula mu_formula = spec.mu_formula.empty() ? Formula::default_outcome(flat.layout)
                                                       : Formula::parse(spec.mu_formula, flat.layout);
    PSCRT_REQUIRE(!p_formula.uses(Factor::Kind::Uptake), ErrorCode::InvalidConfig,
                  "the uptake model formula cannot contain d");

    std::vector<std::size_t> rows, groups;
    for (std::size_t c : clusters)
      for (std::size_t r = flat.offsets[c]; r < flat.offsets[c + 1]; ++r) {
        rows.push_back(r);
        groups.push_back(c);
      }
    const Eigen::MatrixXd raw = gather(flat.features, rows);
    const Eigen::MatrixXd fp = f.apply(f.p_transform_, raw);
    const Eigen::MatrixXd fm = f.apply(f.mu_transform_, raw);

    auto select = [&](auto pred) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < rows.size(); ++i)
        if (pred(rows[i])) idx.push_back(i);
      return idx;
    };

    // Uptake model.
    {
      std::vector<std::size_t> idx;
      Formula form = p_formula;
      if (spec.mode == Monotonicity::Strong) {
        idx = select([&](std::size_t r) { return flat.a[r] == 1; });
        form = p_formula.fixing(Factor::Kind::Assignment, 1);
      } else {
        idx.resize(rows.size());
        std::iota(idx.begin(), idx.end(), 0);
      }
      PSCRT_REQUIRE(!idx.empty(), ErrorCode::ArmMissing, "no rows to fit the uptake model");
      std::vector<int> a(idx.size()), d(idx.size());
      Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t i = 0; i < idx.size(); ++i) {
        a[i] = flat.a[rows[idx[i]]];
        y[static_cast<Eigen::Index>(i)] = flat.d[rows[idx[i]]];
      }
      const Eigen::MatrixXd fx = gather(fp, idx);
      f.p_model_ = f.fit_model("p", form, form.design(fx, a, d), y, sub(groups, idx), Loss::Log, spec,
                               derive_seed(seed, {0}), false);
      f.p_form_ = form;
    }

    // Outcome models.
    const bool by_cell = spec.mu_strategy == MuStrategy::ByCell;
    for (int arm : {0, 1}) {
      for (int dv : {0, 1}) {
        if (!by_cell && dv == 1) continue;
        const auto idx = select([&](std::size_t r) { return flat.a[r] == arm && (!by_cell || flat.d[r] == dv); });
        const std::size_t slot = by_cell ? static_cast<std::size_t>(2 * arm + dv) : static_cast<std::size_t>(2 * arm);
        const std::string name = by_cell ? "mu[a=" + std::to_string(arm) + ",d=" + std::to_string(dv) + "]"
                                         : "mu[a=" + std::to_string(arm) + "]";
        if (idx.empty()) {
          const bool needed = !(spec.mode == Monotonicity::Strong && arm == 0 && dv == 1);
          PSCRT_REQUIRE(!by_cell || !needed, ErrorCode::SingularDesign,
                        "no training rows for outcome model " + name);
          PSCRT_REQUIRE(by_cell, ErrorCode::ArmMissing, "no training rows for outcome model " + name);
          continue;
        }
        Formula form = mu_formula.fixing(Factor::Kind::Assignment, arm);
        bool dropped = false;
        if (by_cell) {
          form = form.fixing(Factor::Kind::Uptake, dv);
        } else {
          int first = flat.d[rows[idx.front()]];
          const bool constant = std::all_of(idx.begin(), idx.end(), [&](std::size_t i) { return flat.d[rows[i]] == first; });
          if (constant && form.uses(Factor::Kind::Uptake)) {
            form = form.fixing(Factor::Kind::Uptake, 0);
            dropped = true;
          }
        }
        std::vector<int> a(idx.size(), arm), d(idx.size());
        Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) {
          d[i] = flat.d[rows[idx[i]]];
          y[static_cast<Eigen::Index>(i)] = flat.y[rows[idx[i]]];
        }
        const Eigen::MatrixXd fx = gather(fm, idx);
        f.mu_model_[slot] = f.fit_model(name, form, form.design(fx, a, d), y, sub(groups, idx), Loss::Squared,
                                        spec, derive_seed(seed, {1 + slot}), dropped);
        f.mu_form_[slot] = form;
        if (!by_cell) {
          f.mu_model_[slot + 1] = f.mu_model_[slot];
          f.mu_form_[slot + 1] = form;
        }
      }
    }
    return f;
  }

  // Writes predictions for every row of the listed clusters into `out`.
  void predict_into(const FlatData& flat, std::span<const std::size_t> clusters, NuisancePredictions& out) const {
    std::vector<std::size_t> rows;
    for (std::size_t c : clusters)
      for (std::size_t r = flat.offsets[c]; r < flat.offsets[c + 1]; ++r) rows.push_back(r);
    if (rows.empty()) return;
    const Eigen::MatrixXd raw = gather(flat.features, rows);
    const Eigen::MatrixXd fp = apply(p_transform_, raw);
    const Eigen::MatrixXd fm = apply(mu_transform_, raw);

    std::array<Eigen::VectorXd, 2> p1;
    p1[1] = p_model_->predict(p_form_.design(fp, 1, 0));
    if (mode_ == Monotonicity::Strong)
      p1[0] = Eigen::VectorXd::Zero(fp.rows());
    else
      p1[0] = p_model_->predict(p_form_.design(fp, 0, 0));
    for (int a : {0, 1}) {
      if (mode_ == Monotonicity::Strong && a == 0) continue;
      for (Eigen::Index i = 0; i < p1[static_cast<std::size_t>(a)].size(); ++i) {
        double& q = p1[static_cast<std::size_t>(a)][i];
        const double c = std::clamp(q, clip_eps_, 1.0 - clip_eps_);
        if (c != q) ++out.clipped;
        q = c;
      }
    }
    std::array<Eigen::VectorXd, 4> mu;
    for (int a : {0, 1})
      for (int d : {0, 1}) {
        const auto slot = static_cast<std::size_t>(2 * a + d);
        if (mu_model_[slot])
          mu[slot] = mu_model_[slot]->predict(mu_form_[slot].design(fm, a, d));
        else
          mu[slot] = Eigen::VectorXd::Constant(fm.rows(), std::nan(""));
      }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(rows[i]);
      const auto ii = static_cast<Eigen::Index>(i);
      for (std::size_t a = 0; a < 2; ++a) out.p1[a][r] = p1[a][ii];
      for (std::size_t s = 0; s < 4; ++s) out.mu[s][r] = mu[s][ii];
    }
  }

 private:
  static Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
    return out;
  }
  static std::vector<std::size_t> sub(const std::vector<std::size_t>& v, const std::vector<std::size_t>& idx) {
    std::vector<std::size_t> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(v[i]);
    return out;
  }

  Eigen::MatrixXd apply(const FeatureTransform& t, const Eigen::MatrixXd& raw) const {
    if (!t) return raw;
    Eigen::MatrixXd out = t(raw, layout_);
    PSCRT_REQUIRE(out.rows() == raw.rows() && out.cols() == raw.cols(), ErrorCode::InvalidConfig,
                  "feature transform must preserve the feature layout");
    return out;
  }

  std::shared_ptr<const Predictor> fit_model(const std::string& name, const Formula& form, const Eigen::MatrixXd& x,
                                             const Eigen::VectorXd& y, const std::vector<std::size_t>& groups,
                                             Loss loss, const NuisanceSpec& spec, std::uint64_t seed, bool dropped) {
    ModelDiagnostics md;
    md.name = name;
    md.learner = to_string(spec.learner);
    md.rows = static_cast<std::size_t>(y.size());
    md.terms = form.size();
    md.uptake_dropped = dropped;
    std::shared_ptr<const Predictor> model;
    if (spec.learner == LearnerKind::Glm) {
      EnsembleOptions glm_only = spec.ensemble;
      glm_only.members = {MemberKind::Glm};
      model = fit_ensemble(x, y, groups, loss, glm_only, seed, &md.ensemble);
    } else {
      model = fit_ensemble(x, y, groups, loss, spec.ensemble, seed, &md.ensemble);
    }
    diagnostics_.push_back(std::move(md));
    return model;
  }

  int fold_tag_ = kFullData;
  std::vector<std::size_t> training_;
  FeatureLayout layout_;
  Monotonicity mode_ = Monotonicity::Standard;
  double clip_eps_ = 1e-3;
  FeatureTransform p_transform_, mu_transform_;
  Formula p_form_;
  std::array<Formula, 4> mu_form_;
  std::shared_ptr<const Predictor> p_model_;
  std::array<std::shared_ptr<const Predictor>, 4> mu_model_;
  std::vector<ModelDiagnostics> diagnostics_;
};

inline std::vector<std::size_t> all_clusters(const FlatData& flat) {
  std::vector<std::size_t> out(flat.num_clusters());
  std::iota(out.begin(), out.end(), 0);
  return out;
}

// Full-data fit and in-sample predictions.
struct FullFit {
  FittedNuisance model;
  NuisancePredictions predictions;
};

inline FullFit fit_full(const FlatData& flat, const NuisanceSpec& spec, std::uint64_t seed) {
  const auto all = all_clusters(flat);
  FullFit out{FittedNuisance::fit(flat, all, spec, seed), NuisancePredictions(flat.num_rows())};
  out.model.predict_into(flat, all, out.predictions);
  return out;
}

// Cross-fitting: one model per fold, trained on the fold's complement and
// evaluated only on the fold's own clusters.
struct CrossFit {
  FoldAssignment folds;
  std::vector<FittedNuisance> models;  // by fold
  NuisancePredictions predictions;
};

inline CrossFit cross_fit(const FlatData& flat, const NuisanceSpec& spec, const FoldAssignment& folds,
                          std::uint64_t seed, unsigned threads = 1) {
  PSCRT_REQUIRE(folds.fold_of.size() == flat.num_clusters(), ErrorCode::InvalidData,
                "fold assignment does not match the dataset");
  for (int l = 0; l < folds.L; ++l) {
    bool arm[2] = {false, false}, up[2] = {false, false};
    for (std::size_t c : folds.complement(l)) {
      arm[flat.a[flat.offsets[c]]] = true;
      for (std::size_t r = flat.offsets[c]; r < flat.offsets[c + 1]; ++r) up[flat.d[r]] = true;
    }
    PSCRT_REQUIRE(arm[0] && arm[1] && up[0] && up[1], ErrorCode::FoldDegenerate,
                  "training complement of fold " + std::to_string(l) + " lacks an arm or an uptake value");
  }
  CrossFit out{folds, std::vector<FittedNuisance>(static_cast<std::size_t>(folds.L)),
               NuisancePredictions(flat.num_rows())};
  parallel_for(static_cast<std::size_t>(folds.L), threads, [&](std::size_t l) {
    const int li = static_cast<int>(l);
    out.models[l] = FittedNuisance::fit(flat, folds.complement(li), spec,
                                        derive_seed(seed, {stream::kCrossFit, l}), li);
  });
  std::vector<char> seen(flat.num_clusters(), 0);
  for (int l = 0; l < folds.L; ++l) {
    const auto& model = out.models[static_cast<std::size_t>(l)];
    const auto members = folds.members(l);
    std::vector<char> trained(flat.num_clusters(), 0);
    for (std::size_t c : model.training_clusters()) trained[c] = 1;
    for (std::size_t c : members) {
      PSCRT_REQUIRE(model.fold_tag() == l && !trained[c], ErrorCode::FoldDegenerate,
                    "cross-fit model would predict on its own training cluster");
      seen[c] = 1;
    }
    model.predict_into(flat, members, out.predictions);
  }
  PSCRT_REQUIRE(std::all_of(seen.begin(), seen.end(), [](char s) { return s != 0; }), ErrorCode::FoldDegenerate,
                "some clusters belong to no fold");
  return out;
}

}  // namespace pscrt
