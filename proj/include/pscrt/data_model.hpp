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

// Trial data: clusters with baseline covariates, cluster-level assignment,
// individual uptake and outcomes. Also the cluster weight W and the
// per-individual feature summary used by the nuisance models.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pscrt/core/error.hpp"
#include "pscrt/core/expression.hpp"

namespace pscrt {

struct Cluster {
  std::string id;
  Eigen::VectorXd v;   // cluster-level covariates, length d_V
  Eigen::MatrixXd x;   // individual covariates, N x d_X
  int a = 0;           // assignment
  std::vector<int> d;  // uptake, length N
  Eigen::VectorXd y;   // outcome, length N

  int size() const { return static_cast<int>(d.size()); }
};

inline void validate_cluster(const Cluster& c) {
  const auto n = static_cast<Eigen::Index>(c.d.size());
  PSCRT_REQUIRE(n >= 1, ErrorCode::InvalidData, "cluster '" + c.id + "' is empty");
  PSCRT_REQUIRE(c.x.rows() == n && c.y.size() == n, ErrorCode::InvalidData,
                "cluster '" + c.id + "' has inconsistent row counts");
  PSCRT_REQUIRE(c.a == 0 || c.a == 1, ErrorCode::NonBinary,
                "a: cluster '" + c.id + "' assignment must be 0 or 1");
  for (int dij : c.d)
    PSCRT_REQUIRE(dij == 0 || dij == 1, ErrorCode::NonBinary,
                  "d: cluster '" + c.id + "' uptake must be 0 or 1");
  for (Eigen::Index j = 0; j < n; ++j)
    PSCRT_REQUIRE(std::isfinite(c.y[j]), ErrorCode::InvalidData,
                  "cluster '" + c.id + "' has a non-finite outcome");
  PSCRT_REQUIRE(c.x.allFinite() && c.v.allFinite(), ErrorCode::InvalidData,
                "cluster '" + c.id + "' has non-finite covariates");
}

// Immutable collection of clusters plus the known assignment probability.
// Construction checks every cluster and the covariate dimensions; the
// design requirements (two or more clusters, both arms) are checked by
// require_design(), which every estimator calls.
class TrialDataset {
 public:
  TrialDataset() = default;
  TrialDataset(std::vector<Cluster> clusters, double pi)
      : clusters_(std::move(clusters)), pi_(pi) {
    PSCRT_REQUIRE(pi_ > 0.0 && pi_ < 1.0, ErrorCode::InvalidConfig,
                  "assignment probability pi must lie in (0, 1)");
    PSCRT_REQUIRE(!clusters_.empty(), ErrorCode::EmptyFile, "dataset has no clusters");
    const auto dx = clusters_.front().x.cols();
    const auto dv = clusters_.front().v.size();
    for (const auto& c : clusters_) {
      validate_cluster(c);
      PSCRT_REQUIRE(c.x.cols() == dx && c.v.size() == dv, ErrorCode::InvalidData,
                    "cluster '" + c.id + "' has covariate dimensions differing from the first cluster");
    }
  }

  const std::vector<Cluster>& clusters() const { return clusters_; }
  const Cluster& cluster(std::size_t i) const { return clusters_[i]; }
  std::size_t num_clusters() const { return clusters_.size(); }
  double pi() const { return pi_; }
  Eigen::Index dim_x() const { return clusters_.empty() ? 0 : clusters_.front().x.cols(); }
  Eigen::Index dim_v() const { return clusters_.empty() ? 0 : clusters_.front().v.size(); }

  std::size_t num_individuals() const {
    std::size_t n = 0;
    for (const auto& c : clusters_) n += c.d.size();
    return n;
  }

  std::size_t num_in_arm(int a) const {
    std::size_t n = 0;
    for (const auto& c : clusters_) n += (c.a == a);
    return n;
  }

  void require_design() const {
    PSCRT_REQUIRE(clusters_.size() >= 2, ErrorCode::TooFewClusters,
                  "at least two clusters are required");
    PSCRT_REQUIRE(num_in_arm(1) > 0 && num_in_arm(0) > 0, ErrorCode::ArmMissing,
                  "both assignment arms must be present");
  }

  // New dataset made of the listed clusters (repeats allowed), each with
  // its full membership.
  TrialDataset subset(std::span<const std::size_t> idx) const {
    std::vector<Cluster> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(clusters_.at(i));
    TrialDataset ds;
    ds.clusters_ = std::move(out);
    ds.pi_ = pi_;
    return ds;
  }

 private:
  std::vector<Cluster> clusters_;
  double pi_ = 0.5;
};

// ---------------------------------------------------------------------------
// Cluster weight W.

enum class WeightKind { ClusterAverage, IndividualAverage, Custom };

struct WeightSpec {
  WeightKind kind = WeightKind::ClusterAverage;
  Expression custom;  // over N and v1..v_dV

  static WeightSpec cluster_average() { return {}; }
  static WeightSpec individual_average() { return {WeightKind::IndividualAverage, {}}; }

  // Expression slots: 0 -> N, k -> v_k.
  static WeightSpec custom_expression(const std::string& text) {
    WeightSpec w;
    w.kind = WeightKind::Custom;
    w.custom = Expression::compile(text, [](const std::string& name) -> std::optional<std::size_t> {
      if (name == "N" || name == "n") return 0;
      if (name.size() > 1 && name[0] == 'v') {
        try {
          std::size_t used = 0;
          const int k = std::stoi(name.substr(1), &used);
          if (used == name.size() - 1 && k >= 1) return static_cast<std::size_t>(k);
        } catch (const std::exception&) {
        }
      }
      return std::nullopt;
    });
    return w;
  }
};

inline double eval_weight(const WeightSpec& spec, int n, const Eigen::VectorXd& v) {
  PSCRT_REQUIRE(n >= 1, ErrorCode::InvalidData, "cluster size must be positive");
  switch (spec.kind) {
    case WeightKind::ClusterAverage: return 1.0;
    case WeightKind::IndividualAverage: return static_cast<double>(n);
    case WeightKind::Custom: {
      std::vector<double> vars(static_cast<std::size_t>(v.size()) + 1);
      vars[0] = n;
      for (Eigen::Index k = 0; k < v.size(); ++k) vars[static_cast<std::size_t>(k) + 1] = v[k];
      const double w = spec.custom(vars);
      PSCRT_REQUIRE(std::isfinite(w) && w > 0.0, ErrorCode::NonPositiveWeight,
                    "custom weight '" + spec.custom.text() + "' returned " + std::to_string(w));
      return w;
    }
  }
  return 1.0;
}

// ---------------------------------------------------------------------------
// Features.

enum class SummaryMode { Own, OwnPlusPeerMean };

struct FeatureSummary {
  SummaryMode mode = SummaryMode::Own;
};

// Column layout of the feature vector [S_ij, V, N]:
//   own:               x1..x_dX, v1..v_dV, n
//   own_plus_peer_mean: x1..x_dX, xbar1..xbar_dX, v1..v_dV, n
struct FeatureLayout {
  Eigen::Index dx = 0;
  Eigen::Index dv = 0;
  SummaryMode mode = SummaryMode::Own;

  Eigen::Index summary_dim() const { return mode == SummaryMode::Own ? dx : 2 * dx; }
  Eigen::Index dim() const { return summary_dim() + dv + 1; }
  Eigen::Index x_index(Eigen::Index k) const { return k; }
  Eigen::Index v_index(Eigen::Index k) const { return summary_dim() + k; }
  Eigen::Index n_index() const { return summary_dim() + dv; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (Eigen::Index k = 0; k < dx; ++k) out.push_back("x" + std::to_string(k + 1));
    if (mode == SummaryMode::OwnPlusPeerMean)
      for (Eigen::Index k = 0; k < dx; ++k) out.push_back("xbar" + std::to_string(k + 1));
    for (Eigen::Index k = 0; k < dv; ++k) out.push_back("v" + std::to_string(k + 1));
    out.push_back("n");
    return out;
  }

  std::optional<std::size_t> index_of(const std::string& name) const {
    const auto all = names();
    for (std::size_t i = 0; i < all.size(); ++i)
      if (all[i] == name) return i;
    if (name == "N") return static_cast<std::size_t>(n_index());
    return std::nullopt;
  }
};

inline FeatureLayout layout_for(const TrialDataset& ds, FeatureSummary summary) {
  return {ds.dim_x(), ds.dim_v(), summary.mode};
}

// Feature vector of individual j (0-based) in the cluster: the summary
// S_ij followed by V and N. The peer block of own_plus_peer_mean is the
// leave-one-out mean of X over the other members, zero for N = 1.
inline Eigen::VectorXd build_features(const Cluster& c, FeatureSummary summary, int j) {
  PSCRT_REQUIRE(j >= 0 && j < c.size(), ErrorCode::IndexOutOfRange,
                "individual index " + std::to_string(j) + " outside cluster of size " +
                    std::to_string(c.size()));
  const FeatureLayout layout{c.x.cols(), c.v.size(), summary.mode};
  Eigen::VectorXd f(layout.dim());
  const Eigen::Index dx = layout.dx;
  f.head(dx) = c.x.row(j).transpose();
  if (summary.mode == SummaryMode::OwnPlusPeerMean) {
    if (c.size() > 1) {
      const Eigen::VectorXd total = c.x.colwise().sum().transpose();
      f.segment(dx, dx) = (total - c.x.row(j).transpose()) / static_cast<double>(c.size() - 1);
    } else {
      f.segment(dx, dx).setZero();
    }
  }
  f.segment(layout.summary_dim(), layout.dv) = c.v;
  f[layout.n_index()] = static_cast<double>(c.size());
  return f;
}

// Row-per-individual view of a dataset used by the estimators. Rows are in
// cluster order; offsets[i]..offsets[i+1] are the rows of cluster i.
struct FlatData {
  FeatureLayout layout;
  Eigen::MatrixXd features;  // n_total x dim
  std::vector<int> a, d;
  std::vector<double> y;
  std::vector<std::size_t> offsets;
  std::vector<double> weight;  // W_i per cluster
  std::vector<int> size;       // N_i per cluster
  double pi = 0.5;

  std::size_t num_clusters() const { return size.size(); }
  std::size_t num_rows() const { return y.size(); }
};

inline FlatData flatten(const TrialDataset& ds, FeatureSummary summary, const WeightSpec& weight) {
  FlatData out;
  out.layout = layout_for(ds, summary);
  out.pi = ds.pi();
  const std::size_t n = ds.num_individuals();
  out.features.resize(static_cast<Eigen::Index>(n), out.layout.dim());
  out.a.reserve(n);
  out.d.reserve(n);
  out.y.reserve(n);
  out.offsets.reserve(ds.num_clusters() + 1);
  out.offsets.push_back(0);
  Eigen::Index row = 0;
  for (const auto& c : ds.clusters()) {
    for (int j = 0; j < c.size(); ++j, ++row) {
      out.features.row(row) = build_features(c, summary, j).transpose();
      out.a.push_back(c.a);
      out.d.push_back(c.d[static_cast<std::size_t>(j)]);
      out.y.push_back(c.y[j]);
    }
    out.offsets.push_back(static_cast<std::size_t>(row));
    out.weight.push_back(eval_weight(weight, c.size(), c.v));
    out.size.push_back(c.size());
  }
  return out;
}

// Rows of the listed clusters (repeats allowed), in the listed order.
inline FlatData subset(const FlatData& flat, std::span<const std::size_t> clusters) {
  FlatData out;
  out.layout = flat.layout;
  out.pi = flat.pi;
  std::size_t n = 0;
  for (std::size_t c : clusters) n += flat.offsets[c + 1] - flat.offsets[c];
  out.features.resize(static_cast<Eigen::Index>(n), flat.features.cols());
  out.a.reserve(n);
  out.d.reserve(n);
  out.y.reserve(n);
  out.offsets.reserve(clusters.size() + 1);
  out.offsets.push_back(0);
  Eigen::Index row = 0;
  for (std::size_t c : clusters) {
    for (std::size_t r = flat.offsets[c]; r < flat.offsets[c + 1]; ++r, ++row) {
      out.features.row(row) = flat.features.row(static_cast<Eigen::Index>(r));
      out.a.push_back(flat.a[r]);
      out.d.push_back(flat.d[r]);
      out.y.push_back(flat.y[r]);
    }
    out.offsets.push_back(static_cast<std::size_t>(row));
    out.weight.push_back(flat.weight[c]);
    out.size.push_back(flat.size[c]);
  }
  return out;
}

inline std::size_t num_in_arm(const FlatData& flat, int a) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < flat.num_clusters(); ++i) n += (flat.a[flat.offsets[i]] == a);
  return n;
}

}  // namespace pscrt
