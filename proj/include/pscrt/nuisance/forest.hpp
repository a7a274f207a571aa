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

// Random forest of depth-limited regression trees. Features are binned
// once (at most `bins` quantile bins per column) and splits are searched on
// bin boundaries, which keeps training linear in the node size.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "pscrt/core/error.hpp"
#include "pscrt/core/random.hpp"

namespace pscrt {

struct ForestOptions {
  int trees = 200;
  int max_depth = 6;
  int min_node = 5;  // minimum rows in each child
  int bins = 64;
  int mtry = 0;      // 0: floor(sqrt(p))
};

class RegressionForest {
 public:
  RegressionForest() = default;

  static RegressionForest fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                              const ForestOptions& opt, std::uint64_t seed) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    PSCRT_REQUIRE(n >= 1 && p >= 1 && y.size() == n, ErrorCode::InvalidData,
                  "forest needs a non-empty design matching the labels");
    PSCRT_REQUIRE(opt.trees >= 1 && opt.max_depth >= 0 && opt.min_node >= 1 && opt.bins >= 2 &&
                      opt.bins <= 256,
                  ErrorCode::InvalidConfig, "invalid forest options");

    RegressionForest f;
    f.dim_ = p;
    Builder b{x, y, opt, {}, {}, {}, {}, {}, {}, f.nodes_};
    b.bin_all();
    const int mtry = opt.mtry > 0 ? std::min<int>(opt.mtry, static_cast<int>(p))
                                  : std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(p)))));
    f.roots_.reserve(static_cast<std::size_t>(opt.trees));
    std::vector<std::uint32_t> rows(static_cast<std::size_t>(n));
    for (int t = 0; t < opt.trees; ++t) {
      Rng rng = make_rng(seed, {static_cast<std::uint64_t>(t)});
      for (auto& r : rows) r = static_cast<std::uint32_t>(uniform_index(rng, static_cast<std::size_t>(n)));
      f.roots_.push_back(b.grow(rows, 0, rows.size(), 0, mtry, rng));
    }
    return f;
  }

  double predict(const double* row) const {
    double s = 0.0;
    for (int root : roots_) {
      int k = root;
      while (nodes_[static_cast<std::size_t>(k)].feature >= 0) {
        const Node& nd = nodes_[static_cast<std::size_t>(k)];
        k = row[nd.feature] <= nd.threshold ? nd.left : nd.right;
      }
      s += nodes_[static_cast<std::size_t>(k)].value;
    }
    return s / static_cast<double>(roots_.size());
  }

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const {
    PSCRT_REQUIRE(x.cols() == dim_, ErrorCode::InvalidData, "forest prediction dimension mismatch");
    Eigen::VectorXd out(x.rows());
    std::vector<double> row(static_cast<std::size_t>(dim_));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index k = 0; k < dim_; ++k) row[static_cast<std::size_t>(k)] = x(i, k);
      out[i] = predict(row.data());
    }
    return out;
  }

  std::size_t num_trees() const { return roots_.size(); }

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double value = 0.0;
  };

  struct Builder {
    const Eigen::MatrixXd& x;
    const Eigen::VectorXd& y;
    const ForestOptions& opt;
    std::vector<std::vector<double>> upper;   // per feature, bin upper bounds
    std::vector<std::vector<std::uint8_t>> bin;  // per feature, bin of each row
    std::vector<double> cnt, sum;
    std::vector<int> features;
    std::vector<std::uint32_t> scratch;
    std::vector<Node>& nodes;

    void bin_all() {
      const Eigen::Index n = x.rows();
      upper.resize(static_cast<std::size_t>(x.cols()));
      bin.resize(static_cast<std::size_t>(x.cols()));
      std::vector<double> col(static_cast<std::size_t>(n));
      for (Eigen::Index k = 0; k < x.cols(); ++k) {
        for (Eigen::Index i = 0; i < n; ++i) col[static_cast<std::size_t>(i)] = x(i, k);
        std::sort(col.begin(), col.end());
        std::vector<double> u(col.begin(), std::unique(col.begin(), col.end()));
        auto& ub = upper[static_cast<std::size_t>(k)];
        if (static_cast<int>(u.size()) <= opt.bins) {
          ub = u;
        } else {
          for (int q = 1; q <= opt.bins; ++q) {
            const auto pos = static_cast<std::size_t>(
                std::min<double>(static_cast<double>(n - 1), std::ceil(q * static_cast<double>(n) / opt.bins) - 1));
            if (ub.empty() || col[pos] > ub.back()) ub.push_back(col[pos]);
          }
        }
        auto& bk = bin[static_cast<std::size_t>(k)];
        bk.resize(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
          const auto it = std::lower_bound(ub.begin(), ub.end(), x(i, k));
          bk[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(
              std::min<std::ptrdiff_t>(it - ub.begin(), static_cast<std::ptrdiff_t>(ub.size()) - 1));
        }
      }
      features.resize(static_cast<std::size_t>(x.cols()));
      std::iota(features.begin(), features.end(), 0);
      cnt.resize(256);
      sum.resize(256);
    }

    int leaf(double value) {
      nodes.push_back({-1, 0.0, -1, -1, value});
      return static_cast<int>(nodes.size()) - 1;
    }

    // Rows [lo, hi) of `rows` belong to this node; returns the node index.
    int grow(std::vector<std::uint32_t>& rows, std::size_t lo, std::size_t hi, int depth, int mtry, Rng& rng) {
      const std::size_t m = hi - lo;
      double total = 0.0;
      double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
      for (std::size_t r = lo; r < hi; ++r) {
        const double v = y[rows[r]];
        total += v;
        ymin = std::min(ymin, v);
        ymax = std::max(ymax, v);
      }
      const double mean = total / static_cast<double>(m);
      if (depth >= opt.max_depth || m < 2 * static_cast<std::size_t>(opt.min_node) || ymax <= ymin)
        return leaf(mean);

      // Partial Fisher-Yates: the first mtry entries are the candidates.
      for (int k = 0; k < mtry; ++k) {
        const auto j = k + static_cast<int>(uniform_index(rng, features.size() - static_cast<std::size_t>(k)));
        std::swap(features[static_cast<std::size_t>(k)], features[static_cast<std::size_t>(j)]);
      }
      double best_gain = 1e-12 * (1.0 + total * total / static_cast<double>(m));
      int best_feature = -1, best_bin = -1;
      const double base = total * total / static_cast<double>(m);
      for (int k = 0; k < mtry; ++k) {
        const int f = features[static_cast<std::size_t>(k)];
        const auto& bf = bin[static_cast<std::size_t>(f)];
        const std::size_t nb = upper[static_cast<std::size_t>(f)].size();
        if (nb < 2) continue;
        std::fill_n(cnt.begin(), nb, 0.0);
        std::fill_n(sum.begin(), nb, 0.0);
        for (std::size_t r = lo; r < hi; ++r) {
          const auto b = bf[rows[r]];
          cnt[b] += 1.0;
          sum[b] += y[rows[r]];
        }
        double cl = 0.0, sl = 0.0;
        for (std::size_t b = 0; b + 1 < nb; ++b) {
          cl += cnt[b];
          sl += sum[b];
          const double cr = static_cast<double>(m) - cl;
          if (cl < opt.min_node) continue;
          if (cr < opt.min_node) break;
          const double sr = total - sl;
          const double gain = sl * sl / cl + sr * sr / cr - base;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = f;
            best_bin = static_cast<int>(b);
          }
        }
      }
      if (best_feature < 0) return leaf(mean);

      const auto& bf = bin[static_cast<std::size_t>(best_feature)];
      const auto mid = static_cast<std::size_t>(
          std::partition(rows.begin() + static_cast<std::ptrdiff_t>(lo), rows.begin() + static_cast<std::ptrdiff_t>(hi),
                         [&](std::uint32_t r) { return bf[r] <= best_bin; }) -
          rows.begin());
      const int self = static_cast<int>(nodes.size());
      nodes.push_back({best_feature, upper[static_cast<std::size_t>(best_feature)][static_cast<std::size_t>(best_bin)], -1, -1, mean});
      const int left = grow(rows, lo, mid, depth + 1, mtry, rng);
      const int right = grow(rows, mid, hi, depth + 1, mtry, rng);
      nodes[static_cast<std::size_t>(self)].left = left;
      nodes[static_cast<std::size_t>(self)].right = right;
      return self;
    }
  };

  Eigen::Index dim_ = 0;
  std::vector<Node> nodes_;
  std::vector<int> roots_;
};

}  // namespace pscrt
