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

// Model formulas: "a + a:n + x1 + v1 + n". Each term is a product of
// factors drawn from the assignment a, the uptake d, and the named feature
// columns of a FeatureLayout. An intercept is always fitted and is not
// part of the design built here.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "pscrt/core/error.hpp"
#include "pscrt/data_model.hpp"

namespace pscrt {

struct Factor {
  enum class Kind { Assignment, Uptake, Feature };
  Kind kind = Kind::Feature;
  std::size_t column = 0;

  friend bool operator==(const Factor&, const Factor&) = default;
  friend auto operator<=>(const Factor&, const Factor&) = default;
};

struct Term {
  std::vector<Factor> factors;  // sorted

  bool uses(Factor::Kind k) const {
    return std::any_of(factors.begin(), factors.end(), [k](const Factor& f) { return f.kind == k; });
  }
  friend bool operator==(const Term&, const Term&) = default;
};

class Formula {
 public:
  Formula() = default;

  static Formula parse(const std::string& text, const FeatureLayout& layout) {
    Formula f;
    f.text_ = text;
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t plus = text.find('+', start);
      if (plus == std::string::npos) plus = text.size();
      const std::string term_text = trim(text.substr(start, plus - start));
      PSCRT_REQUIRE(!term_text.empty(), ErrorCode::InvalidConfig,
                    "empty term in formula '" + text + "'");
      Term term;
      std::size_t fs = 0;
      while (fs <= term_text.size()) {
        std::size_t colon = term_text.find(':', fs);
        if (colon == std::string::npos) colon = term_text.size();
        const std::string name = trim(term_text.substr(fs, colon - fs));
        term.factors.push_back(resolve(name, layout, text));
        fs = colon + 1;
      }
      std::sort(term.factors.begin(), term.factors.end());
      f.add(std::move(term));
      start = plus + 1;
    }
    return f;
  }

  // Defaults for data with the given layout: the uptake model uses
  // a + a:n + every feature; the outcome model d + d:n + d:<summary
  // columns> + every feature.
  static Formula default_uptake(const FeatureLayout& layout) {
    std::string s = "a + a:n";
    for (const auto& n : layout.names()) s += " + " + n;
    return parse(s, layout);
  }
  static Formula default_outcome(const FeatureLayout& layout) {
    const auto names = layout.names();
    std::string s = "d + d:n";
    for (Eigen::Index k = 0; k < layout.summary_dim(); ++k) s += " + d:" + names[static_cast<std::size_t>(k)];
    for (const auto& n : names) s += " + " + n;
    return parse(s, layout);
  }

  const std::vector<Term>& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }
  const std::string& text() const { return text_; }

  bool uses(Factor::Kind k) const {
    return std::any_of(terms_.begin(), terms_.end(), [k](const Term& t) { return t.uses(k); });
  }

  // Formula obtained by fixing one of a or d at a constant value: factors
  // of that kind are dropped (value 1) or the whole term vanishes (value 0);
  // terms reduced to the intercept or to duplicates are removed.
  Formula fixing(Factor::Kind kind, int value) const {
    Formula out;
    out.text_ = text_;
    for (const Term& t : terms_) {
      if (!t.uses(kind)) {
        out.add(t);
        continue;
      }
      if (value == 0) continue;
      Term reduced;
      for (const Factor& f : t.factors)
        if (f.kind != kind) reduced.factors.push_back(f);
      if (!reduced.factors.empty()) out.add(std::move(reduced));
    }
    return out;
  }

  // Design rows (no intercept column) for feature rows `f`, with the
  // assignment and uptake supplied per row.
  Eigen::MatrixXd design(const Eigen::MatrixXd& f, std::span<const int> a, std::span<const int> d) const {
    Eigen::MatrixXd out(f.rows(), static_cast<Eigen::Index>(terms_.size()));
    for (Eigen::Index r = 0; r < f.rows(); ++r) {
      const auto ri = static_cast<std::size_t>(r);
      for (std::size_t t = 0; t < terms_.size(); ++t)
        out(r, static_cast<Eigen::Index>(t)) = evaluate(terms_[t], f, r, a.empty() ? 0 : a[ri], d.empty() ? 0 : d[ri]);
    }
    return out;
  }

  // Same with a single counterfactual (a, d) for every row.
  Eigen::MatrixXd design(const Eigen::MatrixXd& f, int a, int d) const {
    Eigen::MatrixXd out(f.rows(), static_cast<Eigen::Index>(terms_.size()));
    for (Eigen::Index r = 0; r < f.rows(); ++r)
      for (std::size_t t = 0; t < terms_.size(); ++t)
        out(r, static_cast<Eigen::Index>(t)) = evaluate(terms_[t], f, r, a, d);
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
  }

  static Factor resolve(const std::string& name, const FeatureLayout& layout, const std::string& text) {
    if (name == "a" || name == "A") return {Factor::Kind::Assignment, 0};
    if (name == "d" || name == "D") return {Factor::Kind::Uptake, 0};
    const auto idx = layout.index_of(name);
    PSCRT_REQUIRE(idx.has_value(), ErrorCode::InvalidConfig,
                  "unknown variable '" + name + "' in formula '" + text + "'");
    return {Factor::Kind::Feature, *idx};
  }

  static double evaluate(const Term& t, const Eigen::MatrixXd& f, Eigen::Index r, int a, int d) {
    double v = 1.0;
    for (const Factor& fac : t.factors) {
      switch (fac.kind) {
        case Factor::Kind::Assignment: v *= a; break;
        case Factor::Kind::Uptake: v *= d; break;
        case Factor::Kind::Feature: v *= f(r, static_cast<Eigen::Index>(fac.column)); break;
      }
    }
    return v;
  }

  void add(Term t) {
    if (std::find(terms_.begin(), terms_.end(), t) == terms_.end()) terms_.push_back(std::move(t));
  }

  std::string text_;
  std::vector<Term> terms_;
};

}  // namespace pscrt
