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

// Principal strata and the per-stratum constants that drive the principal
// score and the influence functions.
//
//   stratum  (a_dag, d_dag, h)   d*             valid cells (a, a*)
//   at       (0, 1, 0)           1              (1,0) (0,0)
//   co       (1, 1, 1)           a*             (1,1) (1,0) (0,0)
//   nt       (1, 0, 0)           0              (1,0) (0,0)
//   de       (0, 1, 1)           -              none
//
// e_g(C) = p(a_dag, d_dag, C) - h p(0, 1, C), so e_at = p(0,1),
// e_co = p(1,1) - p(0,1), e_nt = p(1,0) and e_de = 0.

#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "pscrt/core/error.hpp"

namespace pscrt {

enum class Stratum { AlwaysTaker, Complier, NeverTaker, Defier };
enum class Monotonicity { Standard, Strong };

inline constexpr std::array<Stratum, 4> kAllStrata{Stratum::AlwaysTaker, Stratum::Complier,
                                                  Stratum::NeverTaker, Stratum::Defier};

constexpr std::string_view to_string(Stratum g) {
  switch (g) {
    case Stratum::AlwaysTaker: return "at";
    case Stratum::Complier: return "co";
    case Stratum::NeverTaker: return "nt";
    case Stratum::Defier: return "de";
  }
  return "?";
}

constexpr std::string_view to_string(Monotonicity m) {
  return m == Monotonicity::Strong ? "strong" : "standard";
}

inline Stratum parse_stratum(std::string_view s) {
  if (s == "at") return Stratum::AlwaysTaker;
  if (s == "co") return Stratum::Complier;
  if (s == "nt") return Stratum::NeverTaker;
  if (s == "de") return Stratum::Defier;
  throw Error(ErrorCode::InvalidConfig, "unknown stratum '" + std::string(s) + "'");
}

inline Monotonicity parse_monotonicity(std::string_view s) {
  if (s == "standard") return Monotonicity::Standard;
  if (s == "strong") return Monotonicity::Strong;
  throw Error(ErrorCode::InvalidConfig, "unknown monotonicity mode '" + std::string(s) + "'");
}

// A (a, a*) pair: the assignment of one's own cluster and the assignment
// that fixes one's uptake.
struct Cell {
  int a = 0;
  int a_star = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

inline std::string to_string(Cell c) {
  return "(" + std::to_string(c.a) + "," + std::to_string(c.a_star) + ")";
}

struct StratumScheme {
  Stratum stratum;
  int a_dagger;
  int d_dagger;
  int h;
  std::vector<Cell> valid_cells;

  // Uptake value fixed in cell (a, a*).
  int d_star(Cell c) const {
    switch (stratum) {
      case Stratum::AlwaysTaker: return 1;
      case Stratum::Complier: return c.a_star;
      case Stratum::NeverTaker: return 0;
      case Stratum::Defier: return 1 - c.a_star;
    }
    return 0;
  }

  bool is_valid(Cell c) const {
    for (const Cell& v : valid_cells)
      if (v == c) return true;
    return false;
  }
};

inline StratumScheme scheme(Stratum g) {
  switch (g) {
    case Stratum::AlwaysTaker: return {g, 0, 1, 0, {{1, 0}, {0, 0}}};
    case Stratum::Complier: return {g, 1, 1, 1, {{1, 1}, {1, 0}, {0, 0}}};
    case Stratum::NeverTaker: return {g, 1, 0, 0, {{1, 0}, {0, 0}}};
    case Stratum::Defier: return {g, 0, 1, 1, {}};
  }
  return {g, 0, 0, 0, {}};
}

// Strata for which effects are identified under the given mode.
inline bool stratum_available(Stratum g, Monotonicity mode) {
  if (g == Stratum::Defier) return false;
  if (g == Stratum::AlwaysTaker && mode == Monotonicity::Strong) return false;
  return true;
}

inline void require_available(Stratum g, Monotonicity mode) {
  PSCRT_REQUIRE(stratum_available(g, mode), ErrorCode::StratumUnavailable,
                "stratum '" + std::string(to_string(g)) + "' is not identified under " +
                    std::string(to_string(mode)) + " monotonicity");
}

inline void require_cell(const StratumScheme& s, Cell c) {
  PSCRT_REQUIRE(s.is_valid(c), ErrorCode::InvalidCell,
                "cell " + to_string(c) + " is not defined for stratum '" + std::string(to_string(s.stratum)) + "'");
}

}  // namespace pscrt
