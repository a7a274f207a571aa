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

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace pscrt {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from a root seed and a path of
// stream identifiers, e.g. derive_seed(root, {kBootstrapStream, b}).
inline std::uint64_t derive_seed(std::uint64_t root,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(root);
  for (std::uint64_t p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

inline Rng make_rng(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  return Rng(derive_seed(root, path));
}

// Stream tags keep the seeds of unrelated consumers apart.
namespace stream {
inline constexpr std::uint64_t kFolds = 1;
inline constexpr std::uint64_t kBootstrap = 2;
inline constexpr std::uint64_t kForest = 3;
inline constexpr std::uint64_t kStack = 4;
inline constexpr std::uint64_t kReplicate = 5;
inline constexpr std::uint64_t kOracle = 6;
inline constexpr std::uint64_t kCrossFit = 7;
}  // namespace stream

// Uniform integer in [0, n) that does not depend on the standard library's
// distribution implementation.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t limit = Rng::max() - Rng::max() % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return static_cast<std::size_t>(r % n);
}

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal draw (Marsaglia polar method). Written out so that
// simulated data do not depend on the standard library's distributions.
class NormalSampler {
 public:
  double operator()(Rng& rng) {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01(rng) - 1.0;
      v = 2.0 * uniform01(rng) - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

 private:
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace pscrt
