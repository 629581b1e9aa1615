// Copyright 2026 the gaussflow authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GAUSSFLOW_RNG_HPP
#define GAUSSFLOW_RNG_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace gaussflow {

/// Finalizer of the splitmix64 generator. A cheap, well-mixed 64-bit hash
/// used to derive independent seed values from (root seed, path) tuples.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a hash of a label. Used to key RNG streams by method *name* so that
/// adding or reordering methods in a config never perturbs the streams of the
/// other methods.
inline std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives a child seed from a root seed and a path of counters
/// (e.g. {sweep index, replicate, method hash, particle index}).
/// The derivation is a counter-based hash chain, so any two distinct paths
/// yield (for all practical purposes) independent streams and the derivation
/// is independent of evaluation order or thread assignment.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(root ^ 0x5851f42d4c957f2dULL);
  for (const std::uint64_t p : path) {
    s = mix64(s ^ mix64(p));
  }
  return s;
}

/// A self-contained random stream: a 64-bit Mersenne twister plus the
/// distribution objects needed by the samplers. Each logical unit of work
/// (particle, replicate, resampling pass) owns its own stream so results do
/// not depend on how work is scheduled across threads.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  /// Uniform draw on [0, 1).
  double uniform() { return uniform_(engine_); }

  /// Standard normal draw.
  double normal() { return normal_(engine_); }

  /// Vector of n independent standard normal draws.
  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      z[i] = normal();
    }
    return z;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace gaussflow

#endif  // GAUSSFLOW_RNG_HPP
