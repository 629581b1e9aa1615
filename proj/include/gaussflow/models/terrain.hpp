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

#ifndef GAUSSFLOW_MODELS_TERRAIN_HPP
#define GAUSSFLOW_MODELS_TERRAIN_HPP

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gaussflow/errors.hpp"
#include "gaussflow/rng.hpp"

namespace gaussflow::models {

/// Smooth synthetic elevation map: a sum of isotropic Gaussian bumps over the
/// horizontal plane. Smoothness everywhere makes the map safe for the
/// derivative-hungry proposals while still producing the multimodal
/// likelihoods that make terrain-referenced tracking hard.
class TerrainMap {
 public:
  struct Blob {
    double cx = 0.0;
    double cy = 0.0;
    double amplitude = 0.0;
    double width = 1.0;
  };

  TerrainMap() = default;
  explicit TerrainMap(std::vector<Blob> blobs) : blobs_(std::move(blobs)) {
    for (const Blob& b : blobs_) {
      if (!(b.width > 0.0)) throw ConfigError("terrain: blob width must be positive");
    }
  }

  /// Random map: blob centers uniform on [-extent, extent]^2, amplitudes on
  /// [50, 300], widths on [200, 800]. These scales pair with the aircraft
  /// scenario's kilometres-wide flight box.
  static TerrainMap random(int n_blobs, std::uint64_t seed, double extent = 5000.0) {
    if (n_blobs < 0) throw ConfigError("terrain: n_blobs must be nonnegative");
    RngStream stream(derive_seed(seed, {hash_label("terrain")}));
    std::vector<Blob> blobs;
    blobs.reserve(static_cast<std::size_t>(n_blobs));
    for (int i = 0; i < n_blobs; ++i) {
      Blob b;
      b.cx = extent * (2.0 * stream.uniform() - 1.0);
      b.cy = extent * (2.0 * stream.uniform() - 1.0);
      b.amplitude = 50.0 + 250.0 * stream.uniform();
      b.width = 200.0 + 600.0 * stream.uniform();
      blobs.push_back(b);
    }
    return TerrainMap(std::move(blobs));
  }

  double elevation(double px, double py) const {
    double total = 0.0;
    for (const Blob& b : blobs_) {
      total += b.amplitude * bump(b, px, py);
    }
    return total;
  }

  Eigen::Vector2d gradient(double px, double py) const {
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    for (const Blob& b : blobs_) {
      const double e = b.amplitude * bump(b, px, py);
      const double inv_w2 = 1.0 / (b.width * b.width);
      g[0] -= e * (px - b.cx) * inv_w2;
      g[1] -= e * (py - b.cy) * inv_w2;
    }
    return g;
  }

  Eigen::Matrix2d hessian(double px, double py) const {
    Eigen::Matrix2d h = Eigen::Matrix2d::Zero();
    for (const Blob& b : blobs_) {
      const double e = b.amplitude * bump(b, px, py);
      const double inv_w2 = 1.0 / (b.width * b.width);
      const Eigen::Vector2d delta(px - b.cx, py - b.cy);
      h += e * (delta * delta.transpose() * inv_w2 * inv_w2 -
                Eigen::Matrix2d::Identity() * inv_w2);
    }
    return h;
  }

  const std::vector<Blob>& blobs() const { return blobs_; }

  /// One blob per line: "cx cy amplitude width", full double precision.
  std::string serialize() const {
    std::ostringstream out;
    out.precision(17);
    for (const Blob& b : blobs_) {
      out << b.cx << ' ' << b.cy << ' ' << b.amplitude << ' ' << b.width << '\n';
    }
    return out.str();
  }

  /// Parses the serialize() format. Blank lines and lines starting with '#'
  /// are skipped; anything else must be exactly four numbers.
  static TerrainMap parse(const std::string& text) {
    std::vector<Blob> blobs;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      std::istringstream fields(line);
      Blob b;
      double extra;
      if (!(fields >> b.cx >> b.cy >> b.amplitude >> b.width) || (fields >> extra)) {
        throw ConfigError("terrain: line " + std::to_string(line_no) +
                          " must contain exactly four numbers");
      }
      if (!(b.width > 0.0)) {
        throw ConfigError("terrain: line " + std::to_string(line_no) +
                          " has a nonpositive width");
      }
      blobs.push_back(b);
    }
    return TerrainMap(std::move(blobs));
  }

 private:
  static double bump(const Blob& b, double px, double py) {
    const double dx = px - b.cx;
    const double dy = py - b.cy;
    return std::exp(-(dx * dx + dy * dy) / (2.0 * b.width * b.width));
  }

  std::vector<Blob> blobs_;
};

}  // namespace gaussflow::models

#endif  // GAUSSFLOW_MODELS_TERRAIN_HPP
