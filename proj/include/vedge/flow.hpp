// This file is part of the vedge project.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vedge/matching.hpp"
#include "vedge/types.hpp"

namespace vedge {

/// Per-pixel traversal cost derived from an edge map. The cost of moving
/// between 4-neighbors p and q is (cost(p)+cost(q))/2.
struct CostMap {
  PlaneF cost;

  int width() const { return static_cast<int>(cost.cols()); }
  int height() const { return static_cast<int>(cost.rows()); }
};

/// cost(p) = eps + alpha * edges(p).
CostMap edge_cost_map(const EdgeMap& edges, double alpha, double eps = 1e-3);

/// For each pixel, its k geodesically nearest matches under the 4-connected
/// grid metric of `cost`. Entries are (match index, distance) in
/// nondecreasing distance order; equal distances resolve to the lower match
/// index. Unused slots hold index -1.
struct GeodesicNeighbors {
  int width = 0, height = 0, k = 0;
  std::vector<std::int32_t> index;  // (width*height) x k, row-major pixels
  std::vector<float> distance;

  const std::int32_t* indices_at(int pixel) const { return &index[static_cast<std::size_t>(pixel) * k]; }
  const float* distances_at(int pixel) const { return &distance[static_cast<std::size_t>(pixel) * k]; }
};

GeodesicNeighbors geodesic_knn(const CostMap& cost, const MatchSet& ms, int k);

enum class InterpMode { NadarayaWatson, LocallyAffine };

struct InterpParams {
  int k = 100;
  double alpha = 100.0;
  double kernel_bandwidth = 70.0;  // weight = exp(-dist / bandwidth)
  double eps = 1e-3;
  InterpMode mode = InterpMode::LocallyAffine;
  double condition_threshold = 1e8;  // LA falls back to NW above this
};

/// Edge-aware sparse-to-dense interpolation of the match displacements.
FlowField interpolate(const MatchSet& ms, const EdgeMap& edges, const InterpParams& params);

/// Edge-stopped Jacobi diffusion; the weight across an edge is
/// exp(-alpha * mean edge strength). n_iters == 0 returns the input.
FlowField smooth_flow(const FlowField& f, const EdgeMap& edges, int n_iters,
                      double alpha = 5.0);

/// Orientation -> hue, magnitude -> saturation (value fixed at 1). max_mag
/// defaults to the 99th-percentile magnitude, floored at 1 px.
Image flow_to_rgb(const FlowField& f, std::optional<double> max_mag = std::nullopt);

/// Middlebury .flo: float 202021.25, i32 width, i32 height, interleaved
/// row-major (u,v) float32, little-endian. Round trips are bit-exact.
FlowField read_flo(const std::string& path);
void write_flo(const FlowField& f, const std::string& path);

/// Average endpoint error over unmasked pixels.
double aee(const FlowField& pred, const FlowField& gt, const PlaneB* mask = nullptr);

}  // namespace vedge
