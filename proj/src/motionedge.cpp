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

#include "vedge/motionedge.hpp"

#include <algorithm>
#include <cmath>

#include "vedge/bipartite.hpp"
#include "vedge/imgproc.hpp"

namespace vedge {

EdgeMap motion_edges(const EdgeDetector& det, const FlowField& f, const DetectOpts& opts) {
  return det.detect(flow_to_rgb(f), opts);
}

MotionEdgeMap align_to_edges(const EdgeMap& g, const EdgeMap& target_edges, double tol) {
  if (!g.thinned) throw InvalidInput("align_to_edges: motion edges must be thinned");
  if (g.width() != target_edges.width() || g.height() != target_edges.height())
    throw InvalidInput("align_to_edges: dimensions differ");
  if (tol < 0) throw InvalidInput("align_to_edges: negative tolerance");

  const int w = g.width(), h = g.height();

  struct Pixel {
    int x, y;
    float strength;
  };
  std::vector<Pixel> motion;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (g.strength(y, x) > 0) motion.push_back({x, y, g.strength(y, x)});

  // target edge pixels indexed by position for neighborhood lookups
  PlaneI target_id = PlaneI::Constant(h, w, -1);
  int n_target = 0;
  std::vector<std::pair<int, int>> target_pos;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (target_edges.strength(y, x) > 0) {
        target_id(y, x) = n_target++;
        target_pos.push_back({x, y});
      }

  const int r = static_cast<int>(std::floor(tol));
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (static_cast<double>(dx) * dx + static_cast<double>(dy) * dy <= tol * tol)
        offsets.emplace_back(dy, dx);

  BipartiteGraph graph;
  graph.n_left = static_cast<int>(motion.size());
  graph.n_right = n_target;
  graph.adj.resize(motion.size());
  for (std::size_t i = 0; i < motion.size(); ++i)
    for (auto [dy, dx] : offsets) {
      int yy = motion[i].y + dy, xx = motion[i].x + dx;
      if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
      int id = target_id(yy, xx);
      if (id >= 0) graph.adj[i].push_back(id);
    }

  // strength-descending order (ties: row-major) for a deterministic matching
  std::vector<std::int32_t> order(motion.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int32_t>(i);
  std::stable_sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
    return motion[static_cast<std::size_t>(a)].strength >
           motion[static_cast<std::size_t>(b)].strength;
  });
  std::vector<std::int32_t> match = kuhn_matching(graph, order);

  MotionEdgeMap out;
  out.edges = EdgeMap(w, h);
  out.edges.thinned = true;
  for (std::size_t i = 0; i < motion.size(); ++i) {
    std::int32_t t = match[i];
    if (t == -1) {
      out.stats.discarded += 1;
      continue;
    }
    auto [tx, ty] = target_pos[static_cast<std::size_t>(t)];
    out.stats.matched += 1;
    if (tx != motion[i].x || ty != motion[i].y) out.stats.shifted += 1;
    out.edges.strength(ty, tx) = std::max(out.edges.strength(ty, tx), motion[i].strength);
  }
  return out;
}

MotionEdgeMap align_motion_edges(const EdgeMap& g, const Image& img, const AlignParams& params) {
  require_valid(img, "align_motion_edges");
  if (g.width() != img.width() || g.height() != img.height())
    throw InvalidInput("align_motion_edges: dimensions differ");
  int n_target = std::max(1, img.width() * img.height() / std::max(1, params.superpixel_area));
  SuperpixelLabeling lab = slic(img, n_target, params.slic_compactness, params.slic_iters);
  return align_to_edges(g, superpixel_edges(lab), params.tol);
}

Supervision harvest_supervision(const MotionEdgeMap& aligned, const HarvestParams& params) {
  const int w = aligned.edges.width(), h = aligned.edges.height();
  Supervision out;
  out.supervision = EdgeMap(w, h);
  out.supervision.thinned = aligned.edges.thinned;

  PlaneB support(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float s = aligned.edges.strength(y, x);
      support(y, x) = s > 0 ? 1 : 0;
      if (s >= params.pos_threshold) out.supervision.strength(y, x) = s;
    }
  out.exclusion = dilate_disk(support, params.exclusion_radius);
  return out;
}

}  // namespace vedge
