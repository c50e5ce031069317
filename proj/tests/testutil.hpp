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

#include <algorithm>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "vedge/rng.hpp"
#include "vedge/types.hpp"

namespace vedge::test {

/// Self-cleaning scratch directory.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& hint) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           ("vedge-" + hint + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline PlaneF random_plane(Rng& rng, int w, int h, float lo = 0.0f, float hi = 1.0f) {
  PlaneF p(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) p(y, x) = rng.uniform(lo, hi);
  return p;
}

inline Image random_image(Rng& rng, int w, int h, int channels = 3) {
  Image img(w, h, channels);
  for (auto& plane : img.planes) plane = random_plane(rng, w, h);
  return img;
}

/// Independent single-source Dijkstra on the 4-connected grid with edge cost
/// (cost(p)+cost(q))/2, used as the geodesic oracle.
inline std::vector<double> brute_dijkstra(const PlaneF& cost, int sx, int sy) {
  const int h = static_cast<int>(cost.rows());
  const int w = static_cast<int>(cost.cols());
  std::vector<double> dist(static_cast<std::size_t>(w) * h,
                           std::numeric_limits<double>::infinity());
  std::vector<std::uint8_t> done(static_cast<std::size_t>(w) * h, 0);
  dist[static_cast<std::size_t>(sy) * w + sx] = 0;
  for (;;) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < w * h; ++i)
      if (!done[static_cast<std::size_t>(i)] && dist[static_cast<std::size_t>(i)] < best_d) {
        best = i;
        best_d = dist[static_cast<std::size_t>(i)];
      }
    if (best < 0) break;
    done[static_cast<std::size_t>(best)] = 1;
    int x = best % w, y = best / w;
    const int nx[4] = {x - 1, x + 1, x, x};
    const int ny[4] = {y, y, y - 1, y + 1};
    for (int e = 0; e < 4; ++e) {
      if (nx[e] < 0 || nx[e] >= w || ny[e] < 0 || ny[e] >= h) continue;
      double step = 0.5 * (static_cast<double>(cost(y, x)) + cost(ny[e], nx[e]));
      double cand = best_d + step;
      std::size_t q = static_cast<std::size_t>(ny[e]) * w + nx[e];
      if (cand < dist[q]) dist[q] = cand;
    }
  }
  return dist;
}

/// Exhaustive maximum bipartite matching by branch and bound over left
/// vertices; exponential but fine for the small oracle instances.
inline int bnb_max_matching(const std::vector<std::vector<std::int32_t>>& adj, int n_right) {
  std::vector<std::uint8_t> taken(static_cast<std::size_t>(n_right), 0);
  int best = 0;
  int n_left = static_cast<int>(adj.size());
  std::function<void(int, int)> go = [&](int u, int matched) {
    if (matched + (n_left - u) <= best) return;  // bound
    if (u == n_left) {
      best = std::max(best, matched);
      return;
    }
    for (std::int32_t v : adj[static_cast<std::size_t>(u)]) {
      if (taken[static_cast<std::size_t>(v)]) continue;
      taken[static_cast<std::size_t>(v)] = 1;
      go(u + 1, matched + 1);
      taken[static_cast<std::size_t>(v)] = 0;
    }
    go(u + 1, matched);  // leave u unmatched
  };
  go(0, 0);
  return best;
}

/// Union-find component count over nonzero == edge patches (components of the
/// zero pixels, 8-connected); independent of the BFS in the library.
inline int uf_component_count(const PlaneB& patch) {
  const int h = static_cast<int>(patch.rows());
  const int w = static_cast<int>(patch.cols());
  std::vector<int> parent(static_cast<std::size_t>(w) * h);
  for (int i = 0; i < w * h; ++i) parent[static_cast<std::size_t>(i)] = i;
  std::function<int(int)> find = [&](int a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
      a = parent[static_cast<std::size_t>(a)];
    }
    return a;
  };
  auto unite = [&](int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (patch(y, x)) continue;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          if (!patch(yy, xx)) unite(y * w + x, yy * w + xx);
        }
    }
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(w) * h, 0);
  int count = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (patch(y, x)) continue;
      int root = find(y * w + x);
      if (!seen[static_cast<std::size_t>(root)]) {
        seen[static_cast<std::size_t>(root)] = 1;
        ++count;
      }
    }
  return count;
}

}  // namespace vedge::test
