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

#include "vedge/bipartite.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <queue>

namespace vedge {

namespace {

bool kuhn_augment(const BipartiteGraph& g, std::int32_t u,
                  std::vector<std::int32_t>& match_left,
                  std::vector<std::int32_t>& match_right,
                  std::vector<std::uint8_t>& visited) {
  for (std::int32_t v : g.adj[static_cast<std::size_t>(u)]) {
    if (visited[static_cast<std::size_t>(v)]) continue;
    visited[static_cast<std::size_t>(v)] = 1;
    if (match_right[static_cast<std::size_t>(v)] == -1 ||
        kuhn_augment(g, match_right[static_cast<std::size_t>(v)], match_left, match_right,
                     visited)) {
      match_left[static_cast<std::size_t>(u)] = v;
      match_right[static_cast<std::size_t>(v)] = u;
      return true;
    }
  }
  return false;
}

}  // namespace

std::vector<std::int32_t> kuhn_matching(const BipartiteGraph& g,
                                        const std::vector<std::int32_t>& order) {
  std::vector<std::int32_t> match_left(static_cast<std::size_t>(g.n_left), -1);
  std::vector<std::int32_t> match_right(static_cast<std::size_t>(g.n_right), -1);
  std::vector<std::uint8_t> visited(static_cast<std::size_t>(g.n_right), 0);
  for (std::int32_t u : order) {
    std::fill(visited.begin(), visited.end(), 0);
    kuhn_augment(g, u, match_left, match_right, visited);
  }
  return match_left;
}

std::vector<std::int32_t> hopcroft_karp(const BipartiteGraph& g) {
  constexpr std::int32_t kInf = std::numeric_limits<std::int32_t>::max();
  std::vector<std::int32_t> match_left(static_cast<std::size_t>(g.n_left), -1);
  std::vector<std::int32_t> match_right(static_cast<std::size_t>(g.n_right), -1);
  std::vector<std::int32_t> dist(static_cast<std::size_t>(g.n_left));

  auto bfs = [&]() {
    std::queue<std::int32_t> q;
    bool reachable_free = false;
    for (std::int32_t u = 0; u < g.n_left; ++u) {
      if (match_left[static_cast<std::size_t>(u)] == -1) {
        dist[static_cast<std::size_t>(u)] = 0;
        q.push(u);
      } else {
        dist[static_cast<std::size_t>(u)] = kInf;
      }
    }
    while (!q.empty()) {
      std::int32_t u = q.front();
      q.pop();
      for (std::int32_t v : g.adj[static_cast<std::size_t>(u)]) {
        std::int32_t w = match_right[static_cast<std::size_t>(v)];
        if (w == -1) {
          reachable_free = true;
        } else if (dist[static_cast<std::size_t>(w)] == kInf) {
          dist[static_cast<std::size_t>(w)] = dist[static_cast<std::size_t>(u)] + 1;
          q.push(w);
        }
      }
    }
    return reachable_free;
  };

  std::function<bool(std::int32_t)> dfs = [&](std::int32_t u) {
    for (std::int32_t v : g.adj[static_cast<std::size_t>(u)]) {
      std::int32_t w = match_right[static_cast<std::size_t>(v)];
      if (w == -1 ||
          (dist[static_cast<std::size_t>(w)] == dist[static_cast<std::size_t>(u)] + 1 && dfs(w))) {
        match_left[static_cast<std::size_t>(u)] = v;
        match_right[static_cast<std::size_t>(v)] = u;
        return true;
      }
    }
    dist[static_cast<std::size_t>(u)] = kInf;
    return false;
  };

  while (bfs())
    for (std::int32_t u = 0; u < g.n_left; ++u)
      if (match_left[static_cast<std::size_t>(u)] == -1) dfs(u);
  return match_left;
}

}  // namespace vedge
