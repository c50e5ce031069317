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

#include <cstdint>
#include <vector>

namespace vedge {

/// Sparse bipartite graph, adjacency per left vertex.
struct BipartiteGraph {
  int n_left = 0;
  int n_right = 0;
  std::vector<std::vector<std::int32_t>> adj;  // size n_left
};

/// Maximum-cardinality matching via augmenting paths (Kuhn). Left vertices
/// are processed in `order`; with a fixed order the particular matching is
/// deterministic. Returns match_left (size n_left, -1 = unmatched).
std::vector<std::int32_t> kuhn_matching(const BipartiteGraph& g,
                                        const std::vector<std::int32_t>& order);

/// Maximum-cardinality matching via Hopcroft-Karp. Returns match_left.
std::vector<std::int32_t> hopcroft_karp(const BipartiteGraph& g);

}  // namespace vedge
