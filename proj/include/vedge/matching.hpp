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

#include "vedge/types.hpp"

namespace vedge {

struct Match {
  float x1 = 0, y1 = 0;  // source pixel
  float x2 = 0, y2 = 0;  // target pixel
  float score = 0;

  float dx() const { return x2 - x1; }
  float dy() const { return y2 - y1; }
  float displacement() const { return std::sqrt(dx() * dx() + dy() * dy()); }
};

/// Semi-dense correspondences between a frame pair. Source locations are
/// unique.
struct MatchSet {
  std::vector<Match> matches;
  int source_width = 0, source_height = 0;
  int target_width = 0, target_height = 0;

  bool empty() const { return matches.empty(); }
  std::size_t size() const { return matches.size(); }
};

struct BlockMatchParams {
  int grid_step = 4;
  int patch_radius = 4;
  int search_radius = 32;
  int levels = 3;
  float min_texture = 1e-4f;  // minimum patch intensity variance
  float fwd_bwd_tol = 2.0f;
};

/// Coarse-to-fine NCC block matching over a pyramid. Grid points with local
/// texture below min_texture are skipped; matches failing forward-backward
/// consistency within fwd_bwd_tol pixels are dropped.
MatchSet block_match(const Image& a, const Image& b, const BlockMatchParams& params = {});

/// Matches a single source point of `a` into `b` with the same pyramid
/// search block_match uses. Empty when the point is untextured or the
/// correlation window never fits.
std::optional<Match> match_point(const Image& a, const Image& b, int x, int y,
                                 const BlockMatchParams& params = {});

/// Text format: one "x1 y1 x2 y2 score" line per match, '#' comments allowed.
/// Also accepts raw DeepMatching output (extra trailing columns ignored).
MatchSet read_matches(const std::string& path, int source_width, int source_height,
                      int target_width, int target_height);
void write_matches(const MatchSet& ms, const std::string& path);

struct FrameFilterParams {
  std::size_t min_count = 200;
  float slow_max_displacement = 2.0f;    // reject below
  float large_mean_displacement = 15.0f; // reject above
  float trans_frac = 0.9f;               // translation-dominance fraction
  float trans_tol = 1.0f;                // inlier tolerance, pixels
};

enum class RejectReason { None, Insufficient, Slow, Large, Translational };

struct FilterDecision {
  bool accepted = false;
  RejectReason reason = RejectReason::None;
  float max_displacement = 0;
  float mean_displacement = 0;
  float translation_inlier_frac = 0;
};

const char* to_string(RejectReason r);

/// Frame-pair heuristics: drops pairs with too few matches, very slow motion,
/// very large motion, or a dominant global translation.
FilterDecision filter_frame_pair(const MatchSet& ms, const FrameFilterParams& params = {});

}  // namespace vedge
