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

#include "vedge/flow.hpp"
#include "vedge/sedge.hpp"
#include "vedge/types.hpp"

namespace vedge {

struct AlignStats {
  int iteration = 0;
  int matched = 0;    // motion pixels matched to a superpixel-edge pixel
  int shifted = 0;    // matched pixels that actually moved
  int discarded = 0;  // unmatched motion pixels
};

/// Thinned motion edges plus alignment provenance.
struct MotionEdgeMap {
  EdgeMap edges;
  AlignStats stats;
};

/// Motion edges of a flow field: the edge detector applied to the colorized
/// flow (compositional by definition).
EdgeMap motion_edges(const EdgeDetector& det, const FlowField& f,
                     const DetectOpts& opts = {});

struct AlignParams {
  double tol = 3.0;                 // match tolerance, pixels
  int superpixel_area = 512;        // ~one superpixel per this many pixels
  double slic_compactness = 10.0;
  int slic_iters = 10;
};

/// Core alignment: one-to-one matching of motion-edge pixels against target
/// edge pixels within `tol`, motion pixels ordered by strength descending.
/// Matched pixels move to their partner's location (keeping their strength,
/// max on collisions); unmatched pixels are discarded.
MotionEdgeMap align_to_edges(const EdgeMap& g, const EdgeMap& target_edges, double tol);

/// Alignment against the SLIC superpixel boundaries of `img`.
MotionEdgeMap align_motion_edges(const EdgeMap& g, const Image& img,
                                 const AlignParams& params = {});

struct HarvestParams {
  float pos_threshold = 0.8f;
  double exclusion_radius = 8.0;
};

struct Supervision {
  EdgeMap supervision;  // aligned strengths at/above pos_threshold
  PlaneB exclusion;     // dilation of all aligned motion edges
};

/// Converts aligned motion edges into the training signal: thresholded
/// positives plus the keep-out mask for negative sampling.
Supervision harvest_supervision(const MotionEdgeMap& aligned, const HarvestParams& params = {});

}  // namespace vedge
