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

#include <utility>

#include "vedge/types.hpp"

namespace vedge {

// ---------------------------------------------------------------------------
// Filtering primitives
// ---------------------------------------------------------------------------

/// Separable triangle blur of radius r (kernel [1..r+1..1]/(r+1)^2 per axis),
/// replicate borders. r == 0 returns the input unchanged.
PlaneF conv_tri(const PlaneF& src, int radius);

/// Centered-difference gradients with replicate borders:
/// gx(y,x) = p(y,x+1) - p(y,x-1), gy(y,x) = p(y+1,x) - p(y-1,x).
void centered_gradients(const PlaneF& p, PlaneF& gx, PlaneF& gy);

/// Box-average resampling to an arbitrary size (fractional pixel coverage).
PlaneF resize_area(const PlaneF& src, int out_w, int out_h);

/// Bilinear resampling.
PlaneF resize_bilinear(const PlaneF& src, int out_w, int out_h);

Image resize_image(const Image& img, int out_w, int out_h);

/// Pads every side by `pad` pixels with mirror reflection (edge not repeated).
Image pad_reflect(const Image& img, int pad);

/// 1 where some support pixel lies within Euclidean distance <= radius.
PlaneB dilate_disk(const PlaneB& support, double radius);

// ---------------------------------------------------------------------------
// Spec operations
// ---------------------------------------------------------------------------

/// Per-pixel max over channels of centered-difference gradient magnitude,
/// normalized by the image-wide maximum into [0,1]. An all-zero-gradient
/// image maps to all zeros.
EdgeMap gradient_magnitude(const Image& img);

/// Edge-normal angles in [0, pi), estimated from the smoothed second-moment
/// matrix of the strength map. The normal points across the edge.
PlaneF edge_orientations(const PlaneF& strength);

/// Suppresses every pixel with a strictly greater value within +-radius steps
/// along its quantized normal direction. Already-thinned maps are returned
/// unchanged, which makes thinning idempotent.
EdgeMap nms(const EdgeMap& edges, int radius = 1);

/// SLIC superpixels: k-means over (color, position) from a regular grid seed,
/// followed by a connectivity pass that absorbs orphan fragments into the
/// largest adjacent segment. Output labels are compact and 4-connected.
SuperpixelLabeling slic(const Image& img, int n_target, double compactness = 10.0,
                        int n_iters = 10);

/// Binary map marking pixels that have a 4-neighbor with a different label.
EdgeMap superpixel_edges(const SuperpixelLabeling& lab);

/// 8-connected components of the zero (non-edge) pixels of a binary patch.
/// Component labels are 1..k; edge pixels stay 0. Returns the label patch
/// and k.
std::pair<PlaneI, int> connected_components(const PlaneB& patch);

/// The 13-channel feature stack: 3 color channels (luminance + 2 chroma) and,
/// for each of 2 blur scales, normalized gradient magnitude plus 4
/// orientation-binned magnitude channels. Channels live at 1/shrink
/// resolution and are lightly smoothed.
ChannelStack feature_channels(const Image& img, int shrink = 2);

/// Number of channels produced by feature_channels.
constexpr int kFeatureChannelCount = 13;

}  // namespace vedge
