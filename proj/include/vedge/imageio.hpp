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

#include <string>

#include "vedge/types.hpp"

namespace vedge {

/// Reads a PNG / binary PGM / binary PPM file into a planar [0,1] image.
/// The format is sniffed from the file header, not the extension.
Image read_image(const std::string& path);

/// Writes an 8-bit PNG (grayscale for 1 channel, RGB for 3).
void write_image_png(const Image& img, const std::string& path);

/// Writes binary PGM (1 channel) or PPM (3 channels), 8-bit.
void write_image_pnm(const Image& img, const std::string& path);

/// EdgeMap <-> 8-bit grayscale PNG. Strengths quantize as round(s*255).
void write_edge_map_png(const EdgeMap& edges, const std::string& path);
EdgeMap read_edge_map_png(const std::string& path);

/// EdgeMap <-> raw float32 container: "EDGM" + u32 width + u32 height
/// (12-byte header), then row-major float32 strengths, all little-endian.
/// Round trip is bit-exact.
void write_edge_map_edgm(const EdgeMap& edges, const std::string& path);
EdgeMap read_edge_map_edgm(const std::string& path);

}  // namespace vedge
