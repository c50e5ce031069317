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

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace vedge {

/// Row-major dense pixel planes. Row index is y, column index is x.
using PlaneF = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using PlaneD = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using PlaneI = Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using PlaneB = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad argument or precondition violation on an operation.
struct InvalidInput : Error {
  using Error::Error;
};

/// Malformed text input (carries a human-readable location in the message).
struct ParseError : Error {
  using Error::Error;
};

/// Malformed binary container (wrong magic, truncation, checksum, version).
struct FormatError : Error {
  using Error::Error;
};

struct TrainingError : Error {
  using Error::Error;
};

struct IterationError : Error {
  using Error::Error;
};

/// Planar intensity image, 1 or 3 channels, values in [0,1].
struct Image {
  std::vector<PlaneF> planes;

  Image() = default;
  Image(int width, int height, int channels)
      : planes(static_cast<std::size_t>(channels), PlaneF::Zero(height, width)) {}

  int width() const { return planes.empty() ? 0 : static_cast<int>(planes[0].cols()); }
  int height() const { return planes.empty() ? 0 : static_cast<int>(planes[0].rows()); }
  int channels() const { return static_cast<int>(planes.size()); }
  bool empty() const { return planes.empty() || planes[0].size() == 0; }
};

/// Throws InvalidInput unless img is a non-empty 1- or 3-channel image with
/// consistent plane dimensions.
void require_valid(const Image& img, const char* where);

/// Per-pixel edge strengths in [0,1]. `thinned` is set once NMS has run.
struct EdgeMap {
  PlaneF strength;
  bool thinned = false;

  EdgeMap() = default;
  explicit EdgeMap(PlaneF s, bool is_thinned = false)
      : strength(std::move(s)), thinned(is_thinned) {}
  EdgeMap(int width, int height) : strength(PlaneF::Zero(height, width)) {}

  int width() const { return static_cast<int>(strength.cols()); }
  int height() const { return static_cast<int>(strength.rows()); }
  bool empty() const { return strength.size() == 0; }
};

/// Dense segment labeling. Labels are compact in [0, n_segments) and each
/// segment is 4-connected after the connectivity pass.
struct SuperpixelLabeling {
  PlaneI labels;
  int n_segments = 0;

  int width() const { return static_cast<int>(labels.cols()); }
  int height() const { return static_cast<int>(labels.rows()); }
};

/// Feature channels at 1/shrink of the source resolution.
struct ChannelStack {
  std::vector<PlaneF> channels;
  int shrink = 1;
  int full_width = 0;   // source image dimensions
  int full_height = 0;

  int width() const { return channels.empty() ? 0 : static_cast<int>(channels[0].cols()); }
  int height() const { return channels.empty() ? 0 : static_cast<int>(channels[0].rows()); }
  int n_channels() const { return static_cast<int>(channels.size()); }
};

/// Dense displacement field, pixel units. valid_mask (optional) is nonzero
/// where the flow is defined.
struct FlowField {
  PlaneF u, v;
  PlaneB valid_mask;  // empty == everywhere valid

  FlowField() = default;
  FlowField(int width, int height)
      : u(PlaneF::Zero(height, width)), v(PlaneF::Zero(height, width)) {}

  int width() const { return static_cast<int>(u.cols()); }
  int height() const { return static_cast<int>(u.rows()); }
  bool empty() const { return u.size() == 0; }
  bool has_mask() const { return valid_mask.size() != 0; }
};

inline int iround(float x) { return static_cast<int>(std::lround(x)); }
inline int iround(double x) { return static_cast<int>(std::lround(x)); }

template <typename T>
T clamp(T v, T lo, T hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

}  // namespace vedge
