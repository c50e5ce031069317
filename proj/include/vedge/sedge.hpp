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

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vedge/rng.hpp"
#include "vedge/types.hpp"

namespace vedge {

// Feature recipe v1: 32x32 image patches over the 13-channel stack at
// shrink 2, 16x16 edge-patch labels covering the patch center. Features are
// the 16x16x13 channel window plus pairwise differences of 5x5 cell means
// per channel.
constexpr int kPatchSize = 32;
constexpr int kLabelSize = 16;
constexpr int kChannelShrink = 2;
constexpr int kChannelPatch = kPatchSize / kChannelShrink;  // 16
constexpr int kCellGrid = 5;
constexpr int kCellCount = kCellGrid * kCellGrid;                     // 25
constexpr int kRegFeatureCount = 13 * kChannelPatch * kChannelPatch;  // 3328
constexpr int kSsimPairCount = kCellCount * (kCellCount - 1) / 2;     // 300
constexpr int kSsimFeatureCount = 13 * kSsimPairCount;                // 3900
constexpr int kFeatureCount = kRegFeatureCount + kSsimFeatureCount;   // 7228
constexpr std::uint16_t kFeatureRecipeVersion = 1;
constexpr std::uint16_t kModelFormatVersion = 1;

/// 16x16 binary edge patch stored as a bitset.
struct LabelPatch {
  std::array<std::uint64_t, 4> bits{};

  bool get(int r, int c) const {
    int i = r * kLabelSize + c;
    return (bits[static_cast<std::size_t>(i >> 6)] >> (i & 63)) & 1;
  }
  void set(int r, int c, bool v) {
    int i = r * kLabelSize + c;
    std::uint64_t m = 1ULL << (i & 63);
    if (v)
      bits[static_cast<std::size_t>(i >> 6)] |= m;
    else
      bits[static_cast<std::size_t>(i >> 6)] &= ~m;
  }
  int popcount() const;
  int hamming(const LabelPatch& other) const;
  bool operator==(const LabelPatch&) const = default;
};

/// One training sample: a window into a shared channel stack plus its
/// structured label (all-zero label for negatives).
struct Sample {
  std::shared_ptr<const ChannelStack> stack;
  int cx = 0, cy = 0;  // patch origin in the channel grid
  std::array<float, 13 * kCellCount> cell_means{};
  LabelPatch label;
  bool negative = false;
};

/// Cell means of the 16x16 channel window at origin (cx,cy), all 13
/// channels. Training and detection share this routine so feature values
/// agree bit for bit.
std::array<float, 13 * kCellCount> compute_cell_means(const ChannelStack& stack, int cx,
                                                      int cy);

/// Feature f of a sample. f < kRegFeatureCount indexes the channel window;
/// the rest are cell-mean pairwise differences.
float sample_feature(const Sample& s, int f);

struct SampleParams {
  int n_pos = 1000;
  int n_neg = 1000;
  float pos_threshold = 0.8f;
  float neg_threshold = 0.1f;
  double exclusion_radius = 8.0;
};

/// Harvests positive patches centered on high-scoring supervision pixels and
/// negatives away from any supervision. Positives whose label forms a single
/// connected region are discarded. `exclusion`, when given, overrides the
/// internally dilated supervision as the negatives' keep-out mask.
std::vector<Sample> extract_samples(const Image& img, const EdgeMap& supervision,
                                    const PlaneB* exclusion, const SampleParams& params,
                                    Rng& rng);

struct TreeNode {
  std::int32_t feature = -1;  // -1 for leaves
  float threshold = 0;
  std::int32_t left = -1, right = -1;
  std::int32_t leaf = -1;  // index into Tree::leaves for leaf nodes
};

struct TreeLeaf {
  LabelPatch edge;
  std::array<std::uint8_t, kLabelSize * kLabelSize> seg{};  // labels 1..n_segs
  std::uint8_t n_segs = 1;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::vector<TreeLeaf> leaves;
};

struct StructuredForest {
  std::vector<Tree> trees;
  std::uint32_t max_depth = 64;
  std::uint64_t train_seed = 0;
  std::uint16_t recipe_version = kFeatureRecipeVersion;
};

struct TrainParams {
  int n_trees = 8;
  int max_depth = 64;
  double frac_per_tree = 0.25;
  int min_leaf = 8;
  int n_feature_probe = 1000;  // random feature dimensions per node
  int n_threshold_probe = 8;   // quantile thresholds per feature
  int n_pair_probe = 256;      // label pixel pairs for the node pseudo-labels
  std::uint64_t seed = 0;
  int jobs = 1;
};

/// Trains the structured forest. Deterministic given the seed: the same
/// samples and parameters serialize to identical bytes at any job count.
StructuredForest train_forest(const std::vector<Sample>& samples, const TrainParams& params);

struct DetectOpts {
  std::vector<double> scales = {0.5, 1.0, 2.0};
  int sharpen = 2;
  int stride = 2;  // even; patch origin step at full resolution
  int jobs = 1;
};

/// Image edge operator: the iteration-0 gradient detector or a trained
/// forest.
class EdgeDetector {
 public:
  static EdgeDetector gradient();
  static EdgeDetector forest(StructuredForest model);

  bool is_gradient() const { return !model_.has_value(); }
  const StructuredForest* forest_model() const { return model_ ? &*model_ : nullptr; }

  EdgeMap detect(const Image& img, const DetectOpts& opts = {}) const;

 private:
  std::optional<StructuredForest> model_;
};

/// Free-function form of EdgeDetector::detect.
EdgeMap detect(const EdgeDetector& det, const Image& img, const DetectOpts& opts = {});

/// Versioned binary container ("SEDG", format + recipe versions, parameter
/// block, per-tree arrays, CRC32; little-endian throughout).
void save_model(const StructuredForest& f, const std::string& path);
StructuredForest load_model(const std::string& path);

/// CRC-32 (IEEE), used by the model container.
std::uint32_t crc32(const std::uint8_t* data, std::size_t n);

}  // namespace vedge
