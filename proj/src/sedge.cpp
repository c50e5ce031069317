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

#include "vedge/sedge.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <queue>

#include "vedge/imgproc.hpp"
#include "vedge/parallel.hpp"

namespace vedge {

// ---------------------------------------------------------------------------
// Labels and features
// ---------------------------------------------------------------------------

int LabelPatch::popcount() const {
  int n = 0;
  for (auto b : bits) n += std::popcount(b);
  return n;
}

int LabelPatch::hamming(const LabelPatch& other) const {
  int n = 0;
  for (std::size_t i = 0; i < bits.size(); ++i) n += std::popcount(bits[i] ^ other.bits[i]);
  return n;
}

namespace {

// Cell boundaries of the 5x5 partition of the 16x16 channel window.
constexpr int kCellEdge[kCellGrid + 1] = {0, 3, 6, 10, 13, 16};

struct PairTable {
  std::array<std::pair<std::uint8_t, std::uint8_t>, kSsimPairCount> pairs;
  PairTable() {
    int p = 0;
    for (int i = 0; i < kCellCount; ++i)
      for (int j = i + 1; j < kCellCount; ++j) pairs[static_cast<std::size_t>(p++)] = {
          static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(j)};
  }
};
const PairTable kPairs;

}  // namespace

std::array<float, 13 * kCellCount> compute_cell_means(const ChannelStack& stack, int cx,
                                                      int cy) {
  std::array<float, 13 * kCellCount> means{};
  for (int c = 0; c < kFeatureChannelCount; ++c) {
    const PlaneF& plane = stack.channels[static_cast<std::size_t>(c)];
    for (int gy = 0; gy < kCellGrid; ++gy)
      for (int gx = 0; gx < kCellGrid; ++gx) {
        float acc = 0;
        int n = 0;
        for (int r = kCellEdge[gy]; r < kCellEdge[gy + 1]; ++r)
          for (int col = kCellEdge[gx]; col < kCellEdge[gx + 1]; ++col) {
            acc += plane(cy + r, cx + col);
            ++n;
          }
        means[static_cast<std::size_t>(c * kCellCount + gy * kCellGrid + gx)] =
            acc / static_cast<float>(n);
      }
  }
  return means;
}

float sample_feature(const Sample& s, int f) {
  if (f < kRegFeatureCount) {
    int c = f / (kChannelPatch * kChannelPatch);
    int rem = f % (kChannelPatch * kChannelPatch);
    return s.stack->channels[static_cast<std::size_t>(c)](s.cy + rem / kChannelPatch,
                                                          s.cx + rem % kChannelPatch);
  }
  int g = f - kRegFeatureCount;
  int c = g / kSsimPairCount;
  auto [i, j] = kPairs.pairs[static_cast<std::size_t>(g % kSsimPairCount)];
  return s.cell_means[static_cast<std::size_t>(c * kCellCount + i)] -
         s.cell_means[static_cast<std::size_t>(c * kCellCount + j)];
}

// ---------------------------------------------------------------------------
// Sample extraction
// ---------------------------------------------------------------------------

namespace {

LabelPatch label_window(const EdgeMap& supervision, int px, int py, float threshold) {
  LabelPatch label;
  for (int r = 0; r < kLabelSize; ++r)
    for (int c = 0; c < kLabelSize; ++c)
      label.set(r, c,
                supervision.strength(py - kLabelSize / 2 + r, px - kLabelSize / 2 + c) >=
                    threshold);
  return label;
}

int label_component_count(const LabelPatch& label) {
  PlaneB patch(kLabelSize, kLabelSize);
  for (int r = 0; r < kLabelSize; ++r)
    for (int c = 0; c < kLabelSize; ++c) patch(r, c) = label.get(r, c) ? 1 : 0;
  return connected_components(patch).second;
}

}  // namespace

std::vector<Sample> extract_samples(const Image& img, const EdgeMap& supervision,
                                    const PlaneB* exclusion, const SampleParams& params,
                                    Rng& rng) {
  require_valid(img, "extract_samples");
  if (img.channels() != 3) throw InvalidInput("extract_samples: 3-channel image required");
  if (!supervision.thinned) throw InvalidInput("extract_samples: supervision must be thinned");
  if (supervision.width() != img.width() || supervision.height() != img.height())
    throw InvalidInput("extract_samples: supervision dimensions differ");

  const int w = img.width(), h = img.height();
  const int half = kPatchSize / 2;
  auto stack = std::make_shared<const ChannelStack>(feature_channels(img, kChannelShrink));

  auto window_fits = [&](int x, int y) {
    return x - half >= 0 && y - half >= 0 && x + half <= w && y + half <= h;
  };
  // patch origins live on the channel grid, so snap centers to even coords
  auto snap = [](int v) { return v & ~1; };

  std::vector<Sample> out;

  // positives
  std::vector<std::pair<int, int>> pos_candidates;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (supervision.strength(y, x) >= params.pos_threshold) pos_candidates.push_back({x, y});

  if (!pos_candidates.empty() && params.n_pos > 0) {
    auto order = rng.sample_without_replacement(
        static_cast<std::uint32_t>(pos_candidates.size()),
        static_cast<std::uint32_t>(pos_candidates.size()));
    std::vector<std::uint8_t> used(static_cast<std::size_t>(w) * h, 0);
    int taken = 0;
    for (std::uint32_t oi : order) {
      if (taken >= params.n_pos) break;
      auto [x0, y0] = pos_candidates[oi];
      int x = snap(x0), y = snap(y0);
      if (!window_fits(x, y)) continue;
      std::size_t slot = static_cast<std::size_t>(y) * w + x;
      if (used[slot]) continue;
      used[slot] = 1;
      LabelPatch label = label_window(supervision, x, y, params.pos_threshold);
      int comps = label_component_count(label);
      if (comps < 2) continue;  // edge fragment does not span the patch
      Sample s;
      s.stack = stack;
      s.cx = (x - half) / kChannelShrink;
      s.cy = (y - half) / kChannelShrink;
      s.cell_means = compute_cell_means(*stack, s.cx, s.cy);
      s.label = label;
      s.negative = false;
      out.push_back(std::move(s));
      ++taken;
    }
  }

  // negatives: uniform over the exclusion-free region
  PlaneB forbidden;
  if (exclusion) {
    forbidden = *exclusion;
  } else {
    PlaneB support(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        support(y, x) = supervision.strength(y, x) >= params.neg_threshold ? 1 : 0;
    forbidden = dilate_disk(support, params.exclusion_radius);
  }

  std::vector<std::pair<int, int>> neg_candidates;
  for (int y = 0; y < h; y += 2)
    for (int x = 0; x < w; x += 2)
      if (!forbidden(y, x) && window_fits(x, y)) neg_candidates.push_back({x, y});
  if (!neg_candidates.empty() && params.n_neg > 0) {
    auto picks = rng.sample_without_replacement(
        static_cast<std::uint32_t>(neg_candidates.size()),
        static_cast<std::uint32_t>(std::min<std::size_t>(neg_candidates.size(),
                                                         static_cast<std::size_t>(params.n_neg))));
    for (std::uint32_t pi : picks) {
      auto [x, y] = neg_candidates[pi];
      Sample s;
      s.stack = stack;
      s.cx = (x - half) / kChannelShrink;
      s.cy = (y - half) / kChannelShrink;
      s.cell_means = compute_cell_means(*stack, s.cx, s.cy);
      s.negative = true;
      out.push_back(std::move(s));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

// Converts an edge patch to a full segmentation: components of the non-edge
// pixels, then edge pixels absorbed by BFS from the component fronts.
void patch_segmentation(const LabelPatch& edge, std::array<std::uint8_t, 256>& seg,
                        std::uint8_t& n_segs) {
  PlaneB patch(kLabelSize, kLabelSize);
  for (int r = 0; r < kLabelSize; ++r)
    for (int c = 0; c < kLabelSize; ++c) patch(r, c) = edge.get(r, c) ? 1 : 0;
  auto [labels, k] = connected_components(patch);
  if (k == 0) {  // degenerate all-edge patch
    seg.fill(1);
    n_segs = 1;
    return;
  }
  std::deque<std::pair<int, int>> queue;
  for (int r = 0; r < kLabelSize; ++r)
    for (int c = 0; c < kLabelSize; ++c) {
      seg[static_cast<std::size_t>(r * kLabelSize + c)] =
          static_cast<std::uint8_t>(labels(r, c));
      if (labels(r, c) != 0) queue.push_back({r, c});
    }
  while (!queue.empty()) {
    auto [r, c] = queue.front();
    queue.pop_front();
    const int nr[4] = {r - 1, r + 1, r, r};
    const int nc[4] = {c, c, c - 1, c + 1};
    for (int e = 0; e < 4; ++e) {
      if (nr[e] < 0 || nr[e] >= kLabelSize || nc[e] < 0 || nc[e] >= kLabelSize) continue;
      std::uint8_t& dst = seg[static_cast<std::size_t>(nr[e] * kLabelSize + nc[e])];
      if (dst != 0) continue;
      dst = seg[static_cast<std::size_t>(r * kLabelSize + c)];
      queue.push_back({nr[e], nc[e]});
    }
  }
  n_segs = static_cast<std::uint8_t>(k);
}

struct TreeBuilder {
  const std::vector<Sample>& samples;
  const TrainParams& params;
  Tree tree;
  Rng rng;

  TreeBuilder(const std::vector<Sample>& s, const TrainParams& p, Rng r)
      : samples(s), params(p), rng(r) {}

  // Binary pseudo-labels for the node: sampled label pixel-pair difference
  // indicators reduced by the sign of the first principal direction.
  std::vector<std::uint8_t> pseudo_labels(const std::vector<std::uint32_t>& idx) {
    const int n = static_cast<int>(idx.size());
    const int m = params.n_pair_probe;
    Eigen::MatrixXf z(n, m);
    for (int p = 0; p < m; ++p) {
      int a = static_cast<int>(rng.index(kLabelSize * kLabelSize));
      int b = static_cast<int>(
          (a + 1 + rng.index(kLabelSize * kLabelSize - 1)) % (kLabelSize * kLabelSize));
      for (int s = 0; s < n; ++s) {
        const LabelPatch& lab = samples[idx[static_cast<std::size_t>(s)]].label;
        bool va = lab.get(a / kLabelSize, a % kLabelSize);
        bool vb = lab.get(b / kLabelSize, b % kLabelSize);
        z(s, p) = va != vb ? 1.0f : 0.0f;
      }
    }
    Eigen::RowVectorXf mean = z.colwise().mean();
    z.rowwise() -= mean;
    if (z.squaredNorm() < 1e-12f) return {};

    Eigen::VectorXf v = Eigen::VectorXf::Ones(m) / std::sqrt(static_cast<float>(m));
    for (int it = 0; it < 8; ++it) {
      Eigen::VectorXf next = z.transpose() * (z * v);
      float norm = next.norm();
      if (norm < 1e-20f) return {};
      v = next / norm;
    }
    Eigen::VectorXf proj = z * v;
    std::vector<std::uint8_t> cls(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) cls[static_cast<std::size_t>(s)] = proj(s) >= 0 ? 1 : 0;
    return cls;
  }

  std::int32_t make_leaf(const std::vector<std::uint32_t>& idx) {
    // medoid label over (a capped, evenly strided subset of) the node
    std::vector<std::uint32_t> cand;
    std::size_t stride = std::max<std::size_t>(1, idx.size() / 256);
    for (std::size_t i = 0; i < idx.size(); i += stride) cand.push_back(idx[i]);
    long best_cost = -1;
    std::uint32_t best = cand[0];
    for (std::uint32_t a : cand) {
      long cost = 0;
      for (std::uint32_t b : cand)
        cost += samples[a].label.hamming(samples[b].label);
      if (best_cost < 0 || cost < best_cost) {
        best_cost = cost;
        best = a;
      }
    }
    TreeLeaf leaf;
    leaf.edge = samples[best].label;
    patch_segmentation(leaf.edge, leaf.seg, leaf.n_segs);
    tree.leaves.push_back(leaf);

    TreeNode node;
    node.leaf = static_cast<std::int32_t>(tree.leaves.size() - 1);
    tree.nodes.push_back(node);
    return static_cast<std::int32_t>(tree.nodes.size() - 1);
  }

  std::int32_t build(const std::vector<std::uint32_t>& idx, int depth) {
    const int n = static_cast<int>(idx.size());
    bool uniform = true;
    for (int s = 1; s < n && uniform; ++s)
      uniform = samples[idx[static_cast<std::size_t>(s)]].label ==
                samples[idx[0]].label;
    if (depth >= params.max_depth || n < 2 * params.min_leaf || uniform)
      return make_leaf(idx);

    std::vector<std::uint8_t> cls = pseudo_labels(idx);
    if (cls.empty()) return make_leaf(idx);
    long n1 = 0;
    for (auto c : cls) n1 += c;
    if (n1 == 0 || n1 == n) return make_leaf(idx);

    auto gini = [](long c0, long c1) {
      double tot = static_cast<double>(c0 + c1);
      if (tot <= 0) return 0.0;
      double p0 = c0 / tot, p1 = c1 / tot;
      return 1.0 - p0 * p0 - p1 * p1;
    };
    const double parent_gini = gini(n - n1, n1);

    auto probe = rng.sample_without_replacement(
        kFeatureCount, static_cast<std::uint32_t>(params.n_feature_probe));

    double best_gain = 0;
    std::int32_t best_feature = -1;
    float best_threshold = 0;
    std::vector<float> values(static_cast<std::size_t>(n));
    std::vector<float> quant;
    for (std::uint32_t f : probe) {
      for (int s = 0; s < n; ++s)
        values[static_cast<std::size_t>(s)] =
            sample_feature(samples[idx[static_cast<std::size_t>(s)]], static_cast<int>(f));

      quant.clear();
      std::size_t qstride = std::max<std::size_t>(1, values.size() / 256);
      for (std::size_t i = 0; i < values.size(); i += qstride) quant.push_back(values[i]);
      std::sort(quant.begin(), quant.end());
      float prev_thr = std::numeric_limits<float>::quiet_NaN();
      for (int t = 0; t < params.n_threshold_probe; ++t) {
        std::size_t pos = static_cast<std::size_t>(
            (t + 1) * (static_cast<long long>(quant.size())) / (params.n_threshold_probe + 1));
        float thr = quant[std::min(pos, quant.size() - 1)];
        if (thr == prev_thr) continue;
        prev_thr = thr;
        long l0 = 0, l1 = 0, r0 = 0, r1 = 0;
        for (int s = 0; s < n; ++s) {
          bool left = values[static_cast<std::size_t>(s)] < thr;
          bool one = cls[static_cast<std::size_t>(s)];
          if (left)
            (one ? l1 : l0) += 1;
          else
            (one ? r1 : r0) += 1;
        }
        long nl = l0 + l1, nr = r0 + r1;
        if (nl < params.min_leaf || nr < params.min_leaf) continue;
        double gain = parent_gini -
                      (nl * gini(l0, l1) + nr * gini(r0, r1)) / static_cast<double>(n);
        if (gain > best_gain + 1e-12) {
          best_gain = gain;
          best_feature = static_cast<std::int32_t>(f);
          best_threshold = thr;
        }
      }
    }
    if (best_feature < 0) return make_leaf(idx);

    std::vector<std::uint32_t> left_idx, right_idx;
    for (std::uint32_t s : idx) {
      Sample const& smp = samples[s];
      if (sample_feature(smp, best_feature) < best_threshold)
        left_idx.push_back(s);
      else
        right_idx.push_back(s);
    }

    TreeNode node;
    node.feature = best_feature;
    node.threshold = best_threshold;
    tree.nodes.push_back(node);
    std::int32_t self = static_cast<std::int32_t>(tree.nodes.size() - 1);
    std::int32_t left = build(left_idx, depth + 1);
    std::int32_t right = build(right_idx, depth + 1);
    tree.nodes[static_cast<std::size_t>(self)].left = left;
    tree.nodes[static_cast<std::size_t>(self)].right = right;
    return self;
  }
};

}  // namespace

StructuredForest train_forest(const std::vector<Sample>& samples, const TrainParams& params) {
  if (params.n_trees < 1) throw InvalidInput("train_forest: n_trees must be >= 1");
  if (params.max_depth < 1) throw InvalidInput("train_forest: max_depth must be >= 1");
  if (!(params.frac_per_tree > 0 && params.frac_per_tree <= 1))
    throw InvalidInput("train_forest: frac_per_tree must be in (0,1]");

  std::vector<std::uint32_t> pos, neg;
  for (std::uint32_t i = 0; i < samples.size(); ++i)
    (samples[i].negative ? neg : pos).push_back(i);
  if (pos.empty() || neg.empty())
    throw TrainingError("train_forest: both positive and negative samples required");

  StructuredForest forest;
  forest.max_depth = static_cast<std::uint32_t>(params.max_depth);
  forest.train_seed = params.seed;
  forest.trees.resize(static_cast<std::size_t>(params.n_trees));

  Rng root(params.seed);
  parallel_for(0, params.n_trees, params.jobs, [&](int t) {
    Rng tree_rng = root.child(static_cast<std::uint64_t>(t));

    // stratified per-tree subset (equal positives and negatives)
    std::size_t n_sub = std::max<std::size_t>(
        2, static_cast<std::size_t>(std::llround(params.frac_per_tree *
                                                 static_cast<double>(samples.size()))));
    std::uint32_t n_half = static_cast<std::uint32_t>(n_sub / 2);
    auto pick = [&](const std::vector<std::uint32_t>& from, std::uint32_t want,
                    std::vector<std::uint32_t>& into) {
      auto sel = tree_rng.sample_without_replacement(
          static_cast<std::uint32_t>(from.size()), want);
      for (auto i : sel) into.push_back(from[i]);
    };
    std::vector<std::uint32_t> subset;
    pick(pos, n_half, subset);
    pick(neg, n_half, subset);

    TreeBuilder builder(samples, params, tree_rng.child(0x5eedULL));
    builder.build(subset, 0);
    forest.trees[static_cast<std::size_t>(t)] = std::move(builder.tree);
  });
  return forest;
}

// ---------------------------------------------------------------------------
// Detection
// ---------------------------------------------------------------------------

EdgeDetector EdgeDetector::gradient() { return EdgeDetector(); }

EdgeDetector EdgeDetector::forest(StructuredForest model) {
  EdgeDetector d;
  d.model_ = std::move(model);
  return d;
}

namespace {

// Routes one patch through one tree using lazily evaluated features.
struct PatchContext {
  const ChannelStack& stack;
  int cx, cy;
  bool has_means = false;
  std::array<float, 13 * kCellCount> means{};

  float feature(int f) {
    if (f < kRegFeatureCount) {
      int c = f / (kChannelPatch * kChannelPatch);
      int rem = f % (kChannelPatch * kChannelPatch);
      return stack.channels[static_cast<std::size_t>(c)](cy + rem / kChannelPatch,
                                                         cx + rem % kChannelPatch);
    }
    if (!has_means) {
      means = compute_cell_means(stack, cx, cy);
      has_means = true;
    }
    int g = f - kRegFeatureCount;
    int c = g / kSsimPairCount;
    auto [i, j] = kPairs.pairs[static_cast<std::size_t>(g % kSsimPairCount)];
    return means[static_cast<std::size_t>(c * kCellCount + i)] -
           means[static_cast<std::size_t>(c * kCellCount + j)];
  }
};

const TreeLeaf& route(const Tree& tree, PatchContext& ctx) {
  std::int32_t node = 0;
  for (;;) {
    const TreeNode& n = tree.nodes[static_cast<std::size_t>(node)];
    if (n.leaf >= 0) return tree.leaves[static_cast<std::size_t>(n.leaf)];
    node = ctx.feature(n.feature) < n.threshold ? n.left : n.right;
  }
}

// Re-fits the leaf segmentation to the local image colors and re-derives the
// edge mask from the refined segment boundaries.
void sharpen_leaf(const TreeLeaf& leaf, const Image& padded, int full_x, int full_y,
                  int sharpen, std::array<std::uint8_t, 256>& seg_out,
                  bool (&edge_out)[kLabelSize][kLabelSize]) {
  seg_out = leaf.seg;
  const int k = leaf.n_segs;
  if (k > 1 && sharpen > 0) {
    float colors[3][kLabelSize][kLabelSize];
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < kLabelSize; ++r)
        for (int col = 0; col < kLabelSize; ++col)
          colors[c][r][col] = padded.planes[static_cast<std::size_t>(c)](full_y + r, full_x + col);

    for (int it = 0; it < sharpen; ++it) {
      double mean[3];
      std::vector<double> sums(static_cast<std::size_t>(k + 1) * 3, 0.0);
      std::vector<int> counts(static_cast<std::size_t>(k + 1), 0);
      for (int r = 0; r < kLabelSize; ++r)
        for (int col = 0; col < kLabelSize; ++col) {
          int s = seg_out[static_cast<std::size_t>(r * kLabelSize + col)];
          counts[static_cast<std::size_t>(s)] += 1;
          for (int c = 0; c < 3; ++c)
            sums[static_cast<std::size_t>(s) * 3 + c] += colors[c][r][col];
        }
      auto seg_at = [&](int r, int col) {
        return seg_out[static_cast<std::size_t>(r * kLabelSize + col)];
      };
      for (int r = 0; r < kLabelSize; ++r)
        for (int col = 0; col < kLabelSize; ++col) {
          int cur = seg_at(r, col);
          int cand[5];
          int n_cand = 0;
          cand[n_cand++] = cur;
          const int nr[4] = {r - 1, r + 1, r, r};
          const int nc[4] = {col, col, col - 1, col + 1};
          bool boundary = false;
          for (int e = 0; e < 4; ++e) {
            if (nr[e] < 0 || nr[e] >= kLabelSize || nc[e] < 0 || nc[e] >= kLabelSize) continue;
            int s = seg_at(nr[e], nc[e]);
            if (s == cur) continue;
            boundary = true;
            bool seen = false;
            for (int q = 0; q < n_cand; ++q) seen = seen || cand[q] == s;
            if (!seen) cand[n_cand++] = s;
          }
          if (!boundary) continue;
          double best_d = std::numeric_limits<double>::max();
          int best_s = cur;
          for (int q = 0; q < n_cand; ++q) {
            int s = cand[q];
            if (counts[static_cast<std::size_t>(s)] == 0) continue;
            double d = 0;
            for (int c = 0; c < 3; ++c) {
              mean[c] = sums[static_cast<std::size_t>(s) * 3 + c] /
                        counts[static_cast<std::size_t>(s)];
              double diff = colors[c][r][col] - mean[c];
              d += diff * diff;
            }
            if (d < best_d - 1e-12 || (std::abs(d - best_d) <= 1e-12 && s < best_s)) {
              best_d = d;
              best_s = s;
            }
          }
          seg_out[static_cast<std::size_t>(r * kLabelSize + col)] =
              static_cast<std::uint8_t>(best_s);
        }
    }
  }
  for (int r = 0; r < kLabelSize; ++r)
    for (int col = 0; col < kLabelSize; ++col) {
      int cur = seg_out[static_cast<std::size_t>(r * kLabelSize + col)];
      bool e = (col + 1 < kLabelSize &&
                seg_out[static_cast<std::size_t>(r * kLabelSize + col + 1)] != cur) ||
               (r + 1 < kLabelSize &&
                seg_out[static_cast<std::size_t>((r + 1) * kLabelSize + col)] != cur);
      edge_out[r][col] = e;
    }
}

int round_up_even(double v) {
  int i = std::max(2, static_cast<int>(std::lround(v)));
  return i + (i & 1);
}

}  // namespace

EdgeMap EdgeDetector::detect(const Image& img, const DetectOpts& opts) const {
  require_valid(img, "detect");
  if (is_gradient()) return gradient_magnitude(img);

  const StructuredForest& model = *model_;
  if (model.recipe_version != kFeatureRecipeVersion)
    throw InvalidInput("detect: model feature recipe version mismatch");
  if (model.trees.empty()) throw InvalidInput("detect: empty forest");
  if (img.width() < kPatchSize || img.height() < kPatchSize)
    throw InvalidInput("detect: image smaller than the model patch size");
  if (opts.scales.empty()) throw InvalidInput("detect: no scales");
  if (opts.stride < 1 || (opts.stride & 1))
    throw InvalidInput("detect: stride must be a positive even number");

  const int w = img.width(), h = img.height();
  const int pad = kLabelSize;
  PlaneF total = PlaneF::Zero(h, w);

  for (double scale : opts.scales) {
    const int sw = std::max(kPatchSize, round_up_even(w * scale));
    const int sh = std::max(kPatchSize, round_up_even(h * scale));
    Image scaled = (sw == w && sh == h) ? img : resize_image(img, sw, sh);
    Image padded = pad_reflect(scaled, pad);
    ChannelStack stack = feature_channels(padded, kChannelShrink);

    const int cw = stack.width(), ch = stack.height();
    const int grid_step = std::max(1, opts.stride / kChannelShrink);
    const int max_cgx = cw - kChannelPatch;
    const int max_cgy = ch - kChannelPatch;
    std::vector<int> origin_rows;
    for (int cgy = 0; cgy <= max_cgy; cgy += grid_step) origin_rows.push_back(cgy);

    // Votes are integer-valued, so merging per-band buffers is exact and the
    // result is independent of the job count.
    const int n_bands = std::min<int>(resolve_jobs(opts.jobs), static_cast<int>(origin_rows.size()));
    std::vector<PlaneF> votes(static_cast<std::size_t>(n_bands)),
        counts(static_cast<std::size_t>(n_bands));
    for (int b = 0; b < n_bands; ++b) {
      votes[static_cast<std::size_t>(b)] = PlaneF::Zero(sh + 2 * pad, sw + 2 * pad);
      counts[static_cast<std::size_t>(b)] = PlaneF::Zero(sh + 2 * pad, sw + 2 * pad);
    }

    parallel_for(0, n_bands, n_bands, [&](int band) {
      PlaneF& v = votes[static_cast<std::size_t>(band)];
      PlaneF& cnt = counts[static_cast<std::size_t>(band)];
      std::array<std::uint8_t, 256> seg;
      bool edge[kLabelSize][kLabelSize];
      for (std::size_t ri = static_cast<std::size_t>(band); ri < origin_rows.size();
           ri += static_cast<std::size_t>(n_bands)) {
        const int cgy = origin_rows[ri];
        for (int cgx = 0; cgx <= max_cgx; cgx += grid_step) {
          PatchContext ctx{stack, cgx, cgy};
          // label window at full (padded) resolution
          const int fx = cgx * kChannelShrink + (kPatchSize - kLabelSize) / 2;
          const int fy = cgy * kChannelShrink + (kPatchSize - kLabelSize) / 2;
          for (const Tree& tree : model.trees) {
            const TreeLeaf& leaf = route(tree, ctx);
            if (opts.sharpen > 0) {
              sharpen_leaf(leaf, padded, fx, fy, opts.sharpen, seg, edge);
              for (int r = 0; r < kLabelSize; ++r)
                for (int c = 0; c < kLabelSize; ++c) {
                  if (edge[r][c]) v(fy + r, fx + c) += 1.0f;
                  cnt(fy + r, fx + c) += 1.0f;
                }
            } else {
              for (int r = 0; r < kLabelSize; ++r)
                for (int c = 0; c < kLabelSize; ++c) {
                  if (leaf.edge.get(r, c)) v(fy + r, fx + c) += 1.0f;
                  cnt(fy + r, fx + c) += 1.0f;
                }
            }
          }
        }
      }
    });

    for (int b = 1; b < n_bands; ++b) {
      votes[0] += votes[static_cast<std::size_t>(b)];
      counts[0] += counts[static_cast<std::size_t>(b)];
    }
    PlaneF scaled_out(sh, sw);
    for (int y = 0; y < sh; ++y)
      for (int x = 0; x < sw; ++x) {
        float c = counts[0](y + pad, x + pad);
        scaled_out(y, x) = c > 0 ? votes[0](y + pad, x + pad) / c : 0.0f;
      }
    PlaneF back = (sw == w && sh == h)
                      ? scaled_out
                      : (scale < 1.0 ? resize_bilinear(scaled_out, w, h)
                                     : resize_area(scaled_out, w, h));
    total += back;
  }
  total /= static_cast<float>(opts.scales.size());
  total = total.cwiseMax(0.0f).cwiseMin(1.0f);
  return EdgeMap(std::move(total));
}

EdgeMap detect(const EdgeDetector& det, const Image& img, const DetectOpts& opts) {
  return det.detect(img, opts);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

std::uint32_t crc32(const std::uint8_t* data, std::size_t n) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

namespace {

struct Writer {
  std::vector<std::uint8_t> buf;

  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  void u8(std::uint8_t v) { buf.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
};

struct Reader {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;
  const std::string& path;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw FormatError("truncated model file: " + path);
  }
  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
  std::uint8_t u8() {
    need(1);
    return buf[pos++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(buf[pos++]) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos++]) << (8 * i);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

}  // namespace

void save_model(const StructuredForest& f, const std::string& path) {
  Writer w;
  w.bytes("SEDG", 4);
  w.u16(kModelFormatVersion);
  w.u16(f.recipe_version);
  w.u32(kPatchSize);
  w.u32(kLabelSize);
  w.u32(kChannelShrink);
  w.u32(static_cast<std::uint32_t>(f.trees.size()));
  w.u32(f.max_depth);
  w.u64(f.train_seed);
  w.u32(kFeatureCount);
  for (const Tree& tree : f.trees) {
    w.u32(static_cast<std::uint32_t>(tree.nodes.size()));
    w.u32(static_cast<std::uint32_t>(tree.leaves.size()));
    for (const TreeNode& n : tree.nodes) {
      w.i32(n.feature);
      w.f32(n.threshold);
      w.i32(n.left);
      w.i32(n.right);
      w.i32(n.leaf);
    }
    for (const TreeLeaf& leaf : tree.leaves) {
      for (auto b : leaf.edge.bits) w.u64(b);
      w.bytes(leaf.seg.data(), leaf.seg.size());
      w.u8(leaf.n_segs);
    }
  }
  w.u32(crc32(w.buf.data(), w.buf.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open file: " + path);
  out.write(reinterpret_cast<const char*>(w.buf.data()),
            static_cast<std::streamsize>(w.buf.size()));
  if (!out) throw FormatError("write failed: " + path);
}

StructuredForest load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open file: " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (buf.size() < 8) throw FormatError("truncated model file: " + path);

  std::uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i)
    stored_crc |= static_cast<std::uint32_t>(buf[buf.size() - 4 + static_cast<std::size_t>(i)])
                  << (8 * i);
  if (crc32(buf.data(), buf.size() - 4) != stored_crc)
    throw FormatError("model checksum mismatch (corrupt file): " + path);
  buf.resize(buf.size() - 4);

  Reader r{buf, 0, path};
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "SEDG", 4) != 0) throw FormatError("bad model magic: " + path);
  std::uint16_t format = r.u16();
  if (format != kModelFormatVersion)
    throw FormatError("unsupported model format version " + std::to_string(format) + ": " + path);
  StructuredForest f;
  f.recipe_version = r.u16();
  if (f.recipe_version != kFeatureRecipeVersion)
    throw FormatError("feature recipe version mismatch (model v" +
                      std::to_string(f.recipe_version) + ", extractor v" +
                      std::to_string(kFeatureRecipeVersion) + "): " + path);
  if (r.u32() != kPatchSize || r.u32() != kLabelSize || r.u32() != kChannelShrink)
    throw FormatError("model geometry mismatch: " + path);
  std::uint32_t n_trees = r.u32();
  f.max_depth = r.u32();
  f.train_seed = r.u64();
  if (r.u32() != kFeatureCount) throw FormatError("model feature count mismatch: " + path);
  if (n_trees == 0 || n_trees > 1024) throw FormatError("bad tree count: " + path);

  f.trees.resize(n_trees);
  for (Tree& tree : f.trees) {
    std::uint32_t n_nodes = r.u32();
    std::uint32_t n_leaves = r.u32();
    tree.nodes.resize(n_nodes);
    tree.leaves.resize(n_leaves);
    for (TreeNode& n : tree.nodes) {
      n.feature = r.i32();
      n.threshold = r.f32();
      n.left = r.i32();
      n.right = r.i32();
      n.leaf = r.i32();
      if (n.leaf < 0) {
        if (n.feature < 0 || n.feature >= kFeatureCount ||
            n.left < 0 || n.left >= static_cast<std::int32_t>(n_nodes) ||
            n.right < 0 || n.right >= static_cast<std::int32_t>(n_nodes))
          throw FormatError("malformed tree node: " + path);
      } else if (n.leaf >= static_cast<std::int32_t>(n_leaves)) {
        throw FormatError("malformed tree leaf reference: " + path);
      }
    }
    for (TreeLeaf& leaf : tree.leaves) {
      for (auto& b : leaf.edge.bits) b = r.u64();
      r.bytes(leaf.seg.data(), leaf.seg.size());
      leaf.n_segs = r.u8();
    }
  }
  if (r.pos != buf.size()) throw FormatError("trailing bytes in model file: " + path);
  return f;
}

}  // namespace vedge
