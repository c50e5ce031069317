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

#include "vedge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "vedge/bipartite.hpp"
#include "vedge/imageio.hpp"
#include "vedge/imgproc.hpp"
#include "vedge/parallel.hpp"

namespace vedge {

namespace {

std::vector<std::pair<int, int>> disk_offsets(double tol) {
  const int r = static_cast<int>(std::floor(tol));
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (static_cast<double>(dx) * dx + static_cast<double>(dy) * dy <= tol * tol)
        offsets.emplace_back(dy, dx);
  return offsets;
}

struct GtIndex {
  PlaneI id;
  int count = 0;
};

GtIndex index_pixels(const PlaneB& map) {
  GtIndex gi;
  const int h = static_cast<int>(map.rows()), w = static_cast<int>(map.cols());
  gi.id = PlaneI::Constant(h, w, -1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (map(y, x)) gi.id(y, x) = gi.count++;
  return gi;
}

// Matched left count for pred pixels against one indexed gt map.
std::vector<std::int32_t> match_one(const std::vector<std::pair<int, int>>& pred_pos,
                                    const GtIndex& gt,
                                    const std::vector<std::pair<int, int>>& offsets) {
  const int h = static_cast<int>(gt.id.rows()), w = static_cast<int>(gt.id.cols());
  BipartiteGraph g;
  g.n_left = static_cast<int>(pred_pos.size());
  g.n_right = gt.count;
  g.adj.resize(pred_pos.size());
  for (std::size_t i = 0; i < pred_pos.size(); ++i) {
    auto [x, y] = pred_pos[i];
    for (auto [dy, dx] : offsets) {
      int yy = y + dy, xx = x + dx;
      if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
      int id = gt.id(yy, xx);
      if (id >= 0) g.adj[i].push_back(id);
    }
  }
  return hopcroft_karp(g);
}

}  // namespace

CorrespondCounts correspond(const PlaneB& pred, const PlaneB& gt, double tol) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    throw InvalidInput("correspond: dimensions differ");
  std::vector<std::pair<int, int>> pred_pos;
  for (int y = 0; y < pred.rows(); ++y)
    for (int x = 0; x < pred.cols(); ++x)
      if (pred(y, x)) pred_pos.emplace_back(x, y);
  GtIndex gi = index_pixels(gt);
  auto match = match_one(pred_pos, gi, disk_offsets(tol));
  CorrespondCounts c;
  for (auto m : match)
    if (m >= 0) ++c.tp;
  c.fp = static_cast<long>(pred_pos.size()) - c.tp;
  c.fn = gi.count - c.tp;
  return c;
}

MultiCounts correspond_multi(const PlaneB& pred, const std::vector<PlaneB>& gts, double tol) {
  if (gts.empty()) throw InvalidInput("correspond_multi: no ground-truth annotations");
  std::vector<std::pair<int, int>> pred_pos;
  for (int y = 0; y < pred.rows(); ++y)
    for (int x = 0; x < pred.cols(); ++x)
      if (pred(y, x)) pred_pos.emplace_back(x, y);
  auto offsets = disk_offsets(tol);

  MultiCounts mc;
  std::vector<std::uint8_t> pred_hit(pred_pos.size(), 0);
  for (const PlaneB& gt : gts) {
    if (gt.rows() != pred.rows() || gt.cols() != pred.cols())
      throw InvalidInput("correspond_multi: dimensions differ");
    GtIndex gi = index_pixels(gt);
    auto match = match_one(pred_pos, gi, offsets);
    long matched = 0;
    for (std::size_t i = 0; i < match.size(); ++i)
      if (match[i] >= 0) {
        pred_hit[i] = 1;
        ++matched;
      }
    mc.tp_gt += matched;
    mc.fn += gi.count - matched;
  }
  for (auto h : pred_hit) mc.tp += h;
  mc.fp = static_cast<long>(pred_pos.size()) - mc.tp;
  return mc;
}

std::vector<double> default_thresholds(int n) {
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = (i + 1) / static_cast<double>(n + 1);
  return t;
}

double diagonal_tolerance(int width, int height, double frac) {
  return frac * std::sqrt(static_cast<double>(width) * width +
                          static_cast<double>(height) * height);
}

PlaneB binarize(const PlaneF& strength, double threshold) {
  PlaneB out(strength.rows(), strength.cols());
  for (int y = 0; y < strength.rows(); ++y)
    for (int x = 0; x < strength.cols(); ++x)
      out(y, x) = strength(y, x) >= threshold ? 1 : 0;
  return out;
}

namespace {

std::vector<std::vector<MultiCounts>> per_image_counts(
    const std::vector<EdgeMap>& preds, const std::vector<std::vector<PlaneB>>& gts,
    const std::vector<double>& thresholds, double tol, int jobs) {
  if (preds.empty() || preds.size() != gts.size())
    throw InvalidInput("pr_curve: prediction/ground-truth counts differ or empty");
  std::vector<std::vector<MultiCounts>> counts(preds.size());
  parallel_for(0, static_cast<int>(preds.size()), jobs, [&](int i) {
    const EdgeMap& raw = preds[static_cast<std::size_t>(i)];
    EdgeMap thin = raw.thinned ? raw : nms(raw);
    auto& row = counts[static_cast<std::size_t>(i)];
    row.resize(thresholds.size());
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      PlaneB support = binarize(thin.strength, thresholds[t]);
      row[t] = correspond_multi(support, gts[static_cast<std::size_t>(i)], tol);
    }
  });
  return counts;
}

// Precision at a recall level, linearly interpolated along the curve;
// clamped to P(R_min) below the measured range, 0 above it.
double precision_at(const std::vector<std::pair<double, double>>& rp, double r) {
  if (rp.empty()) return 0;
  if (r <= rp.front().first) return rp.front().second;
  if (r > rp.back().first) return 0;
  for (std::size_t i = 1; i < rp.size(); ++i) {
    if (r <= rp[i].first) {
      double r0 = rp[i - 1].first, p0 = rp[i - 1].second;
      double r1 = rp[i].first, p1 = rp[i].second;
      if (r1 - r0 < 1e-12) return std::max(p0, p1);
      double a = (r - r0) / (r1 - r0);
      return p0 + a * (p1 - p0);
    }
  }
  return rp.back().second;
}

}  // namespace

std::vector<PRPoint> pr_curve(const std::vector<EdgeMap>& preds,
                              const std::vector<std::vector<PlaneB>>& gts,
                              const std::vector<double>& thresholds, double tol, int jobs) {
  auto counts = per_image_counts(preds, gts, thresholds, tol, jobs);
  std::vector<PRPoint> curve(thresholds.size());
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    curve[t].threshold = thresholds[t];
    for (const auto& row : counts) curve[t].counts += row[t];
  }
  return curve;
}

BenchmarkResult benchmark(const std::vector<EdgeMap>& preds,
                          const std::vector<std::vector<PlaneB>>& gts, double tol,
                          const std::vector<double>& thresholds, int jobs) {
  auto counts = per_image_counts(preds, gts, thresholds, tol, jobs);
  BenchmarkResult res;
  res.curve.resize(thresholds.size());
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    res.curve[t].threshold = thresholds[t];
    for (const auto& row : counts) res.curve[t].counts += row[t];
  }

  // ODS: best corpus F over thresholds
  std::size_t best_t = 0;
  for (std::size_t t = 1; t < res.curve.size(); ++t)
    if (res.curve[t].f_measure() > res.curve[best_t].f_measure()) best_t = t;
  res.ods = res.curve[best_t].f_measure();
  res.ods_threshold = thresholds[best_t];

  // OIS: per-image best threshold by per-image F, counts aggregated
  MultiCounts ois_counts;
  res.image_best_thresholds.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    std::size_t best = 0;
    double best_f = -1;
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      PRPoint p{thresholds[t], counts[i][t]};
      if (p.f_measure() > best_f) {
        best_f = p.f_measure();
        best = t;
      }
    }
    res.image_best_thresholds[i] = thresholds[best];
    ois_counts += counts[i][best];
  }
  res.ois = PRPoint{0, ois_counts}.f_measure();

  // recall-sorted precision curve for AP / P20
  std::vector<std::pair<double, double>> rp;
  for (const PRPoint& p : res.curve)
    if (p.counts.tp + p.counts.fp > 0)  // skip empty-prediction points
      rp.emplace_back(p.recall(), p.precision());
  std::sort(rp.begin(), rp.end());
  // collapse duplicate recalls to their best precision
  std::vector<std::pair<double, double>> dedup;
  for (auto& pr : rp) {
    if (!dedup.empty() && std::abs(dedup.back().first - pr.first) < 1e-12)
      dedup.back().second = std::max(dedup.back().second, pr.second);
    else
      dedup.push_back(pr);
  }
  double ap = 0;
  double prev_p = precision_at(dedup, 0.0);
  for (int k = 1; k <= 100; ++k) {
    double r = k / 100.0;
    double p = precision_at(dedup, r);
    ap += 0.5 * (prev_p + p) * 0.01;
    prev_p = p;
  }
  res.ap = ap;
  res.p20 = precision_at(dedup, 0.20);
  return res;
}

std::vector<PlaneB> load_annotations(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<PlaneB> maps;
  for (const auto& f : files) {
    EdgeMap em = read_edge_map_png(f.string());
    maps.push_back(binarize(em.strength, 0.5));
  }
  return maps;
}

std::string benchmark_to_json(const BenchmarkResult& r) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "{\n";
  out << "  \"ods\": " << r.ods << ",\n";
  out << "  \"ois\": " << r.ois << ",\n";
  out << "  \"ap\": " << r.ap << ",\n";
  out << "  \"p20\": " << r.p20 << ",\n";
  out << "  \"ods_threshold\": " << r.ods_threshold << ",\n";
  out << "  \"curve\": [";
  for (std::size_t t = 0; t < r.curve.size(); ++t) {
    const PRPoint& p = r.curve[t];
    out << (t ? ",\n    " : "\n    ");
    out << "{\"threshold\": " << p.threshold << ", \"tp\": " << p.counts.tp
        << ", \"fp\": " << p.counts.fp << ", \"tp_gt\": " << p.counts.tp_gt
        << ", \"fn\": " << p.counts.fn << ", \"precision\": " << p.precision()
        << ", \"recall\": " << p.recall() << "}";
  }
  out << "\n  ]\n}\n";
  return out.str();
}

}  // namespace vedge
