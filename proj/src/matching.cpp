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

#include "vedge/matching.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "vedge/imgproc.hpp"

namespace vedge {

namespace {

PlaneF to_gray(const Image& img) {
  if (img.channels() == 1) return img.planes[0];
  return ((img.planes[0] + img.planes[1] + img.planes[2]) / 3.0f).eval();
}

struct Pyramid {
  std::vector<PlaneF> levels;  // levels[0] = full resolution
};

Pyramid build_pyramid(const PlaneF& base, int levels, int min_dim) {
  Pyramid p;
  p.levels.push_back(base);
  for (int l = 1; l < levels; ++l) {
    const PlaneF& prev = p.levels.back();
    int w = static_cast<int>(prev.cols()) / 2;
    int h = static_cast<int>(prev.rows()) / 2;
    if (w < min_dim || h < min_dim) break;
    p.levels.push_back(resize_area(prev, w, h));
  }
  return p;
}

// NCC between the patch around (ax,ay) in a and (bx,by) in b. Windows must
// fit entirely inside both images; returns nullopt otherwise or when either
// patch is flat.
std::optional<float> ncc(const PlaneF& a, const PlaneF& b, int ax, int ay, int bx, int by,
                         int r) {
  const int aw = static_cast<int>(a.cols()), ah = static_cast<int>(a.rows());
  const int bw = static_cast<int>(b.cols()), bh = static_cast<int>(b.rows());
  if (ax - r < 0 || ay - r < 0 || ax + r >= aw || ay + r >= ah) return std::nullopt;
  if (bx - r < 0 || by - r < 0 || bx + r >= bw || by + r >= bh) return std::nullopt;
  const int n = (2 * r + 1) * (2 * r + 1);
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      double va = a(ay + dy, ax + dx);
      double vb = b(by + dy, bx + dx);
      sa += va;
      sb += vb;
      saa += va * va;
      sbb += vb * vb;
      sab += va * vb;
    }
  double var_a = saa - sa * sa / n;
  double var_b = sbb - sb * sb / n;
  if (var_a < 1e-12 || var_b < 1e-12) return std::nullopt;
  double cov = sab - sa * sb / n;
  return static_cast<float>(cov / std::sqrt(var_a * var_b));
}

float patch_variance(const PlaneF& img, int x, int y, int r) {
  const int w = static_cast<int>(img.cols()), h = static_cast<int>(img.rows());
  double s = 0, ss = 0;
  int n = 0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      int xx = clamp(x + dx, 0, w - 1);
      int yy = clamp(y + dy, 0, h - 1);
      double v = img(yy, xx);
      s += v;
      ss += v * v;
      ++n;
    }
  return static_cast<float>(ss / n - (s / n) * (s / n));
}

// Pyramid NCC search for one source point. Coarse levels seed the
// displacement (with the evaluation window clamped inside the level);
// the finest level must produce a valid correlation or the point fails.
std::optional<std::pair<std::pair<int, int>, float>> search_point(
    const Pyramid& pa, const Pyramid& pb, int x, int y, const BlockMatchParams& p) {
  const int n_levels = static_cast<int>(pa.levels.size());
  const int r = p.patch_radius;
  int dx = 0, dy = 0;
  float final_score = -2.0f;
  bool coarse_searched = false;
  for (int l = n_levels - 1; l >= 0; --l) {
    if (l < n_levels - 1) {
      dx *= 2;
      dy *= 2;
    }
    const PlaneF& a = pa.levels[static_cast<std::size_t>(l)];
    const PlaneF& b = pb.levels[static_cast<std::size_t>(l)];
    const int w = static_cast<int>(a.cols()), h = static_cast<int>(a.rows());
    if (w < 2 * r + 1 || h < 2 * r + 1) continue;

    int lx = x >> l, ly = y >> l;
    if (l > 0) {  // coarse levels may evaluate at the nearest valid center
      lx = clamp(lx, r, w - 1 - r);
      ly = clamp(ly, r, h - 1 - r);
    } else if (lx < r || ly < r || lx >= w - r || ly >= h - r) {
      return std::nullopt;
    }
    const int radius = coarse_searched ? 2 : std::max(1, p.search_radius >> l);

    float best_score = -2.0f;
    bool found = false;
    int best_dx = dx, best_dy = dy;
    for (int sy = -radius; sy <= radius; ++sy)
      for (int sx = -radius; sx <= radius; ++sx) {
        auto score = ncc(a, b, lx, ly, lx + dx + sx, ly + dy + sy, r);
        if (!score) continue;
        // deterministic tie-break: first candidate in scan order wins
        if (!found || *score > best_score) {
          found = true;
          best_score = *score;
          best_dx = dx + sx;
          best_dy = dy + sy;
        }
      }
    if (l == 0) {
      if (!found) return std::nullopt;
      final_score = best_score;
    }
    if (found) {
      dx = best_dx;
      dy = best_dy;
      coarse_searched = true;
    }
  }
  return std::make_pair(std::make_pair(x + dx, y + dy), final_score);
}

}  // namespace

std::optional<Match> match_point(const Image& a, const Image& b, int x, int y,
                                 const BlockMatchParams& params) {
  require_valid(a, "match_point");
  require_valid(b, "match_point");
  PlaneF ga = to_gray(a), gb = to_gray(b);
  if (patch_variance(ga, x, y, params.patch_radius) < params.min_texture) return std::nullopt;
  Pyramid pa = build_pyramid(ga, params.levels, 2 * params.patch_radius + 1);
  Pyramid pb = build_pyramid(gb, params.levels, 2 * params.patch_radius + 1);
  auto hit = search_point(pa, pb, x, y, params);
  if (!hit) return std::nullopt;
  Match m;
  m.x1 = static_cast<float>(x);
  m.y1 = static_cast<float>(y);
  m.x2 = static_cast<float>(hit->first.first);
  m.y2 = static_cast<float>(hit->first.second);
  m.score = std::max(0.0f, hit->second);
  return m;
}

MatchSet block_match(const Image& a, const Image& b, const BlockMatchParams& params) {
  require_valid(a, "block_match");
  require_valid(b, "block_match");
  if (a.width() != b.width() || a.height() != b.height())
    throw InvalidInput("block_match: image dimensions differ");

  PlaneF ga = to_gray(a), gb = to_gray(b);
  const int min_dim = 2 * params.patch_radius + 1;
  Pyramid pa = build_pyramid(ga, params.levels, min_dim);
  Pyramid pb = build_pyramid(gb, params.levels, min_dim);

  MatchSet out;
  out.source_width = a.width();
  out.source_height = a.height();
  out.target_width = b.width();
  out.target_height = b.height();

  for (int y = params.grid_step / 2; y < a.height(); y += params.grid_step)
    for (int x = params.grid_step / 2; x < a.width(); x += params.grid_step) {
      if (patch_variance(ga, x, y, params.patch_radius) < params.min_texture) continue;
      auto fwd = search_point(pa, pb, x, y, params);
      if (!fwd) continue;
      auto [tx, ty] = fwd->first;
      auto bwd = search_point(pb, pa, tx, ty, params);
      if (!bwd) continue;
      float ex = static_cast<float>(bwd->first.first - x);
      float ey = static_cast<float>(bwd->first.second - y);
      if (std::sqrt(ex * ex + ey * ey) > params.fwd_bwd_tol) continue;
      Match m;
      m.x1 = static_cast<float>(x);
      m.y1 = static_cast<float>(y);
      m.x2 = static_cast<float>(tx);
      m.y2 = static_cast<float>(ty);
      m.score = std::max(0.0f, fwd->second);
      out.matches.push_back(m);
    }
  return out;
}

MatchSet read_matches(const std::string& path, int source_width, int source_height,
                      int target_width, int target_height) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open match file: " + path);
  MatchSet out;
  out.source_width = source_width;
  out.source_height = source_height;
  out.target_width = target_width;
  out.target_height = target_height;

  std::map<std::pair<long, long>, int> seen;  // duplicate source guard
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    Match m;
    if (!(ls >> m.x1)) continue;  // blank/comment line
    auto fail = [&](const std::string& why) -> ParseError {
      return ParseError(path + ":" + std::to_string(line_no) + ": " + why);
    };
    if (!(ls >> m.y1 >> m.x2 >> m.y2 >> m.score)) throw fail("expected 'x1 y1 x2 y2 score'");
    if (!(m.x1 >= 0 && m.x1 < source_width && m.y1 >= 0 && m.y1 < source_height))
      throw fail("source coordinate out of bounds");
    if (!(m.x2 >= 0 && m.x2 < target_width && m.y2 >= 0 && m.y2 < target_height))
      throw fail("target coordinate out of bounds");
    if (!(std::isfinite(m.score) && m.score >= 0)) throw fail("bad score");
    auto key = std::make_pair(std::lround(m.x1 * 16), std::lround(m.y1 * 16));
    auto [it, inserted] = seen.insert({key, line_no});
    if (!inserted)
      throw fail("duplicate source location (first seen at line " +
                 std::to_string(it->second) + ")");
    out.matches.push_back(m);
  }
  return out;
}

void write_matches(const MatchSet& ms, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open file: " + path);
  out << "# x1 y1 x2 y2 score\n";
  out.precision(9);
  for (const Match& m : ms.matches)
    out << m.x1 << " " << m.y1 << " " << m.x2 << " " << m.y2 << " " << m.score << "\n";
  if (!out) throw FormatError("write failed: " + path);
}

const char* to_string(RejectReason r) {
  switch (r) {
    case RejectReason::None: return "none";
    case RejectReason::Insufficient: return "insufficient";
    case RejectReason::Slow: return "slow";
    case RejectReason::Large: return "large";
    case RejectReason::Translational: return "translational";
  }
  return "unknown";
}

FilterDecision filter_frame_pair(const MatchSet& ms, const FrameFilterParams& params) {
  FilterDecision d;
  if (ms.size() < params.min_count) {
    d.reason = RejectReason::Insufficient;
    return d;
  }

  double mean = 0;
  float max_disp = 0;
  for (const Match& m : ms.matches) {
    float disp = m.displacement();
    mean += disp;
    max_disp = std::max(max_disp, disp);
  }
  mean /= static_cast<double>(ms.size());
  d.max_displacement = max_disp;
  d.mean_displacement = static_cast<float>(mean);

  if (max_disp < params.slow_max_displacement) {
    d.reason = RejectReason::Slow;
    return d;
  }
  if (mean > params.large_mean_displacement) {
    d.reason = RejectReason::Large;
    return d;
  }

  // Translation dominance: try the median displacement plus a capped set of
  // per-match candidates, count inliers within trans_tol.
  std::vector<std::pair<float, float>> candidates;
  {
    std::vector<float> xs, ys;
    xs.reserve(ms.size());
    ys.reserve(ms.size());
    for (const Match& m : ms.matches) {
      xs.push_back(m.dx());
      ys.push_back(m.dy());
    }
    auto median = [](std::vector<float> v) {
      std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
      return v[v.size() / 2];
    };
    candidates.emplace_back(median(xs), median(ys));
    std::size_t stride = std::max<std::size_t>(1, ms.size() / 256);
    for (std::size_t i = 0; i < ms.size(); i += stride)
      candidates.emplace_back(ms.matches[i].dx(), ms.matches[i].dy());
  }
  const float tol2 = params.trans_tol * params.trans_tol;
  std::size_t best_inliers = 0;
  for (auto [tx, ty] : candidates) {
    std::size_t inliers = 0;
    for (const Match& m : ms.matches) {
      float ex = m.dx() - tx, ey = m.dy() - ty;
      if (ex * ex + ey * ey <= tol2) ++inliers;
    }
    best_inliers = std::max(best_inliers, inliers);
  }
  d.translation_inlier_frac =
      static_cast<float>(best_inliers) / static_cast<float>(ms.size());
  if (d.translation_inlier_frac >= params.trans_frac) {
    d.reason = RejectReason::Translational;
    return d;
  }

  d.accepted = true;
  return d;
}

}  // namespace vedge
