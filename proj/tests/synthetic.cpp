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

#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "vedge/imageio.hpp"

namespace fs = std::filesystem;

namespace vedge::test {

PlaneF noise_field(Rng& rng, int w, int h, int spacing, int octaves) {
  PlaneF out = PlaneF::Zero(h, w);
  float amp = 1.0f, amp_sum = 0.0f;
  int step = spacing;
  for (int o = 0; o < octaves; ++o) {
    int gw = w / step + 2, gh = h / step + 2;
    PlaneF grid(gh, gw);
    for (int y = 0; y < gh; ++y)
      for (int x = 0; x < gw; ++x) grid(y, x) = static_cast<float>(rng.uniform());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float fx = static_cast<float>(x) / step;
        float fy = static_cast<float>(y) / step;
        int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
        float ax = fx - x0, ay = fy - y0;
        float top = grid(y0, x0) * (1 - ax) + grid(y0, x0 + 1) * ax;
        float bot = grid(y0 + 1, x0) * (1 - ax) + grid(y0 + 1, x0 + 1) * ax;
        out(y, x) += amp * (top * (1 - ay) + bot * ay);
      }
    amp_sum += amp;
    amp *= 0.5f;
    step = std::max(2, step / 2);
  }
  out /= amp_sum;
  return out;
}

namespace {

struct Polygon {
  std::vector<std::pair<float, float>> verts;  // counter-clockwise
  float cx = 0, cy = 0;
  float dx = 0, dy = 0;      // per-frame translation
  float rotation = 0;        // per-frame rotation, radians
  float base[3] = {0, 0, 0};
  PlaneF tex[3];             // texture planes anchored to the frame-A pose
};

bool inside(const std::vector<std::pair<float, float>>& verts, float x, float y) {
  const std::size_t n = verts.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto [x0, y0] = verts[i];
    auto [x1, y1] = verts[(i + 1) % n];
    if ((x1 - x0) * (y - y0) - (y1 - y0) * (x - x0) < 0) return false;
  }
  return true;
}

float sample_bilinear(const PlaneF& p, float x, float y) {
  const int w = static_cast<int>(p.cols()), h = static_cast<int>(p.rows());
  x = std::clamp(x, 0.0f, static_cast<float>(w - 1));
  y = std::clamp(y, 0.0f, static_cast<float>(h - 1));
  int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  float ax = x - x0, ay = y - y0;
  return p(y0, x0) * (1 - ax) * (1 - ay) + p(y0, x1) * ax * (1 - ay) +
         p(y1, x0) * (1 - ax) * ay + p(y1, x1) * ax * ay;
}

void draw_line(PlaneB& mask, float x0, float y0, float x1, float y1) {
  int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
  for (int s = 0; s <= steps; ++s) {
    float a = static_cast<float>(s) / steps;
    int x = static_cast<int>(std::lround(x0 + a * (x1 - x0)));
    int y = static_cast<int>(std::lround(y0 + a * (y1 - y0)));
    if (x >= 0 && x < mask.cols() && y >= 0 && y < mask.rows()) mask(y, x) = 1;
  }
}

}  // namespace

ScenePair make_scene_pair(Rng& rng, const SceneParams& p) {
  const int w = p.width, h = p.height;
  ScenePair out;
  out.frame_a = Image(w, h, 3);
  out.frame_b = Image(w, h, 3);
  out.true_edges = PlaneB::Zero(h, w);

  // static background: cool base color, per-channel texture
  const float bg_base[3] = {0.35f + rng.uniform(-0.05f, 0.05f),
                            0.45f + rng.uniform(-0.05f, 0.05f),
                            0.62f + rng.uniform(-0.05f, 0.05f)};
  PlaneF bg_tex[3];
  for (int c = 0; c < 3; ++c) bg_tex[c] = noise_field(rng, w, h, 8, 3);

  const int n_poly = p.min_polygons + static_cast<int>(rng.index(
                         static_cast<std::uint64_t>(p.max_polygons - p.min_polygons + 1)));
  std::vector<Polygon> polys;
  const float margin = p.max_shift + 6.0f;
  for (int i = 0; i < n_poly && static_cast<int>(polys.size()) < n_poly; ++i) {
    for (int attempt = 0; attempt < 40; ++attempt) {
      Polygon poly;
      float radius = rng.uniform(0.18f, 0.30f) * std::min(w, h);
      poly.cx = rng.uniform(margin + radius, w - margin - radius);
      poly.cy = rng.uniform(margin + radius, h - margin - radius);
      bool clear = true;
      for (const Polygon& other : polys) {
        float d = std::hypot(other.cx - poly.cx, other.cy - poly.cy);
        if (d < radius + 0.32f * std::min(w, h) + 6) clear = false;
      }
      if (!clear) continue;

      int n_verts = 3 + static_cast<int>(rng.index(4));
      std::vector<float> angles;
      for (int v = 0; v < n_verts; ++v)
        angles.push_back(rng.uniform(0.0f, 2.0f * std::numbers::pi_v<float>));
      std::sort(angles.begin(), angles.end());
      for (float a : angles) {
        float r = radius * rng.uniform(0.75f, 1.0f);
        poly.verts.push_back({poly.cx + r * std::cos(a), poly.cy + r * std::sin(a)});
      }
      float shift = rng.uniform(p.min_shift, p.max_shift);
      float dir = rng.uniform(0.0f, 2.0f * std::numbers::pi_v<float>);
      poly.dx = shift * std::cos(dir);
      poly.dy = shift * std::sin(dir);
      poly.rotation = rng.uniform(-1.0f, 1.0f) * p.max_rotation_deg *
                      std::numbers::pi_v<float> / 180.0f;
      // warm base color, clearly separated from the background
      poly.base[0] = 0.68f + rng.uniform(-0.08f, 0.08f);
      poly.base[1] = 0.42f + rng.uniform(-0.10f, 0.10f);
      poly.base[2] = 0.28f + rng.uniform(-0.08f, 0.08f);
      for (int c = 0; c < 3; ++c) poly.tex[c] = noise_field(rng, w, h, 8, 3);
      polys.push_back(std::move(poly));
      break;
    }
  }

  auto paint = [&](Image& frame, bool second) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float color[3];
        for (int c = 0; c < 3; ++c)
          color[c] = bg_base[c] + p.texture_amp * (bg_tex[c](y, x) - 0.5f);
        for (const Polygon& poly : polys) {
          float qx = static_cast<float>(x), qy = static_cast<float>(y);
          if (second) {
            // invert the pose: translate back, rotate back about the center
            qx -= poly.dx;
            qy -= poly.dy;
            float s = std::sin(-poly.rotation), co = std::cos(-poly.rotation);
            float rx = qx - poly.cx, ry = qy - poly.cy;
            qx = poly.cx + co * rx - s * ry;
            qy = poly.cy + s * rx + co * ry;
          }
          if (!inside(poly.verts, qx, qy)) continue;
          for (int c = 0; c < 3; ++c)
            color[c] = poly.base[c] +
                       p.texture_amp * (sample_bilinear(poly.tex[c], qx, qy) - 0.5f);
        }
        for (int c = 0; c < 3; ++c)
          frame.planes[static_cast<std::size_t>(c)](y, x) = clamp(color[c], 0.0f, 1.0f);
      }
  };
  paint(out.frame_a, false);
  paint(out.frame_b, true);

  for (const Polygon& poly : polys)
    for (std::size_t v = 0; v < poly.verts.size(); ++v) {
      auto [x0, y0] = poly.verts[v];
      auto [x1, y1] = poly.verts[(v + 1) % poly.verts.size()];
      draw_line(out.true_edges, x0, y0, x1, y1);
    }
  return out;
}

std::vector<std::string> write_corpus(const std::string& root, const std::string& gt_dir,
                                      int n_pairs, int gt_every, std::uint64_t seed,
                                      const SceneParams& params) {
  fs::create_directories(root);
  std::vector<std::string> ids;
  Rng corpus_rng(seed);
  for (int i = 0; i < n_pairs; ++i) {
    Rng rng = corpus_rng.child(static_cast<std::uint64_t>(i));
    ScenePair scene = make_scene_pair(rng, params);
    char name[32];
    std::snprintf(name, sizeof name, "pair%04d", i);
    fs::path dir = fs::path(root) / name;
    fs::create_directories(dir);
    write_image_png(scene.frame_a, (dir / "a.png").string());
    write_image_png(scene.frame_b, (dir / "b.png").string());
    std::string id = std::string(name) + "_a";
    ids.push_back(id);
    if (!gt_dir.empty() && gt_every > 0 && i % gt_every == 0) {
      fs::path gdir = fs::path(gt_dir) / id;
      fs::create_directories(gdir);
      EdgeMap gt(params.width, params.height);
      for (int y = 0; y < params.height; ++y)
        for (int x = 0; x < params.width; ++x)
          gt.strength(y, x) = scene.true_edges(y, x) ? 1.0f : 0.0f;
      write_edge_map_png(gt, (gdir / "0.png").string());
    }
  }
  return ids;
}

}  // namespace vedge::test
