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

#include "vedge/imgproc.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <vector>

namespace vedge {

void require_valid(const Image& img, const char* where) {
  if (img.empty()) throw InvalidInput(std::string(where) + ": empty image");
  if (img.channels() != 1 && img.channels() != 3)
    throw InvalidInput(std::string(where) + ": image must have 1 or 3 channels");
  for (const auto& p : img.planes)
    if (p.rows() != img.planes[0].rows() || p.cols() != img.planes[0].cols())
      throw InvalidInput(std::string(where) + ": plane dimensions differ");
}

// ---------------------------------------------------------------------------
// Filtering primitives
// ---------------------------------------------------------------------------

PlaneF conv_tri(const PlaneF& src, int radius) {
  if (radius <= 0) return src;
  const int h = static_cast<int>(src.rows());
  const int w = static_cast<int>(src.cols());
  const int r = radius;
  const float norm = static_cast<float>((r + 1) * (r + 1));

  PlaneF tmp(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = static_cast<float>(r + 1) * src(y, x);
      for (int d = 1; d <= r; ++d) {
        float wgt = static_cast<float>(r + 1 - d);
        acc += wgt * src(y, clamp(x - d, 0, w - 1));
        acc += wgt * src(y, clamp(x + d, 0, w - 1));
      }
      tmp(y, x) = acc / norm;
    }
  PlaneF out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = static_cast<float>(r + 1) * tmp(y, x);
      for (int d = 1; d <= r; ++d) {
        float wgt = static_cast<float>(r + 1 - d);
        acc += wgt * tmp(clamp(y - d, 0, h - 1), x);
        acc += wgt * tmp(clamp(y + d, 0, h - 1), x);
      }
      out(y, x) = acc / norm;
    }
  return out;
}

void centered_gradients(const PlaneF& p, PlaneF& gx, PlaneF& gy) {
  const int h = static_cast<int>(p.rows());
  const int w = static_cast<int>(p.cols());
  gx.resize(h, w);
  gy.resize(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      gx(y, x) = p(y, clamp(x + 1, 0, w - 1)) - p(y, clamp(x - 1, 0, w - 1));
      gy(y, x) = p(clamp(y + 1, 0, h - 1), x) - p(clamp(y - 1, 0, h - 1), x);
    }
}

namespace {

// 1D area-resampling taps: for each output index, the overlapped source
// cells and the fraction of the output cell they cover.
struct ResampleTap {
  int src;
  float weight;
};

std::vector<std::vector<ResampleTap>> area_taps(int src_n, int out_n) {
  std::vector<std::vector<ResampleTap>> taps(out_n);
  const double scale = static_cast<double>(src_n) / out_n;
  for (int i = 0; i < out_n; ++i) {
    double lo = i * scale;
    double hi = (i + 1) * scale;
    int s0 = static_cast<int>(std::floor(lo));
    int s1 = std::min(src_n - 1, static_cast<int>(std::ceil(hi)) - 1);
    for (int s = s0; s <= s1; ++s) {
      double cover = std::min(hi, static_cast<double>(s + 1)) - std::max(lo, static_cast<double>(s));
      if (cover > 0)
        taps[i].push_back({s, static_cast<float>(cover / scale)});
    }
  }
  return taps;
}

}  // namespace

PlaneF resize_area(const PlaneF& src, int out_w, int out_h) {
  const int h = static_cast<int>(src.rows());
  const int w = static_cast<int>(src.cols());
  if (out_w <= 0 || out_h <= 0) throw InvalidInput("resize_area: non-positive output size");
  if (out_w == w && out_h == h) return src;
  auto col_taps = area_taps(w, out_w);
  auto row_taps = area_taps(h, out_h);

  PlaneF tmp(h, out_w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < out_w; ++x) {
      float acc = 0.0f;
      for (const auto& t : col_taps[x]) acc += t.weight * src(y, t.src);
      tmp(y, x) = acc;
    }
  PlaneF out(out_h, out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      float acc = 0.0f;
      for (const auto& t : row_taps[y]) acc += t.weight * tmp(t.src, x);
      out(y, x) = acc;
    }
  return out;
}

PlaneF resize_bilinear(const PlaneF& src, int out_w, int out_h) {
  const int h = static_cast<int>(src.rows());
  const int w = static_cast<int>(src.cols());
  if (out_w <= 0 || out_h <= 0) throw InvalidInput("resize_bilinear: non-positive output size");
  if (out_w == w && out_h == h) return src;
  PlaneF out(out_h, out_w);
  const double sx = static_cast<double>(w) / out_w;
  const double sy = static_cast<double>(h) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double fy = clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, h - 1);
    float wy = static_cast<float>(fy - y0);
    for (int x = 0; x < out_w; ++x) {
      double fx = clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, w - 1);
      float wx = static_cast<float>(fx - x0);
      float top = src(y0, x0) * (1 - wx) + src(y0, x1) * wx;
      float bot = src(y1, x0) * (1 - wx) + src(y1, x1) * wx;
      out(y, x) = top * (1 - wy) + bot * wy;
    }
  }
  return out;
}

Image resize_image(const Image& img, int out_w, int out_h) {
  require_valid(img, "resize_image");
  Image out;
  out.planes.reserve(img.planes.size());
  const bool downscale = out_w <= img.width() && out_h <= img.height();
  for (const auto& p : img.planes)
    out.planes.push_back(downscale ? resize_area(p, out_w, out_h)
                                   : resize_bilinear(p, out_w, out_h));
  return out;
}

Image pad_reflect(const Image& img, int pad) {
  require_valid(img, "pad_reflect");
  if (pad <= 0) return img;
  const int h = img.height(), w = img.width();
  Image out(w + 2 * pad, h + 2 * pad, img.channels());
  auto reflect = [](int i, int n) {
    // mirror without repeating the border pixel; falls back to clamping for
    // pads larger than the image
    while (i < 0 || i >= n) {
      if (i < 0) i = -i;
      if (i >= n) i = 2 * n - 2 - i;
      if (n == 1) return 0;
    }
    return i;
  };
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < h + 2 * pad; ++y)
      for (int x = 0; x < w + 2 * pad; ++x)
        out.planes[c](y, x) = img.planes[c](reflect(y - pad, h), reflect(x - pad, w));
  return out;
}

PlaneB dilate_disk(const PlaneB& support, double radius) {
  const int h = static_cast<int>(support.rows());
  const int w = static_cast<int>(support.cols());
  const int r = static_cast<int>(std::floor(radius));
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (static_cast<double>(dx) * dx + static_cast<double>(dy) * dy <= radius * radius)
        offsets.emplace_back(dy, dx);
  PlaneB out = PlaneB::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!support(y, x)) continue;
      for (auto [dy, dx] : offsets) {
        int yy = y + dy, xx = x + dx;
        if (yy >= 0 && yy < h && xx >= 0 && xx < w) out(yy, xx) = 1;
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Gradient magnitude (the iteration-0 edge detector)
// ---------------------------------------------------------------------------

EdgeMap gradient_magnitude(const Image& img) {
  require_valid(img, "gradient_magnitude");
  const int h = img.height(), w = img.width();
  PlaneF best = PlaneF::Zero(h, w);
  PlaneF gx, gy;
  for (const auto& plane : img.planes) {
    centered_gradients(plane, gx, gy);
    best = best.max((gx * gx + gy * gy).sqrt());
  }
  float peak = best.maxCoeff();
  if (peak > 0.0f) best /= peak;
  return EdgeMap(std::move(best));
}

// ---------------------------------------------------------------------------
// Non-maximum suppression
// ---------------------------------------------------------------------------

PlaneF edge_orientations(const PlaneF& strength) {
  PlaneF smooth = conv_tri(strength, 2);
  PlaneF gx, gy;
  centered_gradients(smooth, gx, gy);
  PlaneF jxx = conv_tri((gx * gx).eval(), 2);
  PlaneF jyy = conv_tri((gy * gy).eval(), 2);
  PlaneF jxy = conv_tri((gx * gy).eval(), 2);

  const int h = static_cast<int>(strength.rows());
  const int w = static_cast<int>(strength.cols());
  PlaneF angle(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // principal axis of the second-moment matrix = edge normal
      float a = 0.5f * std::atan2(2.0f * jxy(y, x), jxx(y, x) - jyy(y, x));
      if (a < 0.0f) a += std::numbers::pi_v<float>;
      if (a >= std::numbers::pi_v<float>) a -= std::numbers::pi_v<float>;
      angle(y, x) = a;
    }
  return angle;
}

namespace {

// Quantized normal directions: 0, 45, 90, 135 degrees.
constexpr int kDirX[4] = {1, 1, 0, -1};
constexpr int kDirY[4] = {0, 1, 1, 1};

int quantize_angle(float a) {
  const float pi = std::numbers::pi_v<float>;
  int q = static_cast<int>(std::floor((a + pi / 8.0f) / (pi / 4.0f)));
  return ((q % 4) + 4) % 4;
}

}  // namespace

EdgeMap nms(const EdgeMap& edges, int radius) {
  if (edges.empty()) throw InvalidInput("nms: empty edge map");
  if (radius < 1) throw InvalidInput("nms: radius must be >= 1");
  if (edges.thinned) return edges;  // idempotent by contract

  const int h = edges.height(), w = edges.width();
  PlaneF angle = edge_orientations(edges.strength);
  EdgeMap out(w, h);
  out.thinned = true;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float s = edges.strength(y, x);
      if (s <= 0.0f) continue;
      int q = quantize_angle(angle(y, x));
      bool keep = true;
      for (int step = 1; step <= radius && keep; ++step)
        for (int sign = -1; sign <= 1 && keep; sign += 2) {
          int xx = x + sign * step * kDirX[q];
          int yy = y + sign * step * kDirY[q];
          if (xx < 0 || xx >= w || yy < 0 || yy >= h) continue;
          if (edges.strength(yy, xx) > s) keep = false;
        }
      if (keep) out.strength(y, x) = s;
    }
  return out;
}

// ---------------------------------------------------------------------------
// SLIC superpixels
// ---------------------------------------------------------------------------

namespace {

struct SlicCenter {
  float x, y;
  float color[3];
};

// Components of an integer label map by 4-connectivity. Component ids are
// assigned in row-major discovery order.
PlaneI label_components(const PlaneI& labels, int& n_components,
                        std::vector<int>& comp_size, std::vector<int>& comp_label) {
  const int h = static_cast<int>(labels.rows());
  const int w = static_cast<int>(labels.cols());
  PlaneI comp = PlaneI::Constant(h, w, -1);
  n_components = 0;
  comp_size.clear();
  comp_label.clear();
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (comp(y, x) != -1) continue;
      int id = n_components++;
      int lab = labels(y, x);
      int size = 0;
      stack.push_back({y, x});
      comp(y, x) = id;
      while (!stack.empty()) {
        auto [cy, cx] = stack.back();
        stack.pop_back();
        ++size;
        const int ny[4] = {cy - 1, cy + 1, cy, cy};
        const int nx[4] = {cx, cx, cx - 1, cx + 1};
        for (int k = 0; k < 4; ++k) {
          if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
          if (comp(ny[k], nx[k]) != -1 || labels(ny[k], nx[k]) != lab) continue;
          comp(ny[k], nx[k]) = id;
          stack.push_back({ny[k], nx[k]});
        }
      }
      comp_size.push_back(size);
      comp_label.push_back(lab);
    }
  return comp;
}

}  // namespace

SuperpixelLabeling slic(const Image& img, int n_target, double compactness, int n_iters) {
  require_valid(img, "slic");
  const int h = img.height(), w = img.width();
  const int n_pixels = h * w;
  if (n_target < 1) throw InvalidInput("slic: n_target must be >= 1");
  if (n_target > n_pixels) throw InvalidInput("slic: n_target exceeds pixel count");
  if (n_iters < 1) throw InvalidInput("slic: n_iters must be >= 1");

  const int channels = img.channels();
  // Color distances operate on an 8-bit-like scale so the standard
  // compactness magnitudes apply.
  auto color_at = [&](int y, int x, float* c) {
    for (int k = 0; k < 3; ++k)
      c[k] = 255.0f * img.planes[k < channels ? k : 0](y, x);
  };

  const double step = std::sqrt(static_cast<double>(n_pixels) / n_target);
  int nx = std::max(1, static_cast<int>(std::lround(w / step)));
  int ny = std::max(1, static_cast<int>(std::lround(h / step)));
  while (nx * ny > n_pixels) (nx > ny ? nx : ny) -= 1;
  const int k_init = nx * ny;

  std::vector<SlicCenter> centers(static_cast<std::size_t>(k_init));
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      SlicCenter& c = centers[static_cast<std::size_t>(j) * nx + i];
      c.x = (i + 0.5f) * static_cast<float>(w) / nx;
      c.y = (j + 0.5f) * static_cast<float>(h) / ny;
      int px = clamp(static_cast<int>(c.x), 0, w - 1);
      int py = clamp(static_cast<int>(c.y), 0, h - 1);
      color_at(py, px, c.color);
    }

  const float spacing = static_cast<float>(std::sqrt(static_cast<double>(n_pixels) / k_init));
  const float ratio = static_cast<float>(compactness) / spacing;
  const int window = std::max(1, static_cast<int>(std::ceil(2.0f * spacing)));

  PlaneI assign = PlaneI::Constant(h, w, -1);
  PlaneF best_d(h, w);
  for (int iter = 0; iter < n_iters; ++iter) {
    best_d.setConstant(std::numeric_limits<float>::max());
    assign.setConstant(-1);
    for (int ci = 0; ci < k_init; ++ci) {
      const SlicCenter& c = centers[static_cast<std::size_t>(ci)];
      int x0 = clamp(static_cast<int>(c.x) - window, 0, w - 1);
      int x1 = clamp(static_cast<int>(c.x) + window, 0, w - 1);
      int y0 = clamp(static_cast<int>(c.y) - window, 0, h - 1);
      int y1 = clamp(static_cast<int>(c.y) + window, 0, h - 1);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          float col[3];
          color_at(y, x, col);
          float dc = 0.0f;
          for (int k = 0; k < 3; ++k) {
            float d = col[k] - c.color[k];
            dc += d * d;
          }
          float dx = x - c.x, dy = y - c.y;
          float ds = dx * dx + dy * dy;
          float dist = dc + ratio * ratio * ds;
          if (dist < best_d(y, x)) {  // ties keep the lower center index
            best_d(y, x) = dist;
            assign(y, x) = ci;
          }
        }
    }
    // Pixels outside every search window (possible for extreme aspect
    // ratios): nearest center by position.
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (assign(y, x) != -1) continue;
        float best = std::numeric_limits<float>::max();
        int best_c = 0;
        for (int ci = 0; ci < k_init; ++ci) {
          float dx = x - centers[static_cast<std::size_t>(ci)].x;
          float dy = y - centers[static_cast<std::size_t>(ci)].y;
          float d = dx * dx + dy * dy;
          if (d < best) {
            best = d;
            best_c = ci;
          }
        }
        assign(y, x) = best_c;
      }

    if (iter + 1 == n_iters) break;
    std::vector<double> sx(k_init, 0), sy(k_init, 0), sc(3 * k_init, 0);
    std::vector<int> count(k_init, 0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int ci = assign(y, x);
        float col[3];
        color_at(y, x, col);
        sx[ci] += x;
        sy[ci] += y;
        for (int k = 0; k < 3; ++k) sc[3 * ci + k] += col[k];
        count[ci] += 1;
      }
    for (int ci = 0; ci < k_init; ++ci) {
      if (count[ci] == 0) continue;  // keep stale center
      centers[static_cast<std::size_t>(ci)].x = static_cast<float>(sx[ci] / count[ci]);
      centers[static_cast<std::size_t>(ci)].y = static_cast<float>(sy[ci] / count[ci]);
      for (int k = 0; k < 3; ++k)
        centers[static_cast<std::size_t>(ci)].color[k] = static_cast<float>(sc[3 * ci + k] / count[ci]);
    }
  }

  // Connectivity pass: for each cluster the largest fragment keeps the
  // cluster; every other fragment is absorbed into the largest adjacent
  // segment.
  int n_comp = 0;
  std::vector<int> comp_size, comp_label;
  PlaneI comp = label_components(assign, n_comp, comp_size, comp_label);

  std::vector<int> main_comp(static_cast<std::size_t>(k_init), -1);
  for (int c = 0; c < n_comp; ++c) {
    int lab = comp_label[static_cast<std::size_t>(c)];
    int cur = main_comp[static_cast<std::size_t>(lab)];
    if (cur == -1 || comp_size[static_cast<std::size_t>(c)] > comp_size[static_cast<std::size_t>(cur)])
      main_comp[static_cast<std::size_t>(lab)] = c;
  }

  // seg id per component: main fragments get their cluster id, orphans are
  // resolved iteratively against already-final segments
  std::vector<int> comp_seg(static_cast<std::size_t>(n_comp), -1);
  std::vector<long long> seg_area(static_cast<std::size_t>(k_init), 0);
  for (int lab = 0; lab < k_init; ++lab)
    if (main_comp[static_cast<std::size_t>(lab)] != -1) {
      comp_seg[static_cast<std::size_t>(main_comp[static_cast<std::size_t>(lab)])] = lab;
      seg_area[static_cast<std::size_t>(lab)] = comp_size[static_cast<std::size_t>(main_comp[static_cast<std::size_t>(lab)])];
    }

  bool progress = true;
  while (progress) {
    progress = false;
    for (int c = 0; c < n_comp; ++c) {
      if (comp_seg[static_cast<std::size_t>(c)] != -1) continue;
      // collect adjacent finalized segments of fragment c
      long long best_area = -1;
      int best_seg = -1;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          if (comp(y, x) != c) continue;
          const int nyy[4] = {y - 1, y + 1, y, y};
          const int nxx[4] = {x, x, x - 1, x + 1};
          for (int k = 0; k < 4; ++k) {
            if (nyy[k] < 0 || nyy[k] >= h || nxx[k] < 0 || nxx[k] >= w) continue;
            int nc = comp(nyy[k], nxx[k]);
            if (nc == c) continue;
            int seg = comp_seg[static_cast<std::size_t>(nc)];
            if (seg == -1) continue;
            if (seg_area[static_cast<std::size_t>(seg)] > best_area ||
                (seg_area[static_cast<std::size_t>(seg)] == best_area && seg < best_seg)) {
              best_area = seg_area[static_cast<std::size_t>(seg)];
              best_seg = seg;
            }
          }
        }
      if (best_seg != -1) {
        comp_seg[static_cast<std::size_t>(c)] = best_seg;
        seg_area[static_cast<std::size_t>(best_seg)] += comp_size[static_cast<std::size_t>(c)];
        progress = true;
      }
    }
  }

  // compact relabel in row-major first-appearance order
  SuperpixelLabeling out;
  out.labels = PlaneI::Constant(h, w, -1);
  std::vector<int> remap(static_cast<std::size_t>(k_init), -1);
  int next_label = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int seg = comp_seg[static_cast<std::size_t>(comp(y, x))];
      if (remap[static_cast<std::size_t>(seg)] == -1) remap[static_cast<std::size_t>(seg)] = next_label++;
      out.labels(y, x) = remap[static_cast<std::size_t>(seg)];
    }
  out.n_segments = next_label;
  return out;
}

EdgeMap superpixel_edges(const SuperpixelLabeling& lab) {
  const int h = lab.height(), w = lab.width();
  if (h == 0 || w == 0) throw InvalidInput("superpixel_edges: empty labeling");
  EdgeMap out(w, h);
  out.thinned = true;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int l = lab.labels(y, x);
      bool edge = (x > 0 && lab.labels(y, x - 1) != l) ||
                  (x + 1 < w && lab.labels(y, x + 1) != l) ||
                  (y > 0 && lab.labels(y - 1, x) != l) ||
                  (y + 1 < h && lab.labels(y + 1, x) != l);
      if (edge) out.strength(y, x) = 1.0f;
    }
  return out;
}

std::pair<PlaneI, int> connected_components(const PlaneB& patch) {
  const int h = static_cast<int>(patch.rows());
  const int w = static_cast<int>(patch.cols());
  PlaneI labels = PlaneI::Zero(h, w);
  int next = 0;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (patch(y, x) || labels(y, x) != 0) continue;
      ++next;
      labels(y, x) = next;
      stack.push_back({y, x});
      while (!stack.empty()) {
        auto [cy, cx] = stack.back();
        stack.pop_back();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            int yy = cy + dy, xx = cx + dx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            if (patch(yy, xx) || labels(yy, xx) != 0) continue;
            labels(yy, xx) = next;
            stack.push_back({yy, xx});
          }
      }
    }
  return {std::move(labels), next};
}

// ---------------------------------------------------------------------------
// Feature channels
// ---------------------------------------------------------------------------

namespace {

// RGB -> L,u,v with the usual XYZ intermediate (cube-root nonlinearity on
// luminance), each channel mapped into [0,1]. Inputs are treated as linear
// RGB in [0,1].
void rgb_to_luv(const Image& img, PlaneF& l, PlaneF& u, PlaneF& v) {
  const int h = img.height(), w = img.width();
  l.resize(h, w);
  u.resize(h, w);
  v.resize(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float r = img.planes[0](y, x), g = img.planes[1](y, x), b = img.planes[2](y, x);
      float X = 0.412453f * r + 0.357580f * g + 0.180423f * b;
      float Y = 0.212671f * r + 0.715160f * g + 0.072169f * b;
      float Z = 0.019334f * r + 0.119193f * g + 0.950227f * b;
      float L = Y > 0.008856f ? 116.0f * std::cbrt(Y) - 16.0f : 903.3f * Y;
      float denom = X + 15.0f * Y + 3.0f * Z + 1e-10f;
      float up = 4.0f * X / denom;
      float vp = 9.0f * Y / denom;
      float uu = 13.0f * L * (up - 0.19793943f);
      float vv = 13.0f * L * (vp - 0.46831096f);
      l(y, x) = clamp(L / 270.0f, 0.0f, 1.0f);
      u(y, x) = clamp((uu + 88.0f) / 270.0f, 0.0f, 1.0f);
      v(y, x) = clamp((vv + 134.0f) / 270.0f, 0.0f, 1.0f);
    }
}

}  // namespace

ChannelStack feature_channels(const Image& img, int shrink) {
  require_valid(img, "feature_channels");
  if (img.channels() != 3)
    throw InvalidInput("feature_channels: 3-channel input required");
  if (shrink < 1) throw InvalidInput("feature_channels: shrink must be >= 1");

  const int h = img.height(), w = img.width();
  const int sw = std::max(1, w / shrink);
  const int sh = std::max(1, h / shrink);
  const float pi = std::numbers::pi_v<float>;

  PlaneF luv[3];
  rgb_to_luv(img, luv[0], luv[1], luv[2]);

  ChannelStack stack;
  stack.shrink = shrink;
  stack.full_width = w;
  stack.full_height = h;
  stack.channels.reserve(kFeatureChannelCount);
  for (int c = 0; c < 3; ++c) stack.channels.push_back(resize_area(luv[c], sw, sh));

  const int blur_radii[2] = {0, 2};
  for (int blur : blur_radii) {
    PlaneF mag = PlaneF::Zero(h, w);
    PlaneF theta = PlaneF::Zero(h, w);
    PlaneF gx, gy;
    for (int c = 0; c < 3; ++c) {
      PlaneF base = conv_tri(luv[c], blur);
      centered_gradients(base, gx, gy);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          float m = std::sqrt(gx(y, x) * gx(y, x) + gy(y, x) * gy(y, x));
          if (m > mag(y, x)) {
            mag(y, x) = m;
            float a = std::atan2(gy(y, x), gx(y, x));
            if (a < 0) a += pi;
            if (a >= pi) a -= pi;
            theta(y, x) = a;
          }
        }
    }
    // local contrast normalization
    PlaneF norm = conv_tri(mag, 5) + 0.01f;
    mag /= norm;

    stack.channels.push_back(conv_tri(resize_area(mag, sw, sh), 1));
    for (int o = 0; o < 4; ++o) {
      PlaneF oriented = PlaneF::Zero(h, w);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          int bin = std::min(3, static_cast<int>(theta(y, x) / pi * 4.0f));
          if (bin == o) oriented(y, x) = mag(y, x);
        }
      stack.channels.push_back(conv_tri(resize_area(oriented, sw, sh), 1));
    }
  }
  // smooth the color channels too
  for (int c = 0; c < 3; ++c) stack.channels[static_cast<std::size_t>(c)] =
      conv_tri(stack.channels[static_cast<std::size_t>(c)], 1);
  return stack;
}

}  // namespace vedge
