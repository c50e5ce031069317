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

#include "vedge/flow.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <queue>
#include <tuple>

namespace vedge {

namespace {
constexpr float kFloMagic = 202021.25f;
static_assert(std::endian::native == std::endian::little,
              ".flo I/O assumes a little-endian host");
}

CostMap edge_cost_map(const EdgeMap& edges, double alpha, double eps) {
  if (edges.empty()) throw InvalidInput("edge_cost_map: empty edge map");
  if (alpha < 0) throw InvalidInput("edge_cost_map: alpha must be >= 0");
  CostMap cm;
  cm.cost = static_cast<float>(eps) + static_cast<float>(alpha) * edges.strength;
  return cm;
}

GeodesicNeighbors geodesic_knn(const CostMap& cost, const MatchSet& ms, int k) {
  if (ms.empty()) throw InvalidInput("geodesic_knn: empty match set");
  if (k < 1) throw InvalidInput("geodesic_knn: k must be >= 1");
  const int w = cost.width(), h = cost.height();
  const int n = w * h;
  const int n_matches = static_cast<int>(ms.size());
  k = std::min(k, n_matches);

  GeodesicNeighbors out;
  out.width = w;
  out.height = h;
  out.k = k;
  out.index.assign(static_cast<std::size_t>(n) * k, -1);
  out.distance.assign(static_cast<std::size_t>(n) * k,
                      std::numeric_limits<float>::infinity());
  std::vector<std::uint8_t> count(static_cast<std::size_t>(n), 0);

  // Multi-source Dijkstra carrying up to k distinct source labels per pixel.
  // Queue order (distance, source, pixel) makes ties resolve to the lower
  // match index.
  using Entry = std::tuple<float, std::int32_t, std::int32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> queue;

  for (int mi = 0; mi < n_matches; ++mi) {
    const Match& m = ms.matches[static_cast<std::size_t>(mi)];
    int x = clamp(iround(m.x1), 0, w - 1);
    int y = clamp(iround(m.y1), 0, h - 1);
    queue.push({0.0f, mi, y * w + x});
  }

  while (!queue.empty()) {
    auto [dist, src, pixel] = queue.top();
    queue.pop();
    std::uint8_t& c = count[static_cast<std::size_t>(pixel)];
    if (c >= k) continue;
    // skip if this source already settled at the pixel
    const std::int32_t* idx = out.indices_at(pixel);
    bool dup = false;
    for (int i = 0; i < c; ++i)
      if (idx[i] == src) {
        dup = true;
        break;
      }
    if (dup) continue;
    out.index[static_cast<std::size_t>(pixel) * k + c] = src;
    out.distance[static_cast<std::size_t>(pixel) * k + c] = dist;
    ++c;

    const int x = pixel % w, y = pixel / w;
    const float cp = cost.cost(y, x);
    const int nx[4] = {x - 1, x + 1, x, x};
    const int ny[4] = {y, y, y - 1, y + 1};
    for (int e = 0; e < 4; ++e) {
      if (nx[e] < 0 || nx[e] >= w || ny[e] < 0 || ny[e] >= h) continue;
      int q = ny[e] * w + nx[e];
      if (count[static_cast<std::size_t>(q)] >= k) continue;
      float step = 0.5f * (cp + cost.cost(ny[e], nx[e]));
      queue.push({dist + step, src, q});
    }
  }
  return out;
}

namespace {

// Weighted local affine fit in a frame centered at the query pixel; returns
// false when the normal system is ill-conditioned.
bool affine_fit(const MatchSet& ms, const std::int32_t* idx, const float* dist, int k,
                double px, double py, double bandwidth, double cond_threshold,
                float& u_out, float& v_out) {
  Eigen::Matrix3d g = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs_u = Eigen::Vector3d::Zero();
  Eigen::Vector3d rhs_v = Eigen::Vector3d::Zero();
  for (int i = 0; i < k; ++i) {
    if (idx[i] < 0) break;
    const Match& m = ms.matches[static_cast<std::size_t>(idx[i])];
    double wgt = std::exp(-static_cast<double>(dist[i]) / bandwidth);
    Eigen::Vector3d phi(m.x1 - px, m.y1 - py, 1.0);
    g.noalias() += wgt * phi * phi.transpose();
    rhs_u.noalias() += wgt * static_cast<double>(m.dx()) * phi;
    rhs_v.noalias() += wgt * static_cast<double>(m.dy()) * phi;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(g);
  double lo = eig.eigenvalues()(0), hi = eig.eigenvalues()(2);
  if (!(lo > 0) || hi / lo > cond_threshold) return false;
  Eigen::Vector3d cu = eig.eigenvectors() *
                       (eig.eigenvectors().transpose() * rhs_u).cwiseQuotient(eig.eigenvalues());
  Eigen::Vector3d cv = eig.eigenvectors() *
                       (eig.eigenvectors().transpose() * rhs_v).cwiseQuotient(eig.eigenvalues());
  u_out = static_cast<float>(cu(2));  // constant term = value at the query pixel
  v_out = static_cast<float>(cv(2));
  return true;
}

void nw_blend(const MatchSet& ms, const std::int32_t* idx, const float* dist, int k,
              double bandwidth, float& u_out, float& v_out) {
  // Accumulate deviations from the nearest neighbor's displacement so a set
  // of identical displacements reproduces exactly.
  const Match& first = ms.matches[static_cast<std::size_t>(idx[0])];
  double du = 0, dv = 0, wsum = 0;
  for (int i = 0; i < k; ++i) {
    if (idx[i] < 0) break;
    const Match& m = ms.matches[static_cast<std::size_t>(idx[i])];
    double wgt = std::exp(-static_cast<double>(dist[i]) / bandwidth);
    du += wgt * (static_cast<double>(m.dx()) - first.dx());
    dv += wgt * (static_cast<double>(m.dy()) - first.dy());
    wsum += wgt;
  }
  u_out = static_cast<float>(first.dx() + du / wsum);
  v_out = static_cast<float>(first.dy() + dv / wsum);
}

}  // namespace

FlowField interpolate(const MatchSet& ms, const EdgeMap& edges, const InterpParams& params) {
  if (ms.empty()) throw InvalidInput("interpolate: empty match set");
  if (edges.empty()) throw InvalidInput("interpolate: empty edge map");

  CostMap cost = edge_cost_map(edges, params.alpha, params.eps);
  GeodesicNeighbors nn = geodesic_knn(cost, ms, params.k);

  const int w = edges.width(), h = edges.height();
  FlowField f(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int pixel = y * w + x;
      const std::int32_t* idx = nn.indices_at(pixel);
      const float* dist = nn.distances_at(pixel);
      float u = 0, v = 0;
      bool ok = false;
      if (params.mode == InterpMode::LocallyAffine)
        ok = affine_fit(ms, idx, dist, nn.k, x, y, params.kernel_bandwidth,
                        params.condition_threshold, u, v);
      if (!ok) nw_blend(ms, idx, dist, nn.k, params.kernel_bandwidth, u, v);
      f.u(y, x) = u;
      f.v(y, x) = v;
    }
  return f;
}

FlowField smooth_flow(const FlowField& f, const EdgeMap& edges, int n_iters, double alpha) {
  if (f.empty()) throw InvalidInput("smooth_flow: empty flow");
  if (f.width() != edges.width() || f.height() != edges.height())
    throw InvalidInput("smooth_flow: dimensions differ");
  if (n_iters <= 0) return f;

  const int w = f.width(), h = f.height();
  FlowField cur = f;
  FlowField next(w, h);
  for (int it = 0; it < n_iters; ++it) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double su = cur.u(y, x), sv = cur.v(y, x), sw = 1.0;
        const int nx[4] = {x - 1, x + 1, x, x};
        const int ny[4] = {y, y, y - 1, y + 1};
        for (int e = 0; e < 4; ++e) {
          if (nx[e] < 0 || nx[e] >= w || ny[e] < 0 || ny[e] >= h) continue;
          double wgt = std::exp(-alpha * 0.5 *
                                (edges.strength(y, x) + edges.strength(ny[e], nx[e])));
          su += wgt * cur.u(ny[e], nx[e]);
          sv += wgt * cur.v(ny[e], nx[e]);
          sw += wgt;
        }
        next.u(y, x) = static_cast<float>(su / sw);
        next.v(y, x) = static_cast<float>(sv / sw);
      }
    std::swap(cur, next);
  }
  cur.valid_mask = f.valid_mask;
  return cur;
}

namespace {

void hsv_to_rgb(float hue_deg, float sat, float val, float& r, float& g, float& b) {
  float h = hue_deg / 60.0f;
  int i = static_cast<int>(std::floor(h)) % 6;
  if (i < 0) i += 6;
  float frac = h - std::floor(h);
  float p = val * (1 - sat);
  float q = val * (1 - sat * frac);
  float t = val * (1 - sat * (1 - frac));
  switch (i) {
    case 0: r = val; g = t; b = p; break;
    case 1: r = q; g = val; b = p; break;
    case 2: r = p; g = val; b = t; break;
    case 3: r = p; g = q; b = val; break;
    case 4: r = t; g = p; b = val; break;
    default: r = val; g = p; b = q; break;
  }
}

}  // namespace

Image flow_to_rgb(const FlowField& f, std::optional<double> max_mag) {
  if (f.empty()) throw InvalidInput("flow_to_rgb: empty flow");
  const int w = f.width(), h = f.height();
  if (!f.u.isFinite().all() || !f.v.isFinite().all())
    throw InvalidInput("flow_to_rgb: non-finite flow values");

  double norm;
  if (max_mag) {
    norm = *max_mag;
    if (!(norm > 0)) throw InvalidInput("flow_to_rgb: max_mag must be positive");
  } else {
    // 99th-percentile magnitude, floored at 1 px
    std::vector<float> mags(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        mags[static_cast<std::size_t>(y) * w + x] =
            std::sqrt(f.u(y, x) * f.u(y, x) + f.v(y, x) * f.v(y, x));
    std::size_t pos = static_cast<std::size_t>(
        std::ceil(0.99 * static_cast<double>(mags.size()))) - 1;
    std::nth_element(mags.begin(), mags.begin() + static_cast<long>(pos), mags.end());
    norm = std::max(1.0f, mags[pos]);
  }

  Image img(w, h, 3);
  const float two_pi = 2.0f * std::numbers::pi_v<float>;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float u = f.u(y, x), v = f.v(y, x);
      float hue = std::atan2(v, u);
      if (hue < 0) hue += two_pi;
      float sat = static_cast<float>(
          std::min(1.0, std::sqrt(static_cast<double>(u) * u + static_cast<double>(v) * v) / norm));
      float r, g, b;
      hsv_to_rgb(hue * 360.0f / two_pi, sat, 1.0f, r, g, b);
      img.planes[0](y, x) = r;
      img.planes[1](y, x) = g;
      img.planes[2](y, x) = b;
    }
  return img;
}

FlowField read_flo(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open file: " + path);
  float magic = 0;
  std::int32_t w = 0, h = 0;
  in.read(reinterpret_cast<char*>(&magic), 4);
  in.read(reinterpret_cast<char*>(&w), 4);
  in.read(reinterpret_cast<char*>(&h), 4);
  if (!in || magic != kFloMagic) throw FormatError("bad .flo magic: " + path);
  if (w <= 0 || h <= 0) throw FormatError("bad .flo dimensions: " + path);
  FlowField f(w, h);
  std::vector<float> row(static_cast<std::size_t>(w) * 2);
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * 4));
    if (!in) throw FormatError("truncated .flo payload: " + path);
    for (int x = 0; x < w; ++x) {
      f.u(y, x) = row[static_cast<std::size_t>(x) * 2];
      f.v(y, x) = row[static_cast<std::size_t>(x) * 2 + 1];
    }
  }
  return f;
}

void write_flo(const FlowField& f, const std::string& path) {
  if (f.empty()) throw InvalidInput("write_flo: empty flow");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open file: " + path);
  float magic = kFloMagic;
  std::int32_t w = f.width(), h = f.height();
  out.write(reinterpret_cast<const char*>(&magic), 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  out.write(reinterpret_cast<const char*>(&h), 4);
  std::vector<float> row(static_cast<std::size_t>(w) * 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      row[static_cast<std::size_t>(x) * 2] = f.u(y, x);
      row[static_cast<std::size_t>(x) * 2 + 1] = f.v(y, x);
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * 4));
  }
  if (!out) throw FormatError("write failed: " + path);
}

double aee(const FlowField& pred, const FlowField& gt, const PlaneB* mask) {
  if (pred.width() != gt.width() || pred.height() != gt.height())
    throw InvalidInput("aee: dimensions differ");
  double sum = 0;
  long count = 0;
  for (int y = 0; y < pred.height(); ++y)
    for (int x = 0; x < pred.width(); ++x) {
      if (mask && !(*mask)(y, x)) continue;
      double du = static_cast<double>(pred.u(y, x)) - gt.u(y, x);
      double dv = static_cast<double>(pred.v(y, x)) - gt.v(y, x);
      sum += std::sqrt(du * du + dv * dv);
      ++count;
    }
  if (count == 0) throw InvalidInput("aee: no unmasked pixels");
  return sum / static_cast<double>(count);
}

}  // namespace vedge
