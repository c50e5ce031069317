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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "testutil.hpp"
#include "vedge/flow.hpp"

using namespace vedge;

namespace {

MatchSet matches_at(std::initializer_list<Match> list, int w, int h) {
  MatchSet ms;
  ms.source_width = ms.target_width = w;
  ms.source_height = ms.target_height = h;
  ms.matches = list;
  return ms;
}

// geodesic_knn distances vs per-pixel single-source Dijkstra
void check_against_brute(const CostMap& cost, const MatchSet& ms, int k) {
  GeodesicNeighbors nn = geodesic_knn(cost, ms, k);
  const int w = cost.width(), h = cost.height();
  std::vector<std::vector<double>> dists;
  for (const Match& m : ms.matches)
    dists.push_back(test::brute_dijkstra(cost.cost, static_cast<int>(std::lround(m.x1)),
                                         static_cast<int>(std::lround(m.y1))));
  for (int pixel = 0; pixel < w * h; ++pixel) {
    std::vector<std::pair<double, int>> all;
    for (std::size_t s = 0; s < dists.size(); ++s)
      all.push_back({dists[s][static_cast<std::size_t>(pixel)], static_cast<int>(s)});
    std::sort(all.begin(), all.end());
    int expect_k = std::min<int>(nn.k, static_cast<int>(all.size()));
    for (int i = 0; i < expect_k; ++i) {
      CHECK(nn.indices_at(pixel)[i] == all[static_cast<std::size_t>(i)].second);
      CHECK(nn.distances_at(pixel)[i] ==
            doctest::Approx(all[static_cast<std::size_t>(i)].first).epsilon(1e-4));
    }
  }
}

}  // namespace

TEST_CASE("edge_cost_map: basics") {
  EdgeMap edges(5, 5);
  edges.strength.setConstant(0.5f);
  CostMap cm = edge_cost_map(edges, 10.0, 0.001);
  CHECK(cm.cost(2, 2) == doctest::Approx(5.001f));
  CHECK_THROWS_AS(edge_cost_map(edges, -1.0), InvalidInput);
  CostMap flat = edge_cost_map(edges, 0.0);
  CHECK(flat.cost.maxCoeff() == flat.cost.minCoeff());
}

TEST_CASE("geodesic_knn: single match gives grid distances under uniform cost") {
  EdgeMap edges(7, 5);  // all-zero edges -> uniform eps cost
  CostMap cm = edge_cost_map(edges, 100.0, 0.001);
  MatchSet ms = matches_at({{2, 1, 3, 1, 1.0f}}, 7, 5);
  GeodesicNeighbors nn = geodesic_knn(cm, ms, 3);
  CHECK(nn.k == 1);  // only one match available
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) {
      int pixel = y * 7 + x;
      CHECK(nn.indices_at(pixel)[0] == 0);
      double manhattan = std::abs(x - 2) + std::abs(y - 1);
      CHECK(nn.distances_at(pixel)[0] == doctest::Approx(0.001 * manhattan).epsilon(1e-4));
    }
}

TEST_CASE("geodesic_knn: two matches on a 9x9 equal brute force") {
  EdgeMap edges(9, 9);
  CostMap cm = edge_cost_map(edges, 100.0, 0.001);
  MatchSet ms = matches_at({{1, 1, 2, 2, 1.0f}, {7, 6, 6, 6, 1.0f}}, 9, 9);
  check_against_brute(cm, ms, 2);
}

TEST_CASE("geodesic_knn: an infinite wall separates sources") {
  // vertical wall of strong edges in column 3 of a 7x7 grid
  EdgeMap edges(7, 7);
  for (int y = 0; y < 7; ++y) edges.strength(y, 3) = 1.0f;
  CostMap cm = edge_cost_map(edges, 1e6, 0.001);
  MatchSet ms = matches_at({{1, 3, 1, 3, 1.0f}, {5, 3, 5, 3, 1.0f}}, 7, 7);
  GeodesicNeighbors nn = geodesic_knn(cm, ms, 1);
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 3; ++x) CHECK(nn.indices_at(y * 7 + x)[0] == 0);
    for (int x = 4; x < 7; ++x) CHECK(nn.indices_at(y * 7 + x)[0] == 1);
  }
}

TEST_CASE("geodesic_knn: random instances equal brute force (property)") {
  Rng rng(31);
  for (int trial = 0; trial < 60; ++trial) {
    int w = 4 + static_cast<int>(rng.index(13));
    int h = 4 + static_cast<int>(rng.index(13));
    EdgeMap edges(test::random_plane(rng, w, h));
    CostMap cm = edge_cost_map(edges, rng.uniform(0.0f, 30.0f), 0.01);
    int n_matches = 1 + static_cast<int>(rng.index(5));
    MatchSet ms;
    ms.source_width = ms.target_width = w;
    ms.source_height = ms.target_height = h;
    for (int i = 0; i < n_matches; ++i)
      ms.matches.push_back({static_cast<float>(rng.index(static_cast<std::uint64_t>(w))),
                            static_cast<float>(rng.index(static_cast<std::uint64_t>(h))), 0, 0,
                            1.0f});
    check_against_brute(cm, ms, 1 + static_cast<int>(rng.index(4)));
  }
}

TEST_CASE("geodesic distances are monotone in alpha") {
  Rng rng(33);
  EdgeMap edges(test::random_plane(rng, 9, 9));
  MatchSet ms = matches_at({{4, 4, 4, 4, 1.0f}, {0, 0, 0, 0, 1.0f}}, 9, 9);
  GeodesicNeighbors lo = geodesic_knn(edge_cost_map(edges, 5.0), ms, 2);
  GeodesicNeighbors hi = geodesic_knn(edge_cost_map(edges, 20.0), ms, 2);
  for (int pixel = 0; pixel < 81; ++pixel)
    for (int i = 0; i < 2; ++i)
      if (lo.indices_at(pixel)[i] >= 0 && hi.indices_at(pixel)[i] >= 0)
        CHECK(hi.distances_at(pixel)[i] >= lo.distances_at(pixel)[i] - 1e-6f);
}

TEST_CASE("interpolate: single match gives a constant field in both modes") {
  EdgeMap edges(11, 9);
  MatchSet ms = matches_at({{5, 4, 7, 3, 1.0f}}, 11, 9);
  for (InterpMode mode : {InterpMode::NadarayaWatson, InterpMode::LocallyAffine}) {
    InterpParams p;
    p.k = 4;
    p.mode = mode;
    FlowField f = interpolate(ms, edges, p);
    CHECK((f.u == 2.0f).all());
    CHECK((f.v == -1.0f).all());
  }
}

TEST_CASE("interpolate: LA reconstructs an affine field exactly") {
  const int w = 48, h = 40;
  auto affine_u = [](double x, double y) { return 0.02 * x - 0.01 * y + 1.5; };
  auto affine_v = [](double x, double y) { return -0.015 * x + 0.025 * y - 2.0; };
  MatchSet ms;
  ms.source_width = ms.target_width = w;
  ms.source_height = ms.target_height = h;
  for (int y = 2; y < h; y += 6)
    for (int x = 2; x < w; x += 6)
      ms.matches.push_back({static_cast<float>(x), static_cast<float>(y),
                            static_cast<float>(x + affine_u(x, y)),
                            static_cast<float>(y + affine_v(x, y)), 1.0f});
  EdgeMap edges(w, h);  // uniform cost
  InterpParams p;
  p.k = 12;
  p.mode = InterpMode::LocallyAffine;
  FlowField f = interpolate(ms, edges, p);
  double max_err = 0;
  for (int y = 8; y < h - 8; ++y)
    for (int x = 8; x < w - 8; ++x) {
      max_err = std::max(max_err, std::abs(f.u(y, x) - affine_u(x, y)));
      max_err = std::max(max_err, std::abs(f.v(y, x) - affine_v(x, y)));
    }
  CHECK(max_err < 1e-6);
}

TEST_CASE("interpolate: translation-exact regardless of edges (property)") {
  Rng rng(35);
  for (int trial = 0; trial < 10; ++trial) {
    int w = 12 + static_cast<int>(rng.index(10));
    int h = 12 + static_cast<int>(rng.index(10));
    float dx = rng.uniform(-4.0f, 4.0f), dy = rng.uniform(-4.0f, 4.0f);
    MatchSet ms;
    ms.source_width = ms.target_width = w + 8;
    ms.source_height = ms.target_height = h + 8;
    for (int i = 0; i < 7; ++i)
      ms.matches.push_back({static_cast<float>(rng.index(static_cast<std::uint64_t>(w))),
                            static_cast<float>(rng.index(static_cast<std::uint64_t>(h))),
                            0, 0, 1.0f});
    for (Match& m : ms.matches) {
      m.x2 = m.x1 + dx;
      m.y2 = m.y1 + dy;
    }
    EdgeMap edges(test::random_plane(rng, w, h));
    InterpParams p;
    p.k = 5;
    p.mode = InterpMode::NadarayaWatson;
    FlowField f = interpolate(ms, edges, p);
    CHECK((f.u == dx).all());
    CHECK((f.v == dy).all());
  }
}

TEST_CASE("interpolate: NW stays in the convex hull of neighbor displacements") {
  Rng rng(36);
  MatchSet ms;
  ms.source_width = ms.target_width = 20;
  ms.source_height = ms.target_height = 20;
  float lo_u = 1e9f, hi_u = -1e9f;
  for (int i = 0; i < 9; ++i) {
    Match m;
    m.x1 = static_cast<float>(rng.index(20));
    m.y1 = static_cast<float>(rng.index(20));
    m.x2 = m.x1 + rng.uniform(-3.0f, 3.0f);
    m.y2 = m.y1 + rng.uniform(-3.0f, 3.0f);
    m.score = 1;
    lo_u = std::min(lo_u, m.dx());
    hi_u = std::max(hi_u, m.dx());
    ms.matches.push_back(m);
  }
  EdgeMap edges(test::random_plane(rng, 20, 20));
  InterpParams p;
  p.k = 4;
  p.mode = InterpMode::NadarayaWatson;
  FlowField f = interpolate(ms, edges, p);
  CHECK(f.u.minCoeff() >= lo_u - 1e-4f);
  CHECK(f.u.maxCoeff() <= hi_u + 1e-4f);
}

TEST_CASE("interpolate: k=1 across a wall copies each side's vector") {
  EdgeMap edges(7, 7);
  for (int y = 0; y < 7; ++y) edges.strength(y, 3) = 1.0f;
  MatchSet ms = matches_at({{1, 3, 6, 3, 1.0f}, {5, 3, 0, 3, 1.0f}}, 7, 7);
  InterpParams p;
  p.k = 1;
  p.alpha = 1e6;
  p.mode = InterpMode::NadarayaWatson;
  FlowField f = interpolate(ms, edges, p);
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 3; ++x) CHECK(f.u(y, x) == 5.0f);
    for (int x = 4; x < 7; ++x) CHECK(f.u(y, x) == -5.0f);
  }
}

TEST_CASE("smooth_flow: identity and fixed point") {
  Rng rng(37);
  FlowField f(10, 8);
  f.u = test::random_plane(rng, 10, 8, -3, 3);
  f.v = test::random_plane(rng, 10, 8, -3, 3);
  EdgeMap edges(10, 8);
  FlowField same = smooth_flow(f, edges, 0);
  CHECK((same.u - f.u).abs().maxCoeff() == 0.0f);

  FlowField constant(10, 8);
  constant.u.setConstant(2.5f);
  constant.v.setConstant(-1.0f);
  FlowField smoothed = smooth_flow(constant, edges, 10);
  CHECK((smoothed.u - 2.5f).abs().maxCoeff() < 1e-6f);
  CHECK((smoothed.v + 1.0f).abs().maxCoeff() < 1e-6f);
}

TEST_CASE("smooth_flow: variance decreases monotonically on noise") {
  Rng rng(38);
  FlowField f(16, 16);
  f.u = test::random_plane(rng, 16, 16, -1, 1);
  f.v = test::random_plane(rng, 16, 16, -1, 1);
  EdgeMap edges(16, 16);
  auto variance = [](const PlaneF& p) {
    double mean = p.cast<double>().mean();
    return (p.cast<double>() - mean).square().mean();
  };
  double prev = variance(f.u);
  FlowField cur = f;
  for (int it = 0; it < 50; ++it) {
    cur = smooth_flow(cur, edges, 1);
    double v = variance(cur.u);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("flow_to_rgb: zero flow is white") {
  FlowField f(6, 4);
  Image img = flow_to_rgb(f);
  for (int c = 0; c < 3; ++c) CHECK((img.planes[static_cast<std::size_t>(c)] == 1.0f).all());
}

TEST_CASE("flow_to_rgb: full-magnitude horizontal vector is pure red") {
  FlowField f(3, 3);
  f.u.setConstant(2.0f);
  Image img = flow_to_rgb(f, 2.0);
  CHECK(img.planes[0](1, 1) == doctest::Approx(1.0f));
  CHECK(img.planes[1](1, 1) == doctest::Approx(0.0f));
  CHECK(img.planes[2](1, 1) == doctest::Approx(0.0f));
}

TEST_CASE("flow_to_rgb: hue rotates with the field, saturation fixed") {
  Rng rng(39);
  auto hue_sat = [](float r, float g, float b) {
    float mx = std::max({r, g, b}), mn = std::min({r, g, b});
    float delta = mx - mn;
    float hue = 0;
    if (delta > 1e-9f) {
      if (mx == r)
        hue = std::fmod((g - b) / delta, 6.0f);
      else if (mx == g)
        hue = (b - r) / delta + 2.0f;
      else
        hue = (r - g) / delta + 4.0f;
      hue *= 60.0f;
      if (hue < 0) hue += 360.0f;
    }
    float sat = mx <= 0 ? 0.0f : delta / mx;
    return std::make_pair(hue, sat);
  };

  const int w = 8, h = 6;
  FlowField f(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      f.u(y, x) = rng.uniform(-2.0f, 2.0f);
      f.v(y, x) = rng.uniform(-2.0f, 2.0f);
    }
  const double theta = 90.0 * std::numbers::pi / 180.0;
  FlowField rot(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      rot.u(y, x) = static_cast<float>(std::cos(theta) * f.u(y, x) - std::sin(theta) * f.v(y, x));
      rot.v(y, x) = static_cast<float>(std::sin(theta) * f.u(y, x) + std::cos(theta) * f.v(y, x));
    }
  Image a = flow_to_rgb(f, 3.0);
  Image b = flow_to_rgb(rot, 3.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      auto [ha, sa] = hue_sat(a.planes[0](y, x), a.planes[1](y, x), a.planes[2](y, x));
      auto [hb, sb] = hue_sat(b.planes[0](y, x), b.planes[1](y, x), b.planes[2](y, x));
      if (sa < 1e-4f) continue;  // hue undefined at zero magnitude
      float dh = std::fmod(hb - ha + 720.0f, 360.0f);
      CHECK(dh == doctest::Approx(90.0f).epsilon(0.02));
      CHECK(sb == doctest::Approx(sa).epsilon(1e-3));
    }
}

TEST_CASE("flow_to_rgb: rejects non-finite flow") {
  FlowField f(3, 3);
  f.u(1, 1) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(flow_to_rgb(f), InvalidInput);
}

TEST_CASE("flo: bit-exact round trip") {
  Rng rng(40);
  for (int trial = 0; trial < 5; ++trial) {
    int w = 1 + static_cast<int>(rng.index(20));
    int h = 1 + static_cast<int>(rng.index(20));
    FlowField f(w, h);
    f.u = test::random_plane(rng, w, h, -100, 100);
    f.v = test::random_plane(rng, w, h, -100, 100);
    test::TempDir tmp("flo");
    write_flo(f, tmp.file("x.flo"));
    FlowField back = read_flo(tmp.file("x.flo"));
    REQUIRE(back.width() == w);
    REQUIRE(back.height() == h);
    CHECK(std::memcmp(f.u.data(), back.u.data(), sizeof(float) * w * h) == 0);
    CHECK(std::memcmp(f.v.data(), back.v.data(), sizeof(float) * w * h) == 0);
  }
}

TEST_CASE("flo: frozen bytes of the 1x1 (1.5, -2.0) field") {
  FlowField f(1, 1);
  f.u(0, 0) = 1.5f;
  f.v(0, 0) = -2.0f;
  test::TempDir tmp("flo");
  write_flo(f, tmp.file("one.flo"));
  std::ifstream in(tmp.file("one.flo"), std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  // "PIEH" magic, width=1, height=1, 1.5f, -2.0f (all little-endian)
  const unsigned char expect[20] = {0x50, 0x49, 0x45, 0x48, 0x01, 0x00, 0x00,
                                    0x00, 0x01, 0x00, 0x00, 0x00, 0x00, 0x00,
                                    0xC0, 0x3F, 0x00, 0x00, 0x00, 0xC0};
  REQUIRE(bytes.size() == 20);
  for (int i = 0; i < 20; ++i) CHECK(bytes[static_cast<std::size_t>(i)] == expect[i]);
}

TEST_CASE("flo: bad magic and truncation rejected") {
  test::TempDir tmp("flo");
  {
    std::ofstream out(tmp.file("bad.flo"), std::ios::binary);
    float zero = 0.0f;
    std::int32_t one = 1;
    out.write(reinterpret_cast<const char*>(&zero), 4);
    out.write(reinterpret_cast<const char*>(&one), 4);
    out.write(reinterpret_cast<const char*>(&one), 4);
  }
  CHECK_THROWS_AS(read_flo(tmp.file("bad.flo")), FormatError);

  FlowField f(4, 4);
  write_flo(f, tmp.file("trunc.flo"));
  {
    std::filesystem::resize_file(tmp.file("trunc.flo"), 40);
  }
  CHECK_THROWS_AS(read_flo(tmp.file("trunc.flo")), FormatError);
}

TEST_CASE("aee: canonical values and brute force") {
  FlowField gt(4, 4), pred(4, 4);
  CHECK(aee(gt, gt) == doctest::Approx(0.0));
  pred.u.setConstant(3.0f);
  pred.v.setConstant(4.0f);
  CHECK(aee(pred, gt) == doctest::Approx(5.0));

  Rng rng(42);
  FlowField a(4, 4), b(4, 4);
  a.u = test::random_plane(rng, 4, 4, -5, 5);
  a.v = test::random_plane(rng, 4, 4, -5, 5);
  b.u = test::random_plane(rng, 4, 4, -5, 5);
  b.v = test::random_plane(rng, 4, 4, -5, 5);
  double expect = 0;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      expect += std::hypot(static_cast<double>(a.u(y, x)) - b.u(y, x),
                           static_cast<double>(a.v(y, x)) - b.v(y, x));
  expect /= 16.0;
  CHECK(aee(a, b) == doctest::Approx(expect));

  PlaneB empty_mask = PlaneB::Zero(4, 4);
  CHECK_THROWS_AS(aee(a, b, &empty_mask), InvalidInput);
}
