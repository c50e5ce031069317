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
#include <fstream>

#include "synthetic.hpp"
#include "testutil.hpp"
#include "vedge/matching.hpp"

using namespace vedge;

namespace {

// a(x, y) corresponds to b(x+dx, y+dy): both frames crop one noise field.
std::pair<Image, Image> shifted_pair(Rng& rng, int w, int h, int dx, int dy) {
  int bw = w + std::abs(dx), bh = h + std::abs(dy);
  PlaneF field = test::noise_field(rng, bw, bh, 4, 3);
  Image a(w, h, 1), b(w, h, 1);
  int ax = dx > 0 ? dx : 0, ay = dy > 0 ? dy : 0;
  int bx = dx > 0 ? 0 : -dx, by = dy > 0 ? 0 : -dy;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      a.planes[0](y, x) = field(ay + y, ax + x);
      b.planes[0](y, x) = field(by + y, bx + x);
    }
  // a(x,y) = field(ay+y, ax+x) = b(y - by + ay, x - bx + ax); with the
  // conventions above that is b(y + dy, x + dx).
  return {a, b};
}

MatchSet uniform_matches(int n, float dx, float dy, int dims = 64) {
  MatchSet ms;
  ms.source_width = ms.target_width = dims;
  ms.source_height = ms.target_height = dims;
  for (int i = 0; i < n; ++i) {
    float x = static_cast<float>((i * 7) % (dims - 20)) + 2;
    float y = static_cast<float>((i * 13) % (dims - 20)) + 2;
    ms.matches.push_back({x, y, x + dx, y + dy, 1.0f});
  }
  return ms;
}

}  // namespace

TEST_CASE("block_match: identical frames give zero displacement") {
  Rng rng(5);
  Image a = test::random_image(rng, 48, 40, 1);
  MatchSet ms = block_match(a, a);
  CHECK(ms.size() > 20);
  for (const Match& m : ms.matches) {
    CHECK(m.dx() == 0.0f);
    CHECK(m.dy() == 0.0f);
  }
}

TEST_CASE("block_match: exact on a pure (3,0) shift") {
  Rng rng(6);
  auto [a, b] = shifted_pair(rng, 64, 48, 3, 0);
  MatchSet ms = block_match(a, b);
  CHECK(ms.size() > 30);
  for (const Match& m : ms.matches) {
    CHECK(m.dx() == 3.0f);
    CHECK(m.dy() == 0.0f);
  }
}

TEST_CASE("block_match: exact on random integer shifts (property)") {
  Rng rng(7);
  for (int trial = 0; trial < 6; ++trial) {
    int dx = rng.range(-5, 5);
    int dy = rng.range(-5, 5);
    auto [a, b] = shifted_pair(rng, 56, 56, dx, dy);
    MatchSet ms = block_match(a, b);
    CHECK(ms.size() > 10);
    for (const Match& m : ms.matches) {
      CHECK(m.dx() == static_cast<float>(dx));
      CHECK(m.dy() == static_cast<float>(dy));
    }
  }
}

TEST_CASE("block_match: textureless images give an empty set") {
  Image a(40, 40, 1), b(40, 40, 1);
  a.planes[0].setConstant(0.5f);
  b.planes[0].setConstant(0.5f);
  CHECK(block_match(a, b).empty());
}

TEST_CASE("block_match: dimension mismatch rejected") {
  Rng rng(8);
  Image a = test::random_image(rng, 40, 40, 1);
  Image b = test::random_image(rng, 42, 40, 1);
  CHECK_THROWS_AS(block_match(a, b), InvalidInput);
}

TEST_CASE("block_match: emitted matches pass the forward-backward check") {
  Rng rng(9);
  auto [a, b] = shifted_pair(rng, 56, 48, 2, -3);
  BlockMatchParams params;
  MatchSet ms = block_match(a, b, params);
  CHECK(ms.size() > 10);
  for (const Match& m : ms.matches) {
    auto back = match_point(b, a, static_cast<int>(m.x2), static_cast<int>(m.y2), params);
    REQUIRE(back.has_value());
    float ex = back->x2 - m.x1, ey = back->y2 - m.y1;
    CHECK(std::sqrt(ex * ex + ey * ey) <= params.fwd_bwd_tol);
  }
}

TEST_CASE("match text format: round trip") {
  Rng rng(10);
  MatchSet ms = uniform_matches(37, 2.5f, -1.25f);
  for (Match& m : ms.matches) m.score = rng.uniform(0.0f, 2.0f);
  test::TempDir tmp("matches");
  write_matches(ms, tmp.file("m.txt"));
  MatchSet back = read_matches(tmp.file("m.txt"), 64, 64, 64, 64);
  REQUIRE(back.size() == ms.size());
  for (std::size_t i = 0; i < ms.size(); ++i) {
    CHECK(back.matches[i].x1 == ms.matches[i].x1);
    CHECK(back.matches[i].y1 == ms.matches[i].y1);
    CHECK(back.matches[i].x2 == ms.matches[i].x2);
    CHECK(back.matches[i].y2 == ms.matches[i].y2);
    CHECK(back.matches[i].score == ms.matches[i].score);
  }
}

TEST_CASE("match text format: single line semantics") {
  test::TempDir tmp("matches");
  {
    std::ofstream out(tmp.file("ok.txt"));
    out << "# comment\n10 12 13 12 0.9\n";
  }
  MatchSet ms = read_matches(tmp.file("ok.txt"), 20, 20, 20, 20);
  REQUIRE(ms.size() == 1);
  CHECK(ms.matches[0].x1 == 10.0f);
  CHECK(ms.matches[0].y1 == 12.0f);
  CHECK(ms.matches[0].x2 == 13.0f);
  CHECK(ms.matches[0].y2 == 12.0f);
  CHECK(ms.matches[0].score == 0.9f);
}

TEST_CASE("match text format: out-of-bounds coordinate names the line") {
  test::TempDir tmp("matches");
  {
    std::ofstream out(tmp.file("bad.txt"));
    out << "1 1 2 2 0.5\n10 12 25 12 0.9\n";
  }
  try {
    read_matches(tmp.file("bad.txt"), 20, 20, 20, 20);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
}

TEST_CASE("match text format: malformed line rejected") {
  test::TempDir tmp("matches");
  {
    std::ofstream out(tmp.file("bad.txt"));
    out << "1 2 3\n";
  }
  CHECK_THROWS_AS(read_matches(tmp.file("bad.txt"), 20, 20, 20, 20), ParseError);
}

TEST_CASE("match text format: duplicate source locations rejected") {
  test::TempDir tmp("matches");
  {
    std::ofstream out(tmp.file("dup.txt"));
    out << "5 5 6 6 1.0\n5 5 7 7 1.0\n";
  }
  CHECK_THROWS_AS(read_matches(tmp.file("dup.txt"), 20, 20, 20, 20), ParseError);
}

TEST_CASE("filter_frame_pair: empty and small sets are insufficient") {
  MatchSet empty;
  CHECK(filter_frame_pair(empty).reason == RejectReason::Insufficient);
  MatchSet few = uniform_matches(10, 3, 0);
  CHECK(filter_frame_pair(few).reason == RejectReason::Insufficient);
}

TEST_CASE("filter_frame_pair: slow motion rejected") {
  MatchSet ms = uniform_matches(300, 1.0f, 1.0f);  // max displacement ~1.41 < 2
  FilterDecision d = filter_frame_pair(ms);
  CHECK_FALSE(d.accepted);
  CHECK(d.reason == RejectReason::Slow);
}

TEST_CASE("filter_frame_pair: large motion rejected") {
  MatchSet ms;
  ms.source_width = ms.target_width = 128;
  ms.source_height = ms.target_height = 128;
  Rng rng(12);
  for (int i = 0; i < 300; ++i) {
    float x = rng.uniform(0.0f, 100.0f), y = rng.uniform(0.0f, 100.0f);
    // alternating directions so the pair is not translational
    float dx = (i % 2 ? 20.0f : -20.0f);
    ms.matches.push_back({x, y, x + dx, y, 1.0f});
  }
  FilterDecision d = filter_frame_pair(ms);
  CHECK(d.reason == RejectReason::Large);
  CHECK(d.mean_displacement == doctest::Approx(20.0f));
}

TEST_CASE("filter_frame_pair: global translation rejected") {
  MatchSet ms = uniform_matches(400, 7.0f, 3.0f);
  FilterDecision d = filter_frame_pair(ms);
  CHECK(d.reason == RejectReason::Translational);
  CHECK(d.translation_inlier_frac == doctest::Approx(1.0f));
}

TEST_CASE("filter_frame_pair: mixed motion accepted") {
  MatchSet ms;
  ms.source_width = ms.target_width = 128;
  ms.source_height = ms.target_height = 128;
  for (int i = 0; i < 400; ++i) {
    float x = static_cast<float>((i * 5) % 100) + 2;
    float y = static_cast<float>((i * 11) % 100) + 2;
    if (i % 2)
      ms.matches.push_back({x, y, x + 5, y, 1.0f});
    else
      ms.matches.push_back({x, y, x, y + 5, 1.0f});
  }
  FilterDecision d = filter_frame_pair(ms);
  CHECK(d.accepted);
}

TEST_CASE("filter_frame_pair: doubling displacements cannot flip large to accept") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    MatchSet ms;
    ms.source_width = ms.target_width = 512;
    ms.source_height = ms.target_height = 512;
    int n = 250 + static_cast<int>(rng.index(100));
    for (int i = 0; i < n; ++i) {
      float x = rng.uniform(0.0f, 200.0f), y = rng.uniform(0.0f, 200.0f);
      float dx = rng.uniform(-25.0f, 25.0f), dy = rng.uniform(-25.0f, 25.0f);
      ms.matches.push_back({x, y, x + dx, y + dy, 1.0f});
    }
    if (filter_frame_pair(ms).reason != RejectReason::Large) continue;
    MatchSet doubled = ms;
    for (Match& m : doubled.matches) {
      m.x2 = m.x1 + 2 * m.dx();
      m.y2 = m.y1 + 2 * m.dy();
    }
    CHECK_FALSE(filter_frame_pair(doubled).accepted);
  }
}
