#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "checks.hpp"
#include "lfdnet/error.hpp"
#include "lfdnet/render.hpp"
#include "lfdnet/synth.hpp"

using namespace lfdnet;

namespace {

// Icosahedron subdivided `levels` times, vertices pushed onto the unit sphere.
Mesh icosphere(int levels) {
  const double p = (1 + std::sqrt(5.0)) / 2;
  Mesh m;
  m.vertices = {{-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0}, {0, -1, p}, {0, 1, p},
                {0, -1, -p}, {0, 1, -p}, {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1}};
  m.triangles = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                 {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
                 {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
  for (auto& v : m.vertices) v = normalized(v);
  for (int l = 0; l < levels; ++l) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      m.vertices.push_back(normalized(m.vertices[a] + m.vertices[b]));
      const auto idx = static_cast<std::uint32_t>(m.vertices.size() - 1);
      mid.emplace(key, idx);
      return idx;
    };
    std::vector<Triangle> next;
    for (const auto& t : m.triangles) {
      const auto a = midpoint(t[0], t[1]), b = midpoint(t[1], t[2]), c = midpoint(t[2], t[0]);
      next.push_back({t[0], a, c});
      next.push_back({t[1], b, a});
      next.push_back({t[2], c, b});
      next.push_back({a, b, c});
    }
    m.triangles = std::move(next);
  }
  return m;
}

ViewImage mirrored(const ViewImage& img) {
  ViewImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out.at(img.width - 1 - x, y) = img.at(x, y);
  return out;
}

}  // namespace

TEST(CameraRig, DodecahedronVertices) {
  const auto rig = dodecahedron_rig();
  EXPECT_NO_THROW(rig.validate());
  EXPECT_TRUE(lfdnet::testing::check_rig(rig, 1e-12).ok(1e-12));
  // Lexicographic order of unnormalized coordinates equals lexicographic order
  // of the normalized ones (common positive factor).
  for (int i = 0; i + 1 < kViewCount; ++i) {
    const auto& a = rig.directions[i];
    const auto& b = rig.directions[i + 1];
    EXPECT_TRUE(std::tie(a.x, a.y, a.z) < std::tie(b.x, b.y, b.z)) << i;
  }
  for (int i = 0; i < kViewCount; ++i) {
    EXPECT_NEAR(norm(rig.ups[i]), 1.0, 1e-12);
    EXPECT_NEAR(dot(rig.ups[i], rig.directions[i]), 0.0, 1e-12);
    EXPECT_GT(rig.ups[i].z, 0.0);
    const int j = rig.antipode(i);
    EXPECT_EQ(rig.directions[j], -rig.directions[i]);
  }
}

TEST(Rasterize, FullCoverSetsEveryPixel) {
  const int res = 16;
  const Triangle2 t{Point2{-10, -10}, Point2{3.0 * res, -10}, Point2{-10, 3.0 * res}};
  const auto img = rasterize_triangles(std::span(&t, 1), res);
  EXPECT_EQ(img.count_set(), static_cast<std::size_t>(res * res));
  EXPECT_TRUE(std::all_of(img.pixels.begin(), img.pixels.end(), [](auto p) { return p == 255; }));
}

TEST(Rasterize, CollinearTriangleDrawsNothing) {
  const Triangle2 t{Point2{0.5, 0.5}, Point2{3.5, 3.5}, Point2{7.5, 7.5}};
  EXPECT_EQ(rasterize_triangles(std::span(&t, 1), 8).count_set(), 0u);
}

TEST(Rasterize, SmallTriangleMatchesOracleInBothWindings) {
  Triangle2 t{Point2{1, 1}, Point2{6, 1}, Point2{1, 6}};
  const auto oracle = lfdnet::testing::raster_oracle(std::span(&t, 1), 8);
  EXPECT_EQ(rasterize_triangles(std::span(&t, 1), 8), oracle);
  std::swap(t[1], t[2]);
  EXPECT_EQ(rasterize_triangles(std::span(&t, 1), 8), oracle);
  // Centers (1.5..4.5) on or under the hypotenuse x + y <= 7: 1+2+3+4+5 pixels.
  EXPECT_EQ(oracle.count_set(), 15u);
}

TEST(Rasterize, RandomTrianglesMatchOracle) {
  const auto r = lfdnet::testing::rasterizer_vs_oracle(21, 300);
  EXPECT_EQ(r.mismatched, 0u);
  EXPECT_GT(r.pixels, 0u);
}

TEST(Rasterize, AreaInvariantUnderWholePixelTranslation) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(12, 20);
  for (int trial = 0; trial < 50; ++trial) {
    const Triangle2 t{Point2{u(rng), u(rng)}, Point2{u(rng), u(rng)}, Point2{u(rng), u(rng)}};
    const auto base = rasterize_triangles(std::span(&t, 1), 32).count_set();
    for (int dx : {-7, 3, 9}) {
      for (int dy : {-5, 0, 6}) {
        Triangle2 s = t;
        for (auto& p : s) p = {p.x + dx, p.y + dy};
        EXPECT_EQ(rasterize_triangles(std::span(&s, 1), 32).count_set(), base);
      }
    }
  }
}

TEST(Pgm, EncodesHeaderAndPixels) {
  ViewImage img(2, 2);
  img.pixels = {0, 255, 255, 0};
  const auto bytes = encode_pgm(img);
  const std::string header = "P5\n2 2\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 4);
  EXPECT_TRUE(std::equal(header.begin(), header.end(), bytes.begin()));
  EXPECT_EQ(bytes[header.size() + 1], 255);
  EXPECT_EQ(bytes[header.size() + 3], 0);
  EXPECT_EQ(decode_pgm(bytes), img);
}

TEST(Pgm, RoundTripThroughFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "lfdnet_pgm_test";
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    ViewImage img(1 + static_cast<int>(rng() % 40), 1 + static_cast<int>(rng() % 40));
    for (auto& p : img.pixels) p = rng() % 2 ? 255 : 0;
    const auto path = dir / "img.pgm";
    write_pgm(img, path);
    EXPECT_EQ(read_pgm(path), img);
  }
  std::filesystem::remove_all(dir);
}

TEST(Pgm, TruncatedAndMalformedInputs) {
  std::string s = "P5\n4 4\n255\n" + std::string(15, '\0');
  std::vector<std::uint8_t> bytes(s.begin(), s.end());
  try {
    decode_pgm(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
  const std::string bad = "P2\n1 1\n255\n0";
  EXPECT_THROW(decode_pgm(std::vector<std::uint8_t>(bad.begin(), bad.end())), FormatError);
}

TEST(RenderViews, UnitSphereIsACenteredDisk) {
  const auto sphere = normalize(icosphere(4));
  const RenderConfig cfg;  // 256 px, fill 0.9
  const auto views = render_views(sphere, dodecahedron_rig(), cfg);
  ASSERT_EQ(views.size(), 20u);
  const double expected = 0.9 * 256;
  for (const auto& img : views) {
    int x0 = img.width, x1 = -1, y0 = img.height, y1 = -1;
    double cx = 0, cy = 0;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        if (img.at(x, y)) {
          x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
          cx += x + 0.5, cy += y + 0.5;
        }
    const double n = static_cast<double>(img.count_set());
    EXPECT_NEAR(x1 - x0 + 1, expected, 2.0);
    EXPECT_NEAR(y1 - y0 + 1, expected, 2.0);
    EXPECT_NEAR(cx / n, 128.0, 0.5);
    EXPECT_NEAR(cy / n, 128.0, 0.5);
    // Area of a disk of that diameter.
    EXPECT_NEAR(n, M_PI * expected * expected / 4, 0.01 * n);
  }
}

TEST(RenderViews, AntipodalViewsAreMirrorImages) {
  const auto rig = dodecahedron_rig();
  RenderConfig cfg;
  cfg.resolution = 96;
  for (const auto& f : synth::families()) {
    const auto mesh = normalize(synth::generate(f.name, synth::sample_params(f, 3, 1)));
    const auto views = render_views(mesh, rig, cfg);
    for (int i = 0; i < kViewCount; ++i) EXPECT_EQ(views[rig.antipode(i)], mirrored(views[i])) << f.name << " " << i;
  }
}

TEST(RenderViews, DeterministicAndPermutedByRigSymmetry) {
  const auto rig = dodecahedron_rig();
  RenderConfig cfg;
  cfg.resolution = 64;
  const auto m = synth::generate("l_block", synth::default_params(synth::family("l_block")));
  const auto n = normalize(m);
  const auto a = render_views(n, rig, cfg);
  EXPECT_EQ(a, render_views(n, rig, cfg));

  // Half turn about z maps the vertex set onto itself and keeps +z fixed.
  Mesh turned = m;
  for (auto& v : turned.vertices) v = {-v.x, -v.y, v.z};
  const auto b = render_views(normalize(turned), rig, cfg);
  std::multiset<std::uint64_t> ha, hb;
  for (const auto& img : a) ha.insert(img.hash());
  for (const auto& img : b) hb.insert(img.hash());
  EXPECT_EQ(ha, hb);
}

TEST(RenderConfig, Validation) {
  RenderConfig cfg;
  cfg.resolution = 4;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.fill_fraction = 0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.fill_fraction = 1.0;
  EXPECT_NO_THROW(cfg.validate());
}
