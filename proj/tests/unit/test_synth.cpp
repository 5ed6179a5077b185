#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <set>

#include "lfdnet/error.hpp"
#include "lfdnet/manifest.hpp"
#include "lfdnet/mesh.hpp"
#include "lfdnet/synth.hpp"

using namespace lfdnet;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(Synth, CuboidTopologyAndBox) {
  const auto m = synth::cuboid(2.5, 1.25, 0.75);
  EXPECT_EQ(m.vertices.size(), 8u);
  EXPECT_EQ(m.triangles.size(), 12u);
  const auto box = bounding_box(m);
  EXPECT_EQ(box.hi.x - box.lo.x, 2.5);
  EXPECT_EQ(box.hi.y - box.lo.y, 1.25);
  EXPECT_EQ(box.hi.z - box.lo.z, 0.75);
  EXPECT_NEAR(surface_area(synth::cuboid(1, 1, 1)), 6.0, 1e-12);
  EXPECT_NEAR(signed_volume(m), 2.5 * 1.25 * 0.75, 1e-12);
}

TEST(Synth, TubeIsGenusOne) {
  for (int n : {6, 12, 31}) {
    std::vector<Vec3> outer, inner;
    for (int j = 0; j < n; ++j) {
      const double a = 2 * M_PI * j / n;
      outer.push_back({2 * std::cos(a), 2 * std::sin(a), 0});
      inner.push_back({std::cos(a), std::sin(a), 0});
    }
    std::vector<std::vector<Vec3>> o{outer}, i{inner};
    for (auto& v : outer) v.z = 3;
    for (auto& v : inner) v.z = 3;
    o.push_back(outer);
    i.push_back(inner);
    const auto m = synth::tube(o, i);
    EXPECT_EQ(euler_characteristic(m), 0) << n;
    EXPECT_TRUE(is_watertight(m));
    EXPECT_TRUE(is_consistently_wound(m));
    // V = 4n, F = 8n from the construction (two walls, two annular caps).
    EXPECT_EQ(m.vertices.size(), static_cast<std::size_t>(4 * n));
    EXPECT_EQ(m.triangles.size(), static_cast<std::size_t>(8 * n));
    EXPECT_NEAR(signed_volume(m), 3 * n / 2.0 * std::sin(2 * M_PI / n) * (4 - 1), 1e-9);
  }
}

TEST(Synth, EarClipTriangulatesConcavePolygons) {
  const std::vector<std::array<double, 2>> l_shape{{0, 0}, {3, 0}, {3, 1}, {1, 1}, {1, 3}, {0, 3}};
  const auto tris = synth::ear_clip(l_shape);
  ASSERT_EQ(tris.size(), 4u);
  double area = 0;
  for (const auto& t : tris) {
    const auto &a = l_shape[t[0]], &b = l_shape[t[1]], &c = l_shape[t[2]];
    const double s = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    EXPECT_GT(s, 0.0);
    area += s / 2;
  }
  EXPECT_NEAR(area, 5.0, 1e-12);
  const auto prism = synth::prism(l_shape, 0, 2);
  EXPECT_TRUE(is_watertight(prism));
  EXPECT_NEAR(signed_volume(prism), 10.0, 1e-12);
}

TEST(Synth, EveryFamilyIsClosedAndOutward) {
  ASSERT_GE(synth::families().size(), 8u);
  for (const auto& f : synth::families()) {
    for (std::size_t i = 0; i < 12; ++i) {
      const auto params = i == 0 ? synth::default_params(f) : synth::sample_params(f, 17, i);
      const auto m = synth::generate(f.name, params);
      EXPECT_NO_THROW(m.validate());
      EXPECT_TRUE(is_watertight(m)) << f.name << " " << i;
      EXPECT_TRUE(is_consistently_wound(m)) << f.name << " " << i;
      EXPECT_GT(signed_volume(m), 0.0) << f.name << " " << i;
      EXPECT_NO_THROW(normalize(m));
    }
  }
}

TEST(Synth, ExpectedGenus) {
  // Solid families are spheres, bored ones tori. The wheel is rim + hub (two
  // tori) + one closed prism per spoke, overlapping rather than fused.
  auto chi = [](const std::string& name, std::vector<double> p) { return euler_characteristic(synth::generate(name, p)); };
  const auto& wheel = synth::family("spoked_wheel");
  auto p = synth::default_params(wheel);
  for (std::size_t k = 0; k < wheel.params.size(); ++k)
    if (wheel.params[k].name == "spokes") p[k] = 5.0;
  EXPECT_EQ(chi("spoked_wheel", p), 2 * 5);
  EXPECT_EQ(chi("cuboid", synth::default_params(synth::family("cuboid"))), 2);
  EXPECT_EQ(chi("l_block", synth::default_params(synth::family("l_block"))), 2);
  EXPECT_EQ(chi("pipe", synth::default_params(synth::family("pipe"))), 0);
  EXPECT_EQ(chi("hex_nut", synth::default_params(synth::family("hex_nut"))), 0);
  EXPECT_EQ(chi("elbow", synth::default_params(synth::family("elbow"))), 0);
}

TEST(Synth, ParameterChecks) {
  const auto& f = synth::family("cuboid");
  auto p = synth::default_params(f);
  p[0] = f.params[0].max * 2;
  EXPECT_THROW(synth::generate("cuboid", p), InvalidArgument);
  p.pop_back();
  EXPECT_THROW(synth::generate("cuboid", p), InvalidArgument);
  EXPECT_THROW(synth::family("teapot"), InvalidArgument);
}

TEST(Synth, SamplingIsDeterministicAndInRange) {
  for (const auto& f : synth::families()) {
    for (std::size_t i = 0; i < 20; ++i) {
      const auto a = synth::sample_params(f, 99, i);
      EXPECT_EQ(a, synth::sample_params(f, 99, i));
      ASSERT_EQ(a.size(), f.params.size());
      for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_GE(a[k], f.params[k].min);
        EXPECT_LE(a[k], f.params[k].max);
      }
    }
    EXPECT_NE(synth::sample_params(f, 99, 0), synth::sample_params(f, 100, 0));
  }
}

TEST(Synth, CorpusCountsAndDeterminism) {
  TempDir a("lfdnet_synth_a"), b("lfdnet_synth_b");
  synth::CorpusSpec spec;
  spec.families = {"cuboid", "thin_plate", "post", "pipe", "elbow", "l_block", "hex_nut", "gear"};
  spec.models_per_family = 40;
  spec.seed = 5;
  const auto ma = synth::generate_corpus(spec, a.path, 2);
  const auto mb = synth::generate_corpus(spec, b.path, 1);
  EXPECT_EQ(ma.rows.size(), 320u);
  EXPECT_EQ(ma.labels().size(), 8u);
  EXPECT_EQ(slurp(a.path / "manifest.csv"), slurp(b.path / "manifest.csv"));
  std::set<std::string> paths;
  for (const auto& r : ma.rows) {
    EXPECT_TRUE(paths.insert(r.path).second);
    EXPECT_EQ(slurp(a.path / r.path), slurp(b.path / r.path)) << r.path;
    EXPECT_NO_THROW(normalize(load_mesh(a.path / r.path))) << r.path;
  }
}

TEST(Synth, CorpusSpecValidation) {
  synth::CorpusSpec spec;
  spec.models_per_family = 1;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = {};
  spec.families = {"cuboid", "nope"};
  EXPECT_ANY_THROW(spec.validate());
  spec = {};
  spec.model_count_overrides["pipe"] = 3;
  EXPECT_NO_THROW(spec.validate());
  EXPECT_EQ(spec.count_for("pipe"), 3);
  EXPECT_EQ(spec.count_for("post"), 40);
}
