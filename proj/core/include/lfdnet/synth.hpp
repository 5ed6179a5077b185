#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lfdnet/manifest.hpp"
#include "lfdnet/mesh.hpp"

namespace lfdnet::synth {

inline constexpr int kDefaultSegments = 24;

struct ParamDesc {
  std::string name;
  double min = 0, max = 0;
  bool integer = false;  // sampled as a real, floored by the generator
};

struct Family {
  std::string name;
  std::vector<ParamDesc> params;
};

/// Built-in families in their fixed order: cuboid, thin_plate, post, pipe,
/// elbow, l_block, hex_nut, spoked_wheel, gear.
const std::vector<Family>& families();
/// Throws InvalidArgument("unknown family ...").
const Family& family(std::string_view name);

/// Midpoint of every parameter range.
std::vector<double> default_params(const Family& f);
/// Uniform draw for model `index` of the family; depends only on (seed, family name, index).
std::vector<double> sample_params(const Family& f, std::uint64_t seed, std::size_t index);

/// Closed, consistently wound (outward) mesh. Throws InvalidArgument on a
/// wrong parameter count or an out-of-range parameter. `segments` tessellates
/// full circles (>= 6).
Mesh generate(std::string_view family, std::span<const double> params, int segments = kDefaultSegments);

// Building blocks, exposed for tests.
/// Box [0,l] x [0,b] x [0,h]: 8 vertices, 12 triangles.
Mesh cuboid(double l, double b, double h);
/// Simple polygon (either orientation) extruded along z over [z0, z1].
Mesh prism(const std::vector<std::array<double, 2>>& polygon, double z0, double z1);
/// Closed tube between matching loops: outer[j] and inner[j] are cross-section
/// rings with the same vertex count; consecutive rings are joined, the first
/// and last are closed by annular caps. Genus 1.
Mesh tube(const std::vector<std::vector<Vec3>>& outer, const std::vector<std::vector<Vec3>>& inner);
/// Triangulates a simple polygon; triangles follow the polygon's orientation.
std::vector<std::array<std::size_t, 3>> ear_clip(const std::vector<std::array<double, 2>>& polygon);

struct CorpusSpec {
  std::vector<std::string> families;  // names; empty = all built-ins
  int models_per_family = 40;
  std::map<std::string, int> model_count_overrides;  // family -> model count
  std::uint64_t seed = 1;
  int segments = kDefaultSegments;

  int count_for(const std::string& family) const;
  void validate() const;
};

/// Writes <out>/<family>/<family>_NNN.stl for every model plus
/// <out>/manifest.csv (`path,label,split`, paths relative to <out>).
/// Output bytes are a pure function of the spec.
Manifest generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir, int jobs = 1);

}  // namespace lfdnet::synth
