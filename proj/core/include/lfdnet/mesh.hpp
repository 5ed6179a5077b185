#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace lfdnet {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
double norm(Vec3 a);
Vec3 normalized(Vec3 a);

using Triangle = std::array<std::uint32_t, 3>;

/// Indexed triangle mesh in model coordinates.
///
/// Invariants (checked by validate()): at least one triangle, every index in
/// range, all coordinates finite.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;

  void validate() const;
};

/// A mesh in canonical pose: bounding-box center at the origin, farthest
/// vertex at distance 1. Only normalize() produces one.
class NormalizedMesh {
 public:
  const Mesh& mesh() const noexcept { return mesh_; }
  const std::vector<Vec3>& vertices() const noexcept { return mesh_.vertices; }
  const std::vector<Triangle>& triangles() const noexcept { return mesh_.triangles; }

 private:
  friend NormalizedMesh normalize(const Mesh& mesh);
  explicit NormalizedMesh(Mesh m) : mesh_(std::move(m)) {}
  Mesh mesh_;
};

/// Binary (80-byte header, u32 count, 50-byte facets) or ASCII STL.
/// Vertices are deduplicated by exact bitwise equality; facet normals are ignored.
Mesh parse_stl(std::span<const std::uint8_t> bytes);

/// Wavefront OBJ: `v` and `f` records, polygons fan-triangulated from their
/// first vertex, negative indices relative to the end of the vertex list.
Mesh parse_obj(std::string_view text);

/// Sniffs content (not the extension): "solid" + parseable ASCII body => ASCII
/// STL, a size-consistent binary STL => binary STL, otherwise OBJ.
Mesh parse_mesh(std::span<const std::uint8_t> bytes);
Mesh load_mesh(const std::filesystem::path& path);

/// (v - c) / r with c the bounding-box center and r the largest distance to c.
/// A mesh already in canonical pose (within 1e-12) is returned unchanged, which
/// makes the operation idempotent bitwise.
NormalizedMesh normalize(const Mesh& mesh);

/// Binary STL with computed facet normals and a fixed header.
std::vector<std::uint8_t> encode_stl_binary(const Mesh& mesh, std::string_view header = {});
void write_stl_binary(const Mesh& mesh, const std::filesystem::path& path);

// Geometry checks used by the generators and their tests.
double surface_area(const Mesh& mesh);
double signed_volume(const Mesh& mesh);
/// Every undirected edge is shared by exactly two triangles.
bool is_watertight(const Mesh& mesh);
/// Every directed edge appears once and its reverse appears once.
bool is_consistently_wound(const Mesh& mesh);
/// V - E + F counting unique undirected edges.
long euler_characteristic(const Mesh& mesh);

struct Aabb {
  Vec3 lo, hi;
};
Aabb bounding_box(const Mesh& mesh);

}  // namespace lfdnet
