#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lfdnet/mesh.hpp"

namespace lfdnet {

inline constexpr int kViewCount = 20;

/// Twenty orthographic cameras on the vertices of a regular dodecahedron.
/// View i looks along directions[i]; its camera sits at -directions[i], which
/// is itself a vertex, so the set of directions is closed under negation.
struct CameraRig {
  std::array<Vec3, kViewCount> directions;
  std::array<Vec3, kViewCount> ups;

  Vec3 right(int i) const { return cross(directions[i], ups[i]); }
  /// Index of the view looking along -directions[i].
  int antipode(int i) const;
  void validate() const;
};

/// Binary silhouette, row-major, top row first. Pixels are 0 or 255.
struct ViewImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  ViewImage() = default;
  ViewImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count_set() const;
  std::uint64_t hash() const;
  friend bool operator==(const ViewImage&, const ViewImage&) = default;
};

struct RenderConfig {
  int resolution = 256;
  /// Fraction of the image side covered by the projected unit sphere.
  double fill_fraction = 0.9;
  int view_count = kViewCount;

  void validate() const;
};

struct Point2 {
  double x = 0, y = 0;
};
using Triangle2 = std::array<Point2, 3>;

/// The 20 normalized dodecahedron vertices in lexicographic order of their
/// unnormalized coordinates, each with an up vector from global +z (or +x
/// near the poles) projected onto the image plane.
CameraRig dodecahedron_rig();

/// A pixel (x, y) is set iff its center (x + 0.5, y + 0.5) lies inside or on
/// the boundary of some triangle. Either winding; degenerate triangles draw nothing.
ViewImage rasterize_triangles(std::span<const Triangle2> triangles, int resolution);

/// Same rule, with triangle and pixel-center coordinates measured from `origin`.
ViewImage rasterize_triangles(std::span<const Triangle2> triangles, int resolution, Point2 origin);

ViewImage render_view(const NormalizedMesh& mesh, Vec3 direction, Vec3 up, const RenderConfig& cfg);
std::vector<ViewImage> render_views(const NormalizedMesh& mesh, const CameraRig& rig, const RenderConfig& cfg);

/// Binary PGM ("P5", maxval 255).
std::vector<std::uint8_t> encode_pgm(const ViewImage& img);
ViewImage decode_pgm(std::span<const std::uint8_t> bytes);
void write_pgm(const ViewImage& img, const std::filesystem::path& path);
ViewImage read_pgm(const std::filesystem::path& path);

}  // namespace lfdnet
