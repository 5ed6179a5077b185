#include "lfdnet/render.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <tuple>

#include "lfdnet/error.hpp"
#include "lfdnet/hash.hpp"

namespace lfdnet {

std::size_t ViewImage::count_set() const {
  return static_cast<std::size_t>(std::count_if(pixels.begin(), pixels.end(), [](auto p) { return p != 0; }));
}

std::uint64_t ViewImage::hash() const {
  const std::uint32_t dims[2] = {static_cast<std::uint32_t>(width), static_cast<std::uint32_t>(height)};
  auto h = fnv1a64({reinterpret_cast<const std::uint8_t*>(dims), sizeof(dims)});
  return fnv1a64(pixels, h);
}

void RenderConfig::validate() const {
  if (resolution < 8) throw InvalidArgument("render resolution must be >= 8");
  if (!(fill_fraction > 0.0 && fill_fraction <= 1.0)) throw InvalidArgument("fill_fraction must be in (0, 1]");
  if (view_count != kViewCount) throw InvalidArgument("view_count must be 20");
}

int CameraRig::antipode(int i) const {
  for (int j = 0; j < kViewCount; ++j) {
    if (norm(directions[j] + directions[i]) < 1e-12) return j;
  }
  throw InvalidArgument("camera rig has no antipodal partner for view " + std::to_string(i));
}

void CameraRig::validate() const {
  for (int i = 0; i < kViewCount; ++i) {
    if (std::abs(norm(directions[i]) - 1.0) > 1e-12) throw InvalidArgument("rig direction is not unit length");
    if (std::abs(norm(ups[i]) - 1.0) > 1e-12) throw InvalidArgument("rig up vector is not unit length");
    if (std::abs(dot(directions[i], ups[i])) > 1e-12) throw InvalidArgument("rig up vector not orthogonal");
    antipode(i);
  }
}

CameraRig dodecahedron_rig() {
  const double phi = std::numbers::phi;
  const double iphi = 1.0 / phi;
  std::vector<std::tuple<double, double, double>> verts;
  for (double a : {-1.0, 1.0})
    for (double b : {-1.0, 1.0}) {
      for (double c : {-1.0, 1.0}) verts.emplace_back(a, b, c);
      verts.emplace_back(0.0, a * iphi, b * phi);
      verts.emplace_back(a * iphi, b * phi, 0.0);
      verts.emplace_back(a * phi, 0.0, b * iphi);
    }
  std::sort(verts.begin(), verts.end());

  CameraRig rig;
  const Vec3 z{0, 0, 1}, x{1, 0, 0};
  for (int i = 0; i < kViewCount; ++i) {
    const auto [vx, vy, vz] = verts[static_cast<std::size_t>(i)];
    const Vec3 d = normalized({vx, vy, vz});
    const Vec3 ref = std::abs(dot(d, z)) > 0.99 ? x : z;
    rig.directions[i] = d;
    rig.ups[i] = normalized(ref - dot(ref, d) * d);
  }
  return rig;
}

namespace {

double edge(Point2 a, Point2 b, Point2 p) { return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x); }

void fill_triangle(const Triangle2& t, ViewImage& img, Point2 origin) {
  const auto& [a, b, c] = t;
  if (edge(a, b, c) == 0.0) return;
  // Pixel centers sit at (i + 0.5 - origin); pick the index range whose centers
  // can fall inside the bounding box, then test exactly.
  const double minx = std::min({a.x, b.x, c.x}) + origin.x, maxx = std::max({a.x, b.x, c.x}) + origin.x;
  const double miny = std::min({a.y, b.y, c.y}) + origin.y, maxy = std::max({a.y, b.y, c.y}) + origin.y;
  const int x0 = std::max(0, static_cast<int>(std::floor(minx - 0.5)) - 1);
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(maxx - 0.5)) + 1);
  const int y0 = std::max(0, static_cast<int>(std::floor(miny - 0.5)) - 1);
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(maxy - 0.5)) + 1);
  for (int y = y0; y <= y1; ++y) {
    const double py = (y + 0.5) - origin.y;
    for (int x = x0; x <= x1; ++x) {
      const Point2 p{(x + 0.5) - origin.x, py};
      const double e0 = edge(a, b, p), e1 = edge(b, c, p), e2 = edge(c, a, p);
      if ((e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0)) img.at(x, y) = 255;
    }
  }
}

}  // namespace

ViewImage rasterize_triangles(std::span<const Triangle2> triangles, int resolution, Point2 origin) {
  if (resolution <= 0) throw InvalidArgument("resolution must be positive");
  ViewImage img(resolution, resolution);
  for (const auto& t : triangles) {
    for (const auto& p : t) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw InvalidArgument("non-finite triangle coordinate");
    }
    fill_triangle(t, img, origin);
  }
  return img;
}

ViewImage rasterize_triangles(std::span<const Triangle2> triangles, int resolution) {
  return rasterize_triangles(triangles, resolution, Point2{0.0, 0.0});
}

ViewImage render_view(const NormalizedMesh& mesh, Vec3 direction, Vec3 up, const RenderConfig& cfg) {
  cfg.validate();
  const Vec3 right = cross(direction, up);
  const double scale = cfg.fill_fraction * cfg.resolution / 2.0;
  // Coordinates are kept relative to the image center so that the antipodal
  // view (right negated) produces an exactly mirrored set of edge tests.
  std::vector<Point2> projected;
  projected.reserve(mesh.vertices().size());
  for (const auto& v : mesh.vertices()) projected.push_back({dot(v, right) * scale, -(dot(v, up) * scale)});

  std::vector<Triangle2> tris;
  tris.reserve(mesh.triangles().size());
  for (const auto& t : mesh.triangles()) tris.push_back({projected[t[0]], projected[t[1]], projected[t[2]]});
  const double half = cfg.resolution / 2.0;
  return rasterize_triangles(tris, cfg.resolution, Point2{half, half});
}

std::vector<ViewImage> render_views(const NormalizedMesh& mesh, const CameraRig& rig, const RenderConfig& cfg) {
  cfg.validate();
  std::vector<ViewImage> views;
  views.reserve(kViewCount);
  for (int i = 0; i < kViewCount; ++i) views.push_back(render_view(mesh, rig.directions[i], rig.ups[i], cfg));
  return views;
}

}  // namespace lfdnet
