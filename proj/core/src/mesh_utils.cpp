#include <algorithm>
#include <map>
#include <set>
#include <utility>

#include "lfdnet/mesh.hpp"

namespace lfdnet {

double surface_area(const Mesh& mesh) {
  double area = 0.0;
  for (const auto& t : mesh.triangles) {
    const Vec3 a = mesh.vertices[t[0]], b = mesh.vertices[t[1]], c = mesh.vertices[t[2]];
    area += 0.5 * norm(cross(b - a, c - a));
  }
  return area;
}

double signed_volume(const Mesh& mesh) {
  double vol = 0.0;
  for (const auto& t : mesh.triangles) {
    vol += dot(mesh.vertices[t[0]], cross(mesh.vertices[t[1]], mesh.vertices[t[2]]));
  }
  return vol / 6.0;
}

namespace {
using Edge = std::pair<std::uint32_t, std::uint32_t>;
}

bool is_watertight(const Mesh& mesh) {
  std::map<Edge, int> count;
  for (const auto& t : mesh.triangles) {
    for (int i = 0; i < 3; ++i) {
      auto a = t[i], b = t[(i + 1) % 3];
      if (a == b) return false;
      ++count[{std::min(a, b), std::max(a, b)}];
    }
  }
  return std::all_of(count.begin(), count.end(), [](const auto& kv) { return kv.second == 2; });
}

bool is_consistently_wound(const Mesh& mesh) {
  std::map<Edge, int> directed;
  for (const auto& t : mesh.triangles) {
    for (int i = 0; i < 3; ++i) ++directed[{t[i], t[(i + 1) % 3]}];
  }
  for (const auto& [e, n] : directed) {
    if (n != 1) return false;
    auto rev = directed.find({e.second, e.first});
    if (rev == directed.end() || rev->second != 1) return false;
  }
  return true;
}

long euler_characteristic(const Mesh& mesh) {
  std::set<Edge> edges;
  std::set<std::uint32_t> used;
  for (const auto& t : mesh.triangles) {
    for (int i = 0; i < 3; ++i) {
      auto a = t[i], b = t[(i + 1) % 3];
      edges.insert({std::min(a, b), std::max(a, b)});
      used.insert(a);
    }
  }
  return static_cast<long>(used.size()) - static_cast<long>(edges.size()) +
         static_cast<long>(mesh.triangles.size());
}

}  // namespace lfdnet
