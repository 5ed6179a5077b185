#include "lfdnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <set>

#include "lfdnet/error.hpp"
#include "lfdnet/parallel.hpp"
#include "lfdnet/random.hpp"

namespace lfdnet::synth {

using Pt = std::array<double, 2>;

const std::vector<Family>& families() {
  static const std::vector<Family> all = {
      {"cuboid", {{"length", 20, 40}, {"width", 20, 40}, {"height", 20, 40}}},
      {"thin_plate", {{"length", 40, 80}, {"width", 30, 60}, {"thickness", 1, 3}}},
      {"post", {{"diameter", 6, 12}, {"length_ratio", 4, 12}}},
      {"pipe", {{"outer_diameter", 20, 40}, {"bore_ratio", 0.6, 0.85}, {"length_ratio", 1.2, 3.0}}},
      {"elbow", {{"tube_diameter", 10, 20}, {"bore_ratio", 0.6, 0.85}, {"bend_ratio", 1.0, 2.5}}},
      {"l_block", {{"leg_a", 30, 60}, {"leg_b", 30, 60}, {"thickness_ratio", 0.2, 0.45}, {"depth", 15, 40}}},
      {"hex_nut", {{"across_flats", 10, 30}, {"bore_ratio", 0.45, 0.65}, {"thickness_ratio", 0.5, 0.9}}},
      {"spoked_wheel",
       {{"diameter", 60, 120},
        {"rim_ratio", 0.08, 0.15},
        {"thickness_ratio", 0.08, 0.15},
        {"spokes", 3, 6.999, true},
        {"spoke_ratio", 0.06, 0.12},
        {"hub_ratio", 0.15, 0.25}}},
      {"gear",
       {{"diameter", 40, 80},
        {"teeth", 12, 24.999, true},
        {"tooth_depth_ratio", 0.08, 0.15},
        {"thickness_ratio", 0.15, 0.35},
        {"bore_ratio", 0.15, 0.3}}},
  };
  return all;
}

const Family& family(std::string_view name) {
  for (const auto& f : families())
    if (f.name == name) return f;
  std::string known;
  for (const auto& f : families()) known += (known.empty() ? "" : ", ") + f.name;
  throw InvalidArgument("unknown family '" + std::string(name) + "' (known: " + known + ")");
}

std::vector<double> default_params(const Family& f) {
  std::vector<double> p;
  for (const auto& d : f.params) p.push_back(d.min + (d.max - d.min) / 2);
  return p;
}

std::vector<double> sample_params(const Family& f, std::uint64_t seed, std::size_t index) {
  std::mt19937_64 rng(mix_seed(mix_seed(seed, f.name), index));
  std::vector<double> p;
  for (const auto& d : f.params) p.push_back(d.min + (d.max - d.min) * uniform_real(rng));
  return p;
}

namespace {

void append(Mesh& dst, const Mesh& src) {
  const auto base = static_cast<std::uint32_t>(dst.vertices.size());
  dst.vertices.insert(dst.vertices.end(), src.vertices.begin(), src.vertices.end());
  for (auto t : src.triangles) dst.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
}

// Construction fixes the winding to be consistent; this picks the outward side.
void orient_outward(Mesh& m) {
  if (signed_volume(m) < 0)
    for (auto& t : m.triangles) std::swap(t[1], t[2]);
}

double cross2(Pt o, Pt a, Pt b) { return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]); }

double signed_area(const std::vector<Pt>& poly) {
  double a = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    a += p[0] * q[1] - q[0] * p[1];
  }
  return a / 2;
}

std::vector<Vec3> lift(const std::vector<Pt>& poly, double z) {
  std::vector<Vec3> r;
  for (const auto& p : poly) r.push_back({p[0], p[1], z});
  return r;
}

std::vector<Pt> circle_at(const std::vector<double>& angles, double radius) {
  std::vector<Pt> r;
  for (double a : angles) r.push_back({radius * std::cos(a), radius * std::sin(a)});
  return r;
}

Mesh straight_tube(const std::vector<Pt>& outer, const std::vector<Pt>& inner, double z0, double z1) {
  return tube({lift(outer, z0), lift(outer, z1)}, {lift(inner, z0), lift(inner, z1)});
}

std::vector<double> even_angles(int n) {
  std::vector<double> a;
  for (int i = 0; i < n; ++i) a.push_back(2 * std::numbers::pi * i / n);
  return a;
}

Mesh make_cuboid(std::span<const double> p, int) { return cuboid(p[0], p[1], p[2]); }

Mesh make_post(std::span<const double> p, int n) {
  const double r = p[0] / 2, len = p[0] * p[1];
  return prism(circle_at(even_angles(n), r), 0, len);
}

Mesh make_pipe(std::span<const double> p, int n) {
  const double ro = p[0] / 2, ri = ro * p[1], len = p[0] * p[2];
  const auto a = even_angles(n);
  return straight_tube(circle_at(a, ro), circle_at(a, ri), 0, len);
}

Mesh make_elbow(std::span<const double> p, int n) {
  const double ro = p[0] / 2, ri = ro * p[1], bend = p[0] * p[2];
  const int steps = std::max(2, n / 4);
  std::vector<std::vector<Vec3>> outer, inner;
  for (int j = 0; j <= steps; ++j) {
    const double phi = std::numbers::pi / 2 * j / steps;
    const Vec3 u{std::cos(phi), std::sin(phi), 0}, z{0, 0, 1};
    const Vec3 c = bend * u;
    std::vector<Vec3> o, in;
    for (int i = 0; i < n; ++i) {
      const double psi = 2 * std::numbers::pi * i / n;
      const Vec3 d = std::cos(psi) * u + std::sin(psi) * z;
      o.push_back(c + ro * d);
      in.push_back(c + ri * d);
    }
    outer.push_back(std::move(o));
    inner.push_back(std::move(in));
  }
  return tube(outer, inner);
}

Mesh make_l_block(std::span<const double> p, int) {
  const double a = p[0], b = p[1], t = p[2] * std::min(a, b), d = p[3];
  return prism({{0, 0}, {a, 0}, {a, t}, {t, t}, {t, b}, {0, b}}, 0, d);
}

Mesh make_hex_nut(std::span<const double> p, int n) {
  const double flats = p[0], ri = flats * p[1] / 2, thick = flats * p[2];
  const double apothem = flats / 2;
  const auto angles = even_angles(n);
  std::vector<Pt> outer;
  for (double a : angles) {
    // Distance to the hexagon boundary along direction a (corners at multiples of 60 degrees).
    const double sector = std::numbers::pi / 3;
    const double local = std::fmod(a, sector) - sector / 2;
    const double r = apothem / std::cos(local);
    outer.push_back({r * std::cos(a), r * std::sin(a)});
  }
  return straight_tube(outer, circle_at(angles, ri), 0, thick);
}

Mesh make_spoked_wheel(std::span<const double> p, int n) {
  const double radius = p[0] / 2, rim = radius * p[1], thick = p[0] * p[2];
  const int spokes = static_cast<int>(std::floor(p[3]));
  const double spoke_w = radius * p[4], hub_r = radius * p[5];
  const auto a = even_angles(n);
  Mesh m = straight_tube(circle_at(a, radius), circle_at(a, radius - rim), -thick / 2, thick / 2);
  append(m, straight_tube(circle_at(a, hub_r), circle_at(a, hub_r * 0.4), -thick * 0.7, thick * 0.7));
  const double r0 = hub_r * 0.7, r1 = radius - rim / 2;
  for (int s = 0; s < spokes; ++s) {
    const double ang = 2 * std::numbers::pi * s / spokes;
    const double c = std::cos(ang), si = std::sin(ang);
    auto rot = [&](double x, double y) { return Pt{x * c - y * si, x * si + y * c}; };
    append(m, prism({rot(r0, -spoke_w / 2), rot(r1, -spoke_w / 2), rot(r1, spoke_w / 2), rot(r0, spoke_w / 2)},
                    -thick * 0.35, thick * 0.35));
  }
  return m;
}

Mesh make_gear(std::span<const double> p, int n) {
  const double ro = p[0] / 2;
  const int teeth = static_cast<int>(std::floor(p[1]));
  const double root = ro * (1 - p[2]), thick = p[0] * p[3], bore = ro * p[4];
  (void)n;
  std::vector<double> angles;
  std::vector<Pt> outer;
  const double pitch = 2 * std::numbers::pi / teeth;
  for (int t = 0; t < teeth; ++t) {
    const double a0 = t * pitch;
    const std::array<std::pair<double, double>, 4> profile{
        {{0.0, root}, {0.2, ro}, {0.5, ro}, {0.7, root}}};
    for (auto [frac, r] : profile) {
      const double a = a0 + frac * pitch;
      angles.push_back(a);
      outer.push_back({r * std::cos(a), r * std::sin(a)});
    }
  }
  return straight_tube(outer, circle_at(angles, bore), 0, thick);
}

using Generator = Mesh (*)(std::span<const double>, int);

Generator generator_for(std::string_view name) {
  if (name == "cuboid") return make_cuboid;
  if (name == "thin_plate") return make_cuboid;
  if (name == "post") return make_post;
  if (name == "pipe") return make_pipe;
  if (name == "elbow") return make_elbow;
  if (name == "l_block") return make_l_block;
  if (name == "hex_nut") return make_hex_nut;
  if (name == "spoked_wheel") return make_spoked_wheel;
  if (name == "gear") return make_gear;
  throw InvalidArgument("no generator for family '" + std::string(name) + "'");
}

}  // namespace

Mesh cuboid(double l, double b, double h) {
  if (!(l > 0 && b > 0 && h > 0)) throw InvalidArgument("cuboid dimensions must be positive");
  return prism({{0, 0}, {l, 0}, {l, b}, {0, b}}, 0, h);
}

std::vector<std::array<std::size_t, 3>> ear_clip(const std::vector<Pt>& poly) {
  if (poly.size() < 3) throw InvalidArgument("polygon needs at least 3 vertices");
  const double orient = signed_area(poly) > 0 ? 1.0 : -1.0;
  std::vector<std::size_t> idx(poly.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<std::array<std::size_t, 3>> tris;
  auto inside = [&](Pt p, Pt a, Pt b, Pt c) {
    return orient * cross2(a, b, p) >= 0 && orient * cross2(b, c, p) >= 0 && orient * cross2(c, a, p) >= 0;
  };
  while (idx.size() > 3) {
    bool clipped = false;
    for (std::size_t k = 0; k < idx.size() && !clipped; ++k) {
      const auto ip = idx[(k + idx.size() - 1) % idx.size()], ic = idx[k], in = idx[(k + 1) % idx.size()];
      const Pt a = poly[ip], b = poly[ic], c = poly[in];
      if (orient * cross2(a, b, c) <= 0) continue;
      bool ear = true;
      for (auto j : idx) {
        if (j == ip || j == ic || j == in) continue;
        if (inside(poly[j], a, b, c)) {
          ear = false;
          break;
        }
      }
      if (!ear) continue;
      tris.push_back({ip, ic, in});
      idx.erase(idx.begin() + static_cast<long>(k));
      clipped = true;
    }
    if (!clipped) throw InvalidArgument("polygon is not simple");
  }
  tris.push_back({idx[0], idx[1], idx[2]});
  return tris;
}

Mesh prism(const std::vector<Pt>& polygon, double z0, double z1) {
  if (!(z1 > z0)) throw InvalidArgument("prism height must be positive");
  const auto n = static_cast<std::uint32_t>(polygon.size());
  Mesh m;
  for (const auto& p : polygon) m.vertices.push_back({p[0], p[1], z0});
  for (const auto& p : polygon) m.vertices.push_back({p[0], p[1], z1});
  // Sides: bottom boundary runs i -> i+1, top boundary i+1 -> i.
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t j = (i + 1) % n;
    m.triangles.push_back({i, j, n + j});
    m.triangles.push_back({i, n + j, n + i});
  }
  for (auto [a, b, c] : ear_clip(polygon)) {
    const auto ua = static_cast<std::uint32_t>(a), ub = static_cast<std::uint32_t>(b), uc = static_cast<std::uint32_t>(c);
    m.triangles.push_back({uc, ub, ua});
    m.triangles.push_back({n + ua, n + ub, n + uc});
  }
  orient_outward(m);
  return m;
}

Mesh tube(const std::vector<std::vector<Vec3>>& outer, const std::vector<std::vector<Vec3>>& inner) {
  if (outer.size() < 2 || outer.size() != inner.size()) throw InvalidArgument("tube needs matching ring lists");
  const auto n = static_cast<std::uint32_t>(outer.front().size());
  if (n < 3) throw InvalidArgument("tube rings need at least 3 vertices");
  for (std::size_t j = 0; j < outer.size(); ++j)
    if (outer[j].size() != n || inner[j].size() != n) throw InvalidArgument("tube rings differ in size");
  const auto rings = static_cast<std::uint32_t>(outer.size());
  Mesh m;
  for (const auto& r : outer) m.vertices.insert(m.vertices.end(), r.begin(), r.end());
  for (const auto& r : inner) m.vertices.insert(m.vertices.end(), r.begin(), r.end());
  auto O = [&](std::uint32_t j, std::uint32_t i) { return j * n + i % n; };
  auto I = [&](std::uint32_t j, std::uint32_t i) { return rings * n + j * n + i % n; };
  auto quad = [&](std::uint32_t a, std::uint32_t b, std::uint32_t c, std::uint32_t d) {
    m.triangles.push_back({a, b, c});
    m.triangles.push_back({a, c, d});
  };
  for (std::uint32_t j = 0; j + 1 < rings; ++j) {
    for (std::uint32_t i = 0; i < n; ++i) {
      quad(O(j, i), O(j, i + 1), O(j + 1, i + 1), O(j + 1, i));
      quad(I(j, i), I(j + 1, i), I(j + 1, i + 1), I(j, i + 1));
    }
  }
  const std::uint32_t last = rings - 1;
  for (std::uint32_t i = 0; i < n; ++i) {
    quad(O(0, i + 1), O(0, i), I(0, i), I(0, i + 1));
    quad(O(last, i), O(last, i + 1), I(last, i + 1), I(last, i));
  }
  orient_outward(m);
  return m;
}

Mesh generate(std::string_view name, std::span<const double> params, int segments) {
  const auto& f = family(name);
  if (segments < 6) throw InvalidArgument("segments must be >= 6");
  if (params.size() != f.params.size())
    throw InvalidArgument(f.name + " takes " + std::to_string(f.params.size()) + " parameters, got " +
                          std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& d = f.params[i];
    if (!(params[i] >= d.min && params[i] <= d.max))
      throw InvalidArgument("out-of-range parameter " + f.name + "." + d.name + " = " + std::to_string(params[i]) +
                            " (range [" + std::to_string(d.min) + ", " + std::to_string(d.max) + "])");
  }
  Mesh m = generator_for(f.name)(params, segments);
  m.validate();
  return m;
}

int CorpusSpec::count_for(const std::string& name) const {
  auto it = model_count_overrides.find(name);
  return it == model_count_overrides.end() ? models_per_family : it->second;
}

void CorpusSpec::validate() const {
  std::set<std::string> seen;
  for (const auto& f : families) {
    try {
      family(f);
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
    if (!seen.insert(f).second) throw ConfigError("family '" + f + "' listed twice");
  }
  if (models_per_family < 2) throw ConfigError("models per family must be >= 2 (the split needs one train and one test model)");
  for (const auto& [name, count] : model_count_overrides) {
    if (count < 2) throw ConfigError("model count for '" + name + "' must be >= 2");
    if (!families.empty() && !seen.count(name)) throw ConfigError("model count override for unselected family '" + name + "'");
    if (families.empty()) family(name);
  }
  if (segments < 6) throw ConfigError("segments must be >= 6");
}

Manifest generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir, int jobs) {
  spec.validate();
  std::vector<std::string> names = spec.families;
  if (names.empty())
    for (const auto& f : synth::families()) names.push_back(f.name);

  struct Item {
    std::string family, rel;
    std::size_t index;
  };
  std::vector<Item> items;
  Manifest manifest;
  for (const auto& name : names) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir / name, ec);
    if (ec) throw Error("cannot create " + (out_dir / name).string() + ": " + ec.message());
    for (int i = 0; i < spec.count_for(name); ++i) {
      char file[128];
      std::snprintf(file, sizeof file, "%s_%03d.stl", name.c_str(), i);
      const std::string rel = name + "/" + file;
      items.push_back({name, rel, static_cast<std::size_t>(i)});
      manifest.rows.push_back({rel, name, "", {}});
    }
  }
  parallel_for(items.size(), jobs, [&](std::size_t k) {
    const auto& it = items[k];
    const auto& f = family(it.family);
    const auto mesh = generate(it.family, sample_params(f, spec.seed, it.index), spec.segments);
    write_stl_binary(mesh, out_dir / it.rel);
  });
  write_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

}  // namespace lfdnet::synth
