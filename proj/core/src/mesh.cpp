#include "lfdnet/mesh.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <string>
#include <unordered_map>

#include "binary_io.hpp"
#include "lfdnet/error.hpp"

namespace lfdnet {

double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

Vec3 normalized(Vec3 a) {
  const double n = norm(a);
  return {a.x / n, a.y / n, a.z / n};
}

void Mesh::validate() const {
  if (triangles.empty()) throw InvalidArgument("mesh has no triangles");
  for (const auto& v : vertices) {
    if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z))
      throw InvalidArgument("non-finite coordinate");
  }
  const auto n = vertices.size();
  for (const auto& t : triangles) {
    if (t[0] >= n || t[1] >= n || t[2] >= n) throw InvalidArgument("triangle index out of range");
  }
}

namespace {

struct BitKey {
  std::uint64_t x, y, z;
  bool operator==(const BitKey&) const = default;
};

struct BitKeyHash {
  std::size_t operator()(const BitKey& k) const noexcept {
    std::uint64_t h = k.x * 0x9E3779B97F4A7C15ull;
    h ^= k.y + 0x632BE59BD9B4E019ull + (h << 6) + (h >> 2);
    h ^= k.z + 0x8CB92BA72F3D8DD7ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

// Exact (bitwise) vertex welding.
class VertexWelder {
 public:
  std::uint32_t add(Vec3 v) {
    if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z))
      throw FormatError("non-finite coordinate");
    BitKey key{std::bit_cast<std::uint64_t>(v.x), std::bit_cast<std::uint64_t>(v.y),
               std::bit_cast<std::uint64_t>(v.z)};
    auto [it, inserted] = index_.try_emplace(key, static_cast<std::uint32_t>(mesh_.vertices.size()));
    if (inserted) mesh_.vertices.push_back(v);
    return it->second;
  }
  void add_triangle(Vec3 a, Vec3 b, Vec3 c) {
    const auto ia = add(a);
    const auto ib = add(b);
    const auto ic = add(c);
    mesh_.triangles.push_back({ia, ib, ic});
  }
  Mesh take() { return std::move(mesh_); }

 private:
  Mesh mesh_;
  std::unordered_map<BitKey, std::uint32_t, BitKeyHash> index_;
};

bool starts_with_solid(std::span<const std::uint8_t> bytes) {
  std::size_t i = 0;
  while (i < bytes.size() && (bytes[i] == ' ' || bytes[i] == '\t' || bytes[i] == '\r' || bytes[i] == '\n')) ++i;
  static constexpr std::string_view kSolid = "solid";
  if (bytes.size() - i < kSolid.size()) return false;
  return std::equal(kSolid.begin(), kSolid.end(), bytes.begin() + static_cast<std::ptrdiff_t>(i));
}

bool parse_double(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

class Tokenizer {
 public:
  explicit Tokenizer(std::string_view text) : text_(text) {}
  std::string_view next() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
    const auto start = pos_;
    while (pos_ < text_.size() && !is_space(text_[pos_])) ++pos_;
    return text_.substr(start, pos_ - start);
  }

 private:
  static bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; }
  std::string_view text_;
  std::size_t pos_ = 0;
};

// Returns false when the body does not look like ASCII STL at all, so the
// caller can fall back to the binary reader.
bool try_parse_ascii_stl(std::string_view text, Mesh& out) {
  Tokenizer tok(text);
  if (tok.next() != "solid") return false;
  VertexWelder welder;
  std::vector<Vec3> facet;
  bool saw_endsolid = false;
  for (auto t = tok.next(); !t.empty(); t = tok.next()) {
    if (t == "vertex") {
      Vec3 v;
      double* dst[3] = {&v.x, &v.y, &v.z};
      for (double* d : dst) {
        if (!parse_double(tok.next(), *d)) return false;
      }
      if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z))
        throw FormatError("non-finite coordinate");
      facet.push_back(v);
    } else if (t == "endfacet") {
      if (facet.size() != 3) return false;
      welder.add_triangle(facet[0], facet[1], facet[2]);
      facet.clear();
    } else if (t == "endsolid") {
      saw_endsolid = true;
      break;
    } else if (t == "facet" || t == "normal" || t == "outer" || t == "loop" || t == "endloop") {
      continue;
    } else {
      // Normal components and the solid name are the only other tokens allowed;
      // reject anything that is neither a number nor a plausible name position.
      double ignored;
      if (!parse_double(t, ignored) && !facet.empty()) return false;
    }
  }
  if (!saw_endsolid || !facet.empty()) return false;
  out = welder.take();
  return true;
}

Mesh parse_binary_stl(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 84) throw FormatError("truncated: binary STL shorter than its header");
  detail::ByteReader reader(bytes);
  reader.get_bytes(80);
  const auto count = reader.get<std::uint32_t>();
  if (count == 0) throw FormatError("zero facets");
  if (reader.remaining() / 50 < count)
    throw FormatError("truncated: binary STL declares " + std::to_string(count) + " facets but holds " +
                      std::to_string(reader.remaining() / 50));
  VertexWelder welder;
  for (std::uint32_t f = 0; f < count; ++f) {
    for (int i = 0; i < 3; ++i) reader.get<float>();  // stored normal, ignored
    Vec3 v[3];
    for (auto& p : v) {
      p.x = reader.get<float>();
      p.y = reader.get<float>();
      p.z = reader.get<float>();
    }
    reader.get<std::uint16_t>();
    welder.add_triangle(v[0], v[1], v[2]);
  }
  return welder.take();
}

bool binary_size_consistent(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 84) return false;
  detail::ByteReader reader(bytes.subspan(80, 4));
  const auto count = reader.get<std::uint32_t>();
  return count > 0 && bytes.size() == 84 + 50ull * count;
}

std::string_view as_text(std::span<const std::uint8_t> bytes) {
  return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

}  // namespace

Mesh parse_stl(std::span<const std::uint8_t> bytes) {
  if (starts_with_solid(bytes) && !binary_size_consistent(bytes)) {
    Mesh m;
    if (try_parse_ascii_stl(as_text(bytes), m)) {
      if (m.triangles.empty()) throw FormatError("zero facets");
      return m;
    }
  }
  return parse_binary_stl(bytes);
}

Mesh parse_obj(std::string_view text) {
  Mesh mesh;
  std::size_t line_no = 0;
  std::vector<std::uint32_t> face;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);

    Tokenizer tok(line);
    const auto kind = tok.next();
    if (kind == "v") {
      Vec3 v;
      double* dst[3] = {&v.x, &v.y, &v.z};
      for (double* d : dst) {
        if (!parse_double(tok.next(), *d))
          throw FormatError("obj line " + std::to_string(line_no) + ": bad vertex coordinate");
      }
      if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z))
        throw FormatError("obj line " + std::to_string(line_no) + ": non-finite coordinate");
      mesh.vertices.push_back(v);
    } else if (kind == "f") {
      face.clear();
      for (auto t = tok.next(); !t.empty(); t = tok.next()) {
        const auto idx_text = t.substr(0, t.find('/'));
        long idx = 0;
        auto [ptr, ec] = std::from_chars(idx_text.data(), idx_text.data() + idx_text.size(), idx);
        if (ec != std::errc() || ptr != idx_text.data() + idx_text.size())
          throw FormatError("obj line " + std::to_string(line_no) + ": bad face index '" + std::string(t) + "'");
        const long n = static_cast<long>(mesh.vertices.size());
        const long resolved = idx > 0 ? idx - 1 : n + idx;
        if (idx == 0 || resolved < 0 || resolved >= n)
          throw FormatError("obj line " + std::to_string(line_no) + ": face index out of range");
        face.push_back(static_cast<std::uint32_t>(resolved));
      }
      if (face.size() < 3)
        throw FormatError("obj line " + std::to_string(line_no) + ": face with fewer than 3 vertices");
      for (std::size_t i = 1; i + 1 < face.size(); ++i) mesh.triangles.push_back({face[0], face[i], face[i + 1]});
    }
  }
  if (mesh.triangles.empty()) throw FormatError("obj has no faces");
  return mesh;
}

Mesh parse_mesh(std::span<const std::uint8_t> bytes) {
  if (binary_size_consistent(bytes)) return parse_binary_stl(bytes);
  if (starts_with_solid(bytes)) {
    Mesh m;
    if (try_parse_ascii_stl(as_text(bytes), m)) {
      if (m.triangles.empty()) throw FormatError("zero facets");
      return m;
    }
  }
  const auto text = as_text(bytes);
  const bool looks_binary = std::any_of(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(text.size(), 512)),
                                        [](char c) { return c == '\0'; });
  if (looks_binary) return parse_binary_stl(bytes);
  return parse_obj(text);
}

Mesh load_mesh(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifact(path.string());
  const auto bytes = detail::read_file_bytes(path.string());
  return parse_mesh(bytes);
}

Aabb bounding_box(const Mesh& mesh) {
  if (mesh.vertices.empty()) throw InvalidArgument("mesh has no vertices");
  Aabb box{mesh.vertices.front(), mesh.vertices.front()};
  for (const auto& v : mesh.vertices) {
    box.lo = {std::min(box.lo.x, v.x), std::min(box.lo.y, v.y), std::min(box.lo.z, v.z)};
    box.hi = {std::max(box.hi.x, v.x), std::max(box.hi.y, v.y), std::max(box.hi.z, v.z)};
  }
  return box;
}

NormalizedMesh normalize(const Mesh& mesh) {
  mesh.validate();
  const auto box = bounding_box(mesh);
  const Vec3 center = 0.5 * (box.lo + box.hi);
  double radius = 0.0;
  for (const auto& v : mesh.vertices) radius = std::max(radius, norm(v - center));
  if (!(radius > 0.0) || !std::isfinite(radius)) throw InvalidArgument("degenerate mesh");

  constexpr double kFixedPointTol = 1e-12;
  if (std::abs(center.x) <= kFixedPointTol && std::abs(center.y) <= kFixedPointTol &&
      std::abs(center.z) <= kFixedPointTol && std::abs(radius - 1.0) <= kFixedPointTol) {
    return NormalizedMesh(mesh);
  }

  Mesh out;
  out.triangles = mesh.triangles;
  out.vertices.reserve(mesh.vertices.size());
  for (const auto& v : mesh.vertices) {
    const Vec3 d = v - center;
    out.vertices.push_back({d.x / radius, d.y / radius, d.z / radius});
  }
  return NormalizedMesh(std::move(out));
}

std::vector<std::uint8_t> encode_stl_binary(const Mesh& mesh, std::string_view header) {
  mesh.validate();
  detail::ByteWriter w;
  std::string head(header.substr(0, 80));
  head.resize(80, '\0');
  // A binary header must not start with "solid" or readers sniff it as ASCII.
  if (head.rfind("solid", 0) == 0) head[0] = 'S';
  w.put_bytes(head);
  w.put(static_cast<std::uint32_t>(mesh.triangles.size()));
  for (const auto& t : mesh.triangles) {
    const Vec3 a = mesh.vertices[t[0]], b = mesh.vertices[t[1]], c = mesh.vertices[t[2]];
    Vec3 n = cross(b - a, c - a);
    const double len = norm(n);
    if (len > 0) n = (1.0 / len) * n;
    for (Vec3 p : {n, a, b, c}) {
      w.put(static_cast<float>(p.x));
      w.put(static_cast<float>(p.y));
      w.put(static_cast<float>(p.z));
    }
    w.put(std::uint16_t{0});
  }
  return std::move(w.bytes());
}

void write_stl_binary(const Mesh& mesh, const std::filesystem::path& path) {
  detail::write_file_bytes(path.string(), encode_stl_binary(mesh, "lfdnet binary STL"));
}

}  // namespace lfdnet
