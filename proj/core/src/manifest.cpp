#include "lfdnet/manifest.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "binary_io.hpp"
#include "lfdnet/error.hpp"
#include "lfdnet/render.hpp"

namespace lfdnet {

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, field_started = false;
  std::size_t line = 1;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started || !field.empty())
          throw FormatError("csv line " + std::to_string(line) + ": stray quote");
        quoted = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        throw FormatError("csv line " + std::to_string(line) + ": bare carriage return");
      case '\n':
        end_row();
        ++line;
        break;
      default:
        field += c;
    }
  }
  if (quoted) throw FormatError("csv: unterminated quoted field");
  if (!field.empty() || field_started || !row.empty()) end_row();
  return rows;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_field(fields[i]);
  }
  out += '\n';
  return out;
}

bool Manifest::has_views() const { return !rows.empty() && !rows.front().views.empty(); }

bool Manifest::has_split() const {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const auto& r) { return !r.split.empty(); });
}

std::vector<std::string> Manifest::labels() const {
  std::set<std::string> s;
  for (const auto& r : rows) s.insert(r.label);
  return {s.begin(), s.end()};
}

void Manifest::validate() const {
  std::set<std::string> paths;
  const bool views = has_views();
  for (const auto& r : rows) {
    if (r.path.empty()) throw FormatError("manifest: empty path");
    if (!paths.insert(r.path).second) throw FormatError("manifest: duplicate path " + r.path);
    if (r.label.empty()) throw FormatError("manifest: empty label for " + r.path);
    if (!r.split.empty() && r.split != "train" && r.split != "test")
      throw FormatError("manifest: bad split tag '" + r.split + "' for " + r.path);
    if (views ? r.views.size() != static_cast<std::size_t>(kViewCount) : !r.views.empty())
      throw FormatError("manifest: inconsistent view columns for " + r.path);
  }
}

namespace {

std::vector<std::string> header(bool views) {
  std::vector<std::string> h{"path", "label", "split"};
  if (views) {
    for (int i = 0; i < kViewCount; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "view_%02d", i);
      h.emplace_back(buf);
    }
  }
  return h;
}

}  // namespace

std::string encode_manifest(const Manifest& m) {
  m.validate();
  const bool views = m.has_views();
  std::string out = csv_row(header(views));
  for (const auto& r : m.rows) {
    std::vector<std::string> f{r.path, r.label, r.split};
    f.insert(f.end(), r.views.begin(), r.views.end());
    out += csv_row(f);
  }
  return out;
}

Manifest parse_manifest(std::string_view text) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw FormatError("manifest: missing header");
  const auto& h = rows.front();
  bool views = false;
  if (h == header(true)) {
    views = true;
  } else if (h != header(false)) {
    // Older two-column manifests (before split) are accepted too.
    if (h != std::vector<std::string>{"path", "label"}) throw FormatError("manifest: unexpected header");
  }
  Manifest m;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    auto& r = rows[i];
    if (r.size() == 1 && r[0].empty()) continue;
    if (r.size() != h.size())
      throw FormatError("manifest row " + std::to_string(i + 1) + ": expected " + std::to_string(h.size()) +
                        " fields, got " + std::to_string(r.size()));
    ManifestRow row{std::move(r[0]), std::move(r[1]), h.size() > 2 ? std::move(r[2]) : std::string{}, {}};
    if (views) row.views.assign(std::make_move_iterator(r.begin() + 3), std::make_move_iterator(r.end()));
    m.rows.push_back(std::move(row));
  }
  m.validate();
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path.string());
  try {
    return parse_manifest({reinterpret_cast<const char*>(bytes.data()), bytes.size()});
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  const auto text = encode_manifest(m);
  detail::write_file_bytes(path.string(), {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::filesystem::path resolve_relative(const std::filesystem::path& manifest_path, const std::string& rel) {
  const std::filesystem::path p(rel);
  if (p.is_absolute()) return p;
  return manifest_path.parent_path() / p;
}

}  // namespace lfdnet
