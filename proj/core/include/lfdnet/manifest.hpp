#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lfdnet {

/// RFC 4180 style: comma separated, fields quoted when they contain a comma,
/// quote or line break; doubled quotes inside quoted fields. LF or CRLF rows.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);
std::string csv_field(std::string_view s);
std::string csv_row(const std::vector<std::string>& fields);

/// One model of the corpus. `views` holds the 20 rendered image paths once
/// the corpus has been rendered; paths are relative to the manifest file.
struct ManifestRow {
  std::string path;
  std::string label;
  std::string split;  // "", "train" or "test"
  std::vector<std::string> views;

  friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

/// CSV with header `path,label,split`, optionally followed by view_00..view_19.
struct Manifest {
  std::vector<ManifestRow> rows;

  bool has_views() const;
  bool has_split() const;
  /// Sorted distinct labels; the index of a label is its class index.
  std::vector<std::string> labels() const;
  /// Unique paths, nonempty labels, valid split tags, all-or-none views.
  void validate() const;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

std::string encode_manifest(const Manifest& m);
Manifest parse_manifest(std::string_view text);
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& m, const std::filesystem::path& path);

/// Resolves a manifest-relative path against the manifest's directory.
std::filesystem::path resolve_relative(const std::filesystem::path& manifest_path, const std::string& rel);

}  // namespace lfdnet
