#include <cctype>
#include <string>

#include "binary_io.hpp"
#include "lfdnet/error.hpp"
#include "lfdnet/render.hpp"

namespace lfdnet {

std::vector<std::uint8_t> encode_pgm(const ViewImage& img) {
  if (img.width <= 0 || img.height <= 0 ||
      img.pixels.size() != static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height))
    throw InvalidArgument("image dimensions do not match pixel data");
  const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

namespace {

// Reads one header integer, skipping whitespace and '#' comments.
long read_header_int(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw FormatError("malformed PGM header");
  long v = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    v = v * 10 + (bytes[pos] - '0');
    if (v > (1L << 24)) throw FormatError("malformed PGM header: value too large");
    ++pos;
  }
  return v;
}

}  // namespace

ViewImage decode_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError("malformed PGM header: expected P5");
  std::size_t pos = 2;
  const long w = read_header_int(bytes, pos);
  const long h = read_header_int(bytes, pos);
  const long maxval = read_header_int(bytes, pos);
  if (w <= 0 || h <= 0) throw FormatError("malformed PGM header: non-positive size");
  if (maxval != 255) throw FormatError("malformed PGM header: maxval must be 255");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("malformed PGM header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() - pos < n)
    throw FormatError("truncated: PGM declares " + std::to_string(n) + " pixels, found " + std::to_string(bytes.size() - pos));
  if (bytes.size() - pos > n) throw FormatError("PGM size mismatch: trailing data");
  ViewImage img(static_cast<int>(w), static_cast<int>(h));
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), img.pixels.begin());
  for (auto p : img.pixels) {
    if (p != 0 && p != 255) throw FormatError("silhouette PGM pixel not 0 or 255");
  }
  return img;
}

void write_pgm(const ViewImage& img, const std::filesystem::path& path) {
  detail::write_file_bytes(path.string(), encode_pgm(img));
}

ViewImage read_pgm(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifact(path.string());
  return decode_pgm(detail::read_file_bytes(path.string()));
}

}  // namespace lfdnet
