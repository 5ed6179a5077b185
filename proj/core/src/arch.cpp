#include "lfdnet/arch.hpp"

#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>
#include <type_traits>

#include "lfdnet/error.hpp"

namespace lfdnet {

void ArchSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("arch: " + msg); };
  if (input_size < 1 || input_channels < 1) fail("input dimensions must be positive");
  if (stem_filters < 1) fail("stem_filters must be positive");
  if (stem_kernel != 1 && stem_kernel != 3 && stem_kernel != 7) fail("stem_kernel must be 1, 3 or 7");
  if (block_kernel != 1 && block_kernel != 3 && block_kernel != 7) fail("block_kernel must be 1, 3 or 7");
  if (group_filters.empty()) fail("at least one group is required");
  if (group_downsample.size() != group_filters.size()) fail("group_downsample must have one entry per group");
  for (int f : group_filters)
    if (f < 1) fail("group filters must be positive");
  if (blocks_per_group < 1) fail("blocks_per_group must be >= 1");
  if (final_pool < 1) fail("final_pool must be >= 1");
  for (int f : fc)
    if (f < 1) fail("fc widths must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (classes < 2) fail("classes must be >= 2");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) fail("bn_momentum must be in [0, 1)");
  if (!(bn_epsilon > 0.0)) fail("bn_epsilon must be positive");
  if (!class_names.empty() && class_names.size() != static_cast<std::size_t>(classes))
    fail("class_names must list exactly `classes` names");
  for (const auto& n : class_names) {
    if (n.empty() || n.find_first_of(",\n\r=") != std::string::npos) fail("invalid class name '" + n + "'");
  }

  int s = input_size;
  if (initial_pool) {
    if (s % 2) fail("input size " + std::to_string(s) + " not divisible by the initial 2x2 pool");
    s /= 2;
  }
  for (int g = 0; g < groups(); ++g) {
    if (group_downsample[static_cast<std::size_t>(g)]) {
      if (s % 2) fail("spatial size " + std::to_string(s) + " not divisible at group " + std::to_string(g + 1));
      s /= 2;
    }
  }
  if (s < final_pool || s % final_pool)
    fail("pre-pool spatial size " + std::to_string(s) + " incompatible with " + std::to_string(final_pool) +
         "x" + std::to_string(final_pool) + " average pool");
}

long ArchSpec::block_conv_filters() const {
  long total = 0;
  for (int f : group_filters) total += 2L * blocks_per_group * f;
  return total;
}

int ArchSpec::hidden_layer_count() const {
  return groups() * blocks_per_group * 2 + 1 + static_cast<int>(fc.size());
}

std::vector<int> ArchSpec::spatial_trace() const {
  std::vector<int> t{input_size};
  int s = input_size;
  if (initial_pool) t.push_back(s /= 2);
  for (int g = 0; g < groups(); ++g) {
    if (group_downsample[static_cast<std::size_t>(g)]) s /= 2;
    t.push_back(s);
  }
  t.push_back(s / final_pool);
  return t;
}

std::size_t ArchSpec::flatten_width() const {
  const auto pooled = static_cast<std::size_t>(spatial_trace().back());
  return static_cast<std::size_t>(group_filters.back()) * pooled * pooled;
}

namespace {

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    if constexpr (std::is_same_v<T, bool>) {
      os << (v[i] ? 1 : 0);
    } else {
      os << v[i];
    }
  }
  return os.str();
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

int parse_int(const std::string& key, const std::string& s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError("arch text: bad integer for " + key);
  return v;
}

double parse_real(const std::string& key, const std::string& s) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError("arch text: bad number for " + key);
  return v;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  for (;;) {
    auto pos = s.find(',', start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

constexpr const char* kArchHeader = "lfdnet-arch 1";

}  // namespace

std::string ArchSpec::to_text() const {
  std::ostringstream os;
  os << kArchHeader << '\n'
     << "input_size=" << input_size << '\n'
     << "input_channels=" << input_channels << '\n'
     << "stem_filters=" << stem_filters << '\n'
     << "stem_kernel=" << stem_kernel << '\n'
     << "initial_pool=" << (initial_pool ? 1 : 0) << '\n'
     << "group_filters=" << join(group_filters) << '\n'
     << "group_downsample=" << join(group_downsample) << '\n'
     << "blocks_per_group=" << blocks_per_group << '\n'
     << "block_kernel=" << block_kernel << '\n'
     << "final_pool=" << final_pool << '\n'
     << "fc=" << join(fc) << '\n'
     << "dropout=" << format_double(dropout) << '\n'
     << "classes=" << classes << '\n'
     << "bn_momentum=" << format_double(bn_momentum) << '\n'
     << "bn_epsilon=" << format_double(bn_epsilon) << '\n'
     << "class_names=" << join(class_names) << '\n';
  return os.str();
}

ArchSpec ArchSpec::from_text(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kArchHeader) throw FormatError("arch text: bad header");
  std::map<std::string, std::string> kv;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("arch text: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("arch text: missing key ") + key);
    return it->second;
  };
  auto ints = [&](const char* key) {
    std::vector<int> v;
    for (const auto& s : split_commas(get(key))) v.push_back(parse_int(key, s));
    return v;
  };
  ArchSpec a;
  a.input_size = parse_int("input_size", get("input_size"));
  a.input_channels = parse_int("input_channels", get("input_channels"));
  a.stem_filters = parse_int("stem_filters", get("stem_filters"));
  a.stem_kernel = parse_int("stem_kernel", get("stem_kernel"));
  a.initial_pool = parse_int("initial_pool", get("initial_pool")) != 0;
  a.group_filters = ints("group_filters");
  a.group_downsample.clear();
  for (int v : ints("group_downsample")) a.group_downsample.push_back(v != 0);
  a.blocks_per_group = parse_int("blocks_per_group", get("blocks_per_group"));
  a.block_kernel = parse_int("block_kernel", get("block_kernel"));
  a.final_pool = parse_int("final_pool", get("final_pool"));
  a.fc = ints("fc");
  a.dropout = parse_real("dropout", get("dropout"));
  a.classes = parse_int("classes", get("classes"));
  a.bn_momentum = parse_real("bn_momentum", get("bn_momentum"));
  a.bn_epsilon = parse_real("bn_epsilon", get("bn_epsilon"));
  a.class_names = split_commas(get("class_names"));
  return a;
}

}  // namespace lfdnet
