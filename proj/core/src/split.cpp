#include "lfdnet/split.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "lfdnet/error.hpp"
#include "lfdnet/random.hpp"

namespace lfdnet {

void SplitSpec::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("split.train_fraction must be in (0, 1)");
}

std::size_t split_train_count(std::size_t n, double fraction) {
  if (n < 2) throw InvalidArgument("a class needs at least 2 models to split, got " + std::to_string(n));
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

SplitResult stratified_split(std::span<const std::string> labels, const SplitSpec& spec) {
  spec.validate();
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  SplitResult out;
  for (auto& [label, rows] : by_class) {
    if (rows.size() < 2)
      throw InvalidArgument("class '" + label + "' has " + std::to_string(rows.size()) + " model(s); at least 2 are required");
    std::mt19937_64 rng(mix_seed(spec.seed, label));
    fisher_yates(rows.begin(), rows.end(), rng);
    const auto k = split_train_count(rows.size(), spec.train_fraction);
    out.train.insert(out.train.end(), rows.begin(), rows.begin() + static_cast<long>(k));
    out.test.insert(out.test.end(), rows.begin() + static_cast<long>(k), rows.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

void apply_split(Manifest& manifest, const SplitSpec& spec) {
  std::vector<std::string> labels;
  labels.reserve(manifest.rows.size());
  for (const auto& r : manifest.rows) labels.push_back(r.label);
  const auto s = stratified_split(labels, spec);
  for (auto i : s.train) manifest.rows[i].split = "train";
  for (auto i : s.test) manifest.rows[i].split = "test";
}

}  // namespace lfdnet
