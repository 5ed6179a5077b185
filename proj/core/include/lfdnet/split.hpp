#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lfdnet/manifest.hpp"

namespace lfdnet {

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 1;

  void validate() const;
};

/// round-half-up(fraction * n), clamped to [1, n - 1]; n >= 2.
std::size_t split_train_count(std::size_t n, double fraction);

struct SplitResult {
  std::vector<std::size_t> train;  // ascending row indices
  std::vector<std::size_t> test;
};

/// Per-class split of model rows. Each class's rows are shuffled with a
/// generator seeded from (seed, label) before the first k go to train, so a
/// class's assignment does not depend on the other classes.
SplitResult stratified_split(std::span<const std::string> labels, const SplitSpec& spec);

/// Writes split tags into every row of the manifest.
void apply_split(Manifest& manifest, const SplitSpec& spec);

}  // namespace lfdnet
