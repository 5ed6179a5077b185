#pragma once

#include <string>
#include <vector>

namespace lfdnet {

/// Declarative description of the residual classifier.
///
/// Layout: stem conv (stem_kernel, stem_filters, ReLU) -> optional 2x2 max-pool
/// -> groups of residual blocks -> batch norm -> final_pool x final_pool average
/// pool -> flatten -> dense hidden layers (ReLU + dropout) -> dense `classes`
/// (softmax). The first block of a group flagged in `group_downsample` halves
/// the spatial size (main-path max-pool, stride-2 1x1 projection shortcut).
struct ArchSpec {
  int input_size = 256;
  int input_channels = 1;
  int stem_filters = 32;
  int stem_kernel = 7;
  bool initial_pool = true;
  std::vector<int> group_filters{32, 64, 128, 256, 512};
  std::vector<bool> group_downsample{false, true, true, true, true};
  int blocks_per_group = 3;
  int block_kernel = 3;
  int final_pool = 4;
  std::vector<int> fc{512, 512};
  double dropout = 0.25;
  int classes = 43;
  double bn_momentum = 0.99;
  double bn_epsilon = 1e-5;
  /// Optional human-readable labels, one per class, in class-index order.
  std::vector<std::string> class_names;

  int groups() const { return static_cast<int>(group_filters.size()); }

  /// Throws ConfigError when the spec is inconsistent (including the spatial
  /// arithmetic of the pooling schedule).
  void validate() const;

  /// Sum of filter counts over all conv layers inside residual blocks
  /// (projection shortcuts excluded).
  long block_conv_filters() const;
  /// Conv layers inside residual blocks + the average pool + hidden dense layers.
  int hidden_layer_count() const;
  /// Spatial size after: stem, initial pool, each group, final average pool.
  std::vector<int> spatial_trace() const;
  std::size_t flatten_width() const;

  /// Canonical `key=value` text, one key per line in a fixed order.
  std::string to_text() const;
  static ArchSpec from_text(const std::string& text);

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

}  // namespace lfdnet
