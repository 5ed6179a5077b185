#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lfdnet/metrics.hpp"

namespace lfdnet::gbdt {

struct Config {
  int rounds = 100;
  double learning_rate = 0.1;  // eta
  int max_depth = 4;
  double min_child_weight = 1.0;  // minimum hessian sum per child
  double lambda = 1.0;            // L2 leaf regularizer
  double gamma = 0.0;             // minimum split gain

  void validate() const;
  friend bool operator==(const Config&, const Config&) = default;
};

/// Internal nodes route x[feature] < threshold to `left`. Every node keeps the
/// gradient and hessian sums of the rows that reached it during fitting.
struct Node {
  std::int32_t feature = -1;  // -1 for a leaf
  double threshold = 0;
  std::uint32_t left = 0, right = 0;
  double value = 0;  // leaf output, -eta * G / (H + lambda)
  double grad_sum = 0, hess_sum = 0;

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const Node&, const Node&) = default;
};

struct Tree {
  std::vector<Node> nodes;  // nodes[0] is the root; children follow their parent

  double predict(std::span<const double> x) const;
  int depth() const;
  friend bool operator==(const Tree&, const Tree&) = default;
};

/// One additive ensemble per class; class scores are the summed leaf values.
struct Model {
  Config config;
  std::size_t num_classes = 0;
  std::size_t num_features = 0;
  bool view_onehot = true;  // feature layout: probabilities (+ one-hot view index)
  std::vector<std::vector<Tree>> trees;  // [class][round]

  std::size_t rounds() const { return trees.empty() ? 0 : trees.front().size(); }
  friend bool operator==(const Model&, const Model&) = default;
};

/// Multiclass softmax objective, second-order boosting, exact greedy splits
/// grown level by level. Rows are put into a canonical order first, so the
/// model does not depend on the input row order.
/// `features` is rows x num_features, row-major.
Model fit(std::span<const double> features, std::size_t num_features, std::span<const int> labels,
          std::size_t num_classes, const Config& cfg);

struct ViewPrediction {
  int label = 0;
  std::vector<double> scores;
};

/// argmax of the class scores, lowest index on ties.
ViewPrediction predict_view(const Model& model, std::span<const double> feature);
/// Majority vote over the 20 per-view labels, ties by highest mean score,
/// then lowest class index. `features` is 20 x num_features.
int predict_model(const Model& model, std::span<const double> features);

/// K probabilities, followed by a 20-way one-hot view index unless probs_only.
std::vector<double> view_feature(std::span<const double> probs, int view, bool probs_only);

struct FeatureMatrix {
  std::vector<double> x;
  std::vector<int> y;
  std::size_t width = 0;
};
/// One row per view, models in dump order.
FeatureMatrix features_from_dump(const ProbabilityDump& dump, bool probs_only);

/// Per-model labels of every model in the dump.
std::vector<int> predict_dump(const Model& model, const ProbabilityDump& dump);

/// "GBDT" container; layout in docs/file_formats.md.
std::vector<std::uint8_t> encode_model(const Model& model);
Model decode_model(std::span<const std::uint8_t> bytes);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace lfdnet::gbdt
