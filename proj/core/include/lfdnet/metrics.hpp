#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lfdnet {

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const double> v);
std::size_t argmax(std::span<const float> v);

/// Most frequent label among `view_labels`. Ties go to the tied class with
/// the highest score summed over all views (`scores` is views x classes,
/// row-major), then to the lowest class index. Summed and mean scores order
/// classes identically, so this serves both the CNN and the booster.
int majority_vote(std::span<const int> view_labels, std::span<const double> scores, std::size_t classes);

/// Per-view class probabilities of a set of models: the CSV exchanged between
/// eval and boost (`model,view,p_<class>...,label`, one row per view).
struct ProbabilityDump {
  std::vector<std::string> class_names;
  std::vector<std::string> models;
  std::vector<int> labels;     // per model
  std::vector<double> probs;   // models x 20 x classes

  std::size_t classes() const { return class_names.size(); }
  std::span<const double> model_probs(std::size_t m) const;
  std::span<const double> view_probs(std::size_t m, int view) const;
  void validate() const;
};

std::string encode_probability_dump(const ProbabilityDump& d);
ProbabilityDump parse_probability_dump(std::string_view text);
ProbabilityDump read_probability_dump(const std::filesystem::path& path);
void write_probability_dump(const ProbabilityDump& d, const std::filesystem::path& path);

/// p_c * w_c renormalized per view (the optional class-weighted prediction mode).
void reweight_probabilities(ProbabilityDump& d, std::span<const double> class_weights);

struct Evaluation {
  std::vector<std::string> class_names;
  std::size_t images = 0, images_correct = 0;
  std::size_t models = 0, models_correct = 0;
  double image_accuracy = 0, model_accuracy = 0;
  double image_loss = 0;  // mean -log p_true over views
  std::vector<int> model_labels, model_predictions;
  std::vector<std::vector<long>> confusion;  // model level, [true][predicted]
  std::vector<double> image_recall, model_recall;  // per class; NaN when the class is absent
  std::vector<double> view_accuracy;               // per view index, model level
};

/// Image accuracy from per-view argmax, model accuracy from majority_vote.
Evaluation evaluate(const ProbabilityDump& d);
/// Model-level accounting from per-model labels only.
Evaluation evaluate_models(std::span<const int> truth, std::span<const int> predicted,
                           std::vector<std::string> class_names);

/// Per-class table: tested models, misclassified, top confusion targets, plus
/// a totals row and the model-level accuracy line.
std::string format_report(const Evaluation& e);

}  // namespace lfdnet
