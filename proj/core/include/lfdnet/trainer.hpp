#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lfdnet/checkpoint.hpp"
#include "lfdnet/network.hpp"
#include "lfdnet/parallel.hpp"
#include "lfdnet/render.hpp"

namespace lfdnet {

struct TrainConfig {
  double learning_rate = 0.001;
  int batch_size = 20;
  int epochs = 100;
  bool class_weighting = true;
  std::uint64_t seed = 1;

  void validate() const;
};

/// The 20 silhouettes of each model, kept as bytes and converted to {0, 1}
/// floats per batch. Image i belongs to model i / 20, view i % 20.
struct ViewDataset {
  int resolution = 0;
  std::vector<std::string> model_names;
  std::vector<int> model_labels;
  std::vector<std::vector<std::uint8_t>> images;

  void add_model(std::string name, int label, const std::vector<ViewImage>& views);
  std::size_t models() const { return model_names.size(); }
  std::size_t size() const { return images.size(); }
  int label(std::size_t image) const { return model_labels[image / kViewCount]; }
  std::vector<int> image_labels() const;
  /// [indices.size(), 1, resolution, resolution]
  Tensor<float> batch(std::span<const std::size_t> indices) const;
};

/// Called after every completed epoch with the updated state.
using EpochCallback = std::function<void(Network&, const TrainingState&)>;

/// Runs epochs state.epoch + 1 .. cfg.epochs. Each epoch shuffles the images
/// with a generator seeded from (cfg.seed, epoch), so a resumed run matches an
/// uninterrupted one. A trailing batch of one image is skipped (batch norm
/// needs two). Class weights come from the training labels unless disabled.
/// Throws Error on a non-finite loss.
void train(Network& net, TrainingState& state, const ViewDataset& train_set, const ViewDataset* test_set,
           const TrainConfig& cfg, int jobs = 1, const EpochCallback& on_epoch = {});

/// Softmax outputs [size, classes] in inference mode. Images are processed in
/// fixed chunks of 20 regardless of `jobs`, so the result is identical for
/// any thread count.
Tensor<float> predict_dataset(const Network& net, const ViewDataset& data, int jobs = 1);

/// Mean unweighted cross-entropy and argmax accuracy of `probs` against labels.
struct ImageScore {
  double loss = 0;
  double accuracy = 0;
};
ImageScore score_images(const Tensor<float>& probs, std::span<const int> labels);

}  // namespace lfdnet
