#include "lfdnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "lfdnet/error.hpp"
#include "lfdnet/loss.hpp"
#include "lfdnet/random.hpp"

namespace lfdnet {

namespace {

// Activations are tens of megabytes; by default glibc serves those with fresh
// mmap()s and pays a page fault per 4 KiB on every layer of every batch.
void keep_large_blocks_in_heap() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
  });
#endif
}

constexpr std::size_t kInferChunk = 20;

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train.learning_rate must be positive");
  if (batch_size < 2) throw ConfigError("train.batch_size must be >= 2 (batch norm needs two samples)");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
}

void ViewDataset::add_model(std::string name, int label, const std::vector<ViewImage>& views) {
  if (views.size() != static_cast<std::size_t>(kViewCount))
    throw InvalidArgument("model " + name + " has " + std::to_string(views.size()) + " views, expected 20");
  for (const auto& v : views) {
    if (resolution == 0) resolution = v.width;
    if (v.width != resolution || v.height != resolution)
      throw InvalidArgument("model " + name + ": view is " + std::to_string(v.width) + "x" + std::to_string(v.height) +
                            ", dataset resolution is " + std::to_string(resolution));
  }
  model_names.push_back(std::move(name));
  model_labels.push_back(label);
  for (const auto& v : views) images.push_back(v.pixels);
}

std::vector<int> ViewDataset::image_labels() const {
  std::vector<int> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = label(i);
  return out;
}

Tensor<float> ViewDataset::batch(std::span<const std::size_t> indices) const {
  const auto r = static_cast<std::size_t>(resolution);
  Tensor<float> x({indices.size(), 1, r, r});
  float* dst = x.data();
  for (auto idx : indices) {
    for (auto p : images.at(idx)) *dst++ = p ? 1.0f : 0.0f;
  }
  return x;
}

Tensor<float> predict_dataset(const Network& net, const ViewDataset& data, int jobs) {
  keep_large_blocks_in_heap();
  const auto k = static_cast<std::size_t>(net.spec().classes);
  Tensor<float> probs({data.size(), k});
  const std::size_t chunks = (data.size() + kInferChunk - 1) / kInferChunk;
  parallel_for(chunks, jobs, [&](std::size_t c) {
    const std::size_t begin = c * kInferChunk, end = std::min(data.size(), begin + kInferChunk);
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const auto p = net.predict(data.batch(idx));
    std::copy(p.data(), p.data() + p.size(), probs.data() + begin * k);
  });
  return probs;
}

ImageScore score_images(const Tensor<float>& probs, std::span<const int> labels) {
  if (probs.rank() != 2 || probs.dim(0) != labels.size()) throw InvalidArgument("score_images: shape mismatch");
  const std::size_t k = probs.dim(1);
  if (labels.empty()) return {};
  double loss = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const float* row = probs.data() + i * k;
    const auto y = static_cast<std::size_t>(labels[i]);
    loss -= std::log(std::max(static_cast<double>(row[y]), 1e-300));
    correct += static_cast<std::size_t>(std::max_element(row, row + k) - row) == y;
  }
  const auto n = static_cast<double>(labels.size());
  return {loss / n, static_cast<double>(correct) / n};
}

void train(Network& net, TrainingState& state, const ViewDataset& train_set, const ViewDataset* test_set,
           const TrainConfig& cfg, int jobs, const EpochCallback& on_epoch) {
  cfg.validate();
  if (state.epoch >= cfg.epochs) return;
  keep_large_blocks_in_heap();
  const auto k = static_cast<std::size_t>(net.spec().classes);
  if (train_set.size() < 2) throw InvalidArgument("training set needs at least 2 images");
  if (train_set.resolution != net.spec().input_size)
    throw ConfigError("images are " + std::to_string(train_set.resolution) + " px but the network expects " +
                      std::to_string(net.spec().input_size));
  const auto labels = train_set.image_labels();
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw InvalidArgument("training label out of range");
  }
  if (state.class_weights.size() == 0) {
    state.class_weights = cfg.class_weighting ? nn::compute_class_weights(labels, k) : nn::ClassWeights::uniform(k);
  }
  if (state.class_weights.size() != k) throw InvalidArgument("class weight count does not match the network");
  state.adam.config.learning_rate = cfg.learning_rate;

  std::vector<int> test_labels;
  if (test_set) test_labels = test_set->image_labels();

  const std::size_t n = train_set.size();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  std::vector<std::size_t> order(n);
  std::vector<int> batch_labels;
  for (int epoch = state.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    fisher_yates(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0;
    std::size_t seen = 0, correct = 0, batch_no = 0;
    for (std::size_t start = 0; start < n; start += bs, ++batch_no) {
      const std::size_t end = std::min(n, start + bs);
      if (end - start < 2) break;
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      batch_labels.clear();
      for (auto i : idx) batch_labels.push_back(labels[i]);

      const auto logits = net.forward_logits(train_set.batch(idx), nn::Mode::train);
      auto res = nn::softmax_xent_weighted(logits, batch_labels, state.class_weights);
      if (!std::isfinite(res.loss))
        throw Error("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(batch_no) + " (learning rate " + std::to_string(cfg.learning_rate) +
                    "); aborting");
      net.backward(res.grad_logits);
      auto params = net.params();
      nn::adam_step(params, state.adam);

      loss_sum += static_cast<double>(res.loss) * static_cast<double>(idx.size());
      seen += idx.size();
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const float* row = logits.data() + b * k;
        correct += static_cast<int>(std::max_element(row, row + k) - row) == batch_labels[b];
      }
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(seen);
    m.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    if (test_set && test_set->size() > 0) {
      const auto s = score_images(predict_dataset(net, *test_set, jobs), test_labels);
      m.test_loss = s.loss;
      m.test_accuracy = s.accuracy;
    }
    state.history.push_back(m);
    state.epoch = epoch;
    if (on_epoch) on_epoch(net, state);
  }
}

}  // namespace lfdnet
