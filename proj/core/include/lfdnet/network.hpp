#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lfdnet/adam.hpp"
#include "lfdnet/arch.hpp"
#include "lfdnet/layers.hpp"

namespace lfdnet {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T>* tensor;
};

/// Residual block: entry batch norm, two conv+ReLU layers on the main path,
/// shortcut summed at the end. A downsampling block max-pools the normalized
/// input on the main path and projects it with a stride-2 1x1 conv on the
/// shortcut; a channel-changing block without downsampling uses a stride-1
/// projection; otherwise the shortcut is the identity on the block input.
template <typename T>
struct ResidualBlock {
  nn::BatchNormLayer<T> bn;
  nn::ConvLayer<T> conv_a, conv_b;
  std::optional<nn::ConvLayer<T>> proj;
  bool downsample = false;

  struct Grads {
    Tensor<T> bn_gamma, bn_beta, a_w, a_b, b_w, b_b, p_w, p_b;
  } grads;

  struct Cache {
    Shape input_shape;
    Tensor<T> normed, pooled, act_a, act_b;
    nn::BatchNormCache<T> bn;
    std::vector<std::uint32_t> argmax;
  } cache;

  Tensor<T> forward_train(const Tensor<T>& x);
  Tensor<T> forward_infer(const Tensor<T>& x) const;
  /// Writes parameter gradients into `grads` and returns dL/dx.
  Tensor<T> backward(const Tensor<T>& grad_out);
};

/// The residual view classifier built from an ArchSpec.
template <typename T>
class BasicNetwork {
 public:
  /// He-uniform weights, unit BN scale, zero biases; `seed` also seeds dropout.
  BasicNetwork(ArchSpec spec, std::uint64_t seed);

  const ArchSpec& spec() const noexcept { return spec_; }

  /// Logits [B, classes]. Train mode caches activations for backward().
  Tensor<T> forward_logits(const Tensor<T>& x, nn::Mode mode);
  /// Softmax probabilities [B, classes].
  Tensor<T> forward(const Tensor<T>& x, nn::Mode mode);
  /// Inference without touching any state.
  Tensor<T> predict_logits(const Tensor<T>& x) const;
  Tensor<T> predict(const Tensor<T>& x) const;

  /// Back-propagates dL/dlogits through the last train-mode forward pass.
  void backward(const Tensor<T>& grad_logits);

  /// Trainable parameters paired with their gradient buffers, in a fixed order.
  std::vector<nn::Param<T>> params();
  /// Every persistent tensor (parameters, then batch-norm running statistics).
  std::vector<NamedTensor<T>> state();
  std::size_t parameter_count() const;

  std::mt19937_64& dropout_rng() { return dropout_rng_; }

  // Layer access for tests.
  nn::ConvLayer<T>& stem() { return stem_; }
  std::vector<ResidualBlock<T>>& blocks() { return blocks_; }
  nn::DenseLayer<T>& output_layer() { return out_; }
  std::vector<nn::DenseLayer<T>>& hidden_layers() { return hidden_; }

 private:
  void check_input(const Tensor<T>& x) const;

  ArchSpec spec_;
  nn::ConvLayer<T> stem_;
  std::vector<ResidualBlock<T>> blocks_;
  nn::BatchNormLayer<T> head_bn_;
  std::vector<nn::DenseLayer<T>> hidden_;
  nn::DenseLayer<T> out_;
  std::mt19937_64 dropout_rng_;

  struct Grads {
    Tensor<T> stem_w, stem_b, head_gamma, head_beta;
    std::vector<Tensor<T>> hidden_w, hidden_b;
    Tensor<T> out_w, out_b;
  } grads_;

  struct Cache {
    Tensor<T> input, stem_act;
    std::vector<std::uint32_t> stem_argmax;
    Shape stem_act_shape;
    Tensor<T> trunk_out;
    nn::BatchNormCache<T> head_bn;
    Shape pooled_shape;
    std::vector<Tensor<T>> fc_in, fc_act, fc_mask;
    Tensor<T> out_in;
  } cache_;
};

using Network = BasicNetwork<float>;

}  // namespace lfdnet
