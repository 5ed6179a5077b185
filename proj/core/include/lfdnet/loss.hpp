#pragma once

#include <span>
#include <vector>

#include "lfdnet/tensor.hpp"

namespace lfdnet::nn {

/// Per-class loss multipliers w_c = N / (K * n_c).
struct ClassWeights {
  std::vector<double> weights;

  static ClassWeights uniform(std::size_t num_classes) { return {std::vector<double>(num_classes, 1.0)}; }
  std::size_t size() const { return weights.size(); }
};

/// Every class in [0, K) must occur at least once.
ClassWeights compute_class_weights(std::span<const int> labels, std::size_t num_classes);

/// Row-wise softmax with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

template <typename T>
struct LossResult {
  T loss;
  Tensor<T> grad_logits;
};

/// loss = (1/B) sum_i w[y_i] * -log softmax(logits_i)[y_i];
/// grad = w[y_i] * (p_i - onehot(y_i)) / B.
template <typename T>
LossResult<T> softmax_xent_weighted(const Tensor<T>& logits, std::span<const int> labels, const ClassWeights& weights);

}  // namespace lfdnet::nn
