#include "lfdnet/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lfdnet::nn {

ClassWeights compute_class_weights(std::span<const int> labels, std::size_t num_classes) {
  if (num_classes == 0) throw InvalidArgument("class count must be positive");
  std::vector<std::size_t> counts(num_classes, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw InvalidArgument("label " + std::to_string(y) + " out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  ClassWeights w;
  w.weights.resize(num_classes);
  const double n = static_cast<double>(labels.size());
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) throw InvalidArgument("empty class " + std::to_string(c));
    w.weights[c] = n / (static_cast<double>(num_classes) * static_cast<double>(counts[c]));
  }
  return w;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw InvalidArgument("softmax expects [B, K]");
  const auto b = logits.dim(0), k = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (std::size_t i = 0; i < b; ++i) {
    const T* z = logits.data() + i * k;
    T* out = p.data() + i * k;
    const T mx = *std::max_element(z, z + k);
    double sum = 0;
    for (std::size_t j = 0; j < k; ++j) {
      out[j] = static_cast<T>(std::exp(static_cast<double>(z[j] - mx)));
      sum += out[j];
    }
    for (std::size_t j = 0; j < k; ++j) out[j] = static_cast<T>(out[j] / sum);
  }
  return p;
}

template <typename T>
LossResult<T> softmax_xent_weighted(const Tensor<T>& logits, std::span<const int> labels, const ClassWeights& weights) {
  if (logits.rank() != 2) throw InvalidArgument("softmax_xent expects [B, K] logits");
  const auto b = logits.dim(0), k = logits.dim(1);
  if (labels.size() != b) throw InvalidArgument("label count does not match batch size");
  if (weights.size() != k) throw InvalidArgument("class weight count does not match class count");
  LossResult<T> r{T(0), Tensor<T>(logits.shape())};
  double total = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw InvalidArgument("label " + std::to_string(y) + " out of range");
    const T* z = logits.data() + i * k;
    const T mx = *std::max_element(z, z + k);
    double sum = 0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(z[j] - mx));
    const double log_sum = std::log(sum);
    const double w = weights.weights[static_cast<std::size_t>(y)];
    total += w * -(static_cast<double>(z[y] - mx) - log_sum);
    T* g = r.grad_logits.data() + i * k;
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(static_cast<double>(z[j] - mx) - log_sum);
      const double onehot = static_cast<std::size_t>(y) == j ? 1.0 : 0.0;
      g[j] = static_cast<T>(w * (p - onehot) / static_cast<double>(b));
    }
  }
  r.loss = static_cast<T>(total / static_cast<double>(b));
  return r;
}

template Tensor<float> softmax(const Tensor<float>&);
template Tensor<double> softmax(const Tensor<double>&);
template LossResult<float> softmax_xent_weighted(const Tensor<float>&, std::span<const int>, const ClassWeights&);
template LossResult<double> softmax_xent_weighted(const Tensor<double>&, std::span<const int>, const ClassWeights&);

}  // namespace lfdnet::nn
