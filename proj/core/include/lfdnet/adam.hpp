#pragma once

#include <string>
#include <vector>

#include "lfdnet/tensor.hpp"

namespace lfdnet::nn {

/// A trainable tensor and its gradient buffer, owned elsewhere.
template <typename T>
struct Param {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  long step = 0;
};

/// m <- b1 m + (1 - b1) g; v <- b2 v + (1 - b2) g^2;
/// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) with bias-corrected moments.
/// Moment buffers are allocated on the first call.
template <typename T>
void adam_step(std::vector<Param<T>>& params, AdamState<T>& state);

}  // namespace lfdnet::nn
