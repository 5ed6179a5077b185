#pragma once

// Forward/backward kernels for every layer type of the residual classifier.
// All kernels are deterministic: reductions run in a fixed order.

#include <cstdint>
#include <random>
#include <vector>

#include "lfdnet/random.hpp"
#include "lfdnet/tensor.hpp"

namespace lfdnet::nn {

enum class Mode { train, infer };

template <typename T>
struct ConvLayer {
  Tensor<T> weight;  // [out_ch, in_ch, kh, kw]
  Tensor<T> bias;    // [out_ch]
  int stride = 1;
  int padding = 0;

  /// Square kernel of size 1, 3 or 7 with "same" padding (k-1)/2; stride 1 or 2.
  static ConvLayer make(std::size_t in_ch, std::size_t out_ch, int kernel, int stride);

  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
  int kernel() const { return static_cast<int>(weight.dim(2)); }
};

template <typename T>
struct ConvGrads {
  Tensor<T> grad_x;  // empty when not requested
  Tensor<T> grad_w;
  Tensor<T> grad_b;
};

/// Cross-correlation with zero padding: H' = (H + 2p - k) / s + 1.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvLayer<T>& layer);

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const ConvLayer<T>& layer, const Tensor<T>& grad_out,
                             bool need_grad_x = true);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);
/// `y` is the forward output; gradient passes where y > 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& grad_out);

template <typename T>
struct MaxPoolResult {
  Tensor<T> output;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

/// 2x2 window, stride 2. Ties resolve to the first element in row-major order.
template <typename T>
MaxPoolResult<T> maxpool2x2_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> maxpool2x2_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax,
                              const Tensor<T>& grad_out);

/// k x k window, stride k.
template <typename T>
Tensor<T> avgpool_forward(const Tensor<T>& x, int k);
template <typename T>
Tensor<T> avgpool_backward(const Shape& input_shape, int k, const Tensor<T>& grad_out);

template <typename T>
struct BatchNormLayer {
  Tensor<T> gamma, beta;
  Tensor<T> running_mean, running_var;
  double momentum = 0.99;
  double epsilon = 1e-5;

  static BatchNormLayer make(std::size_t channels, double momentum = 0.99, double epsilon = 1e-5);
  std::size_t channels() const { return gamma.size(); }
};

template <typename T>
struct BatchNormCache {
  Tensor<T> xhat;
  std::vector<T> inv_std;
};

/// Per-channel normalization over (batch, spatial). Train mode uses batch
/// statistics and updates the running ones: running = m * running + (1 - m) * batch.
/// The running variance tracks the unbiased batch variance.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormLayer<T>& layer, Mode mode,
                            BatchNormCache<T>* cache = nullptr);

template <typename T>
struct BatchNormGrads {
  Tensor<T> grad_x, grad_gamma, grad_beta;
};

/// Backward through the train-mode forward that filled `cache`.
template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormLayer<T>& layer, const BatchNormCache<T>& cache,
                                     const Tensor<T>& grad_out);

/// Inverted dropout. `mask` receives 0 or 1/(1-p) per unit (train mode only).
template <typename T>
Tensor<T> dropout_forward(const Tensor<T>& x, double p, Mode mode, std::mt19937_64& rng, Tensor<T>* mask = nullptr);
template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& mask, const Tensor<T>& grad_out);

template <typename T>
struct DenseLayer {
  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;    // [out]

  static DenseLayer make(std::size_t in, std::size_t out);
  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }
};

template <typename T>
struct DenseGrads {
  Tensor<T> grad_x, grad_w, grad_b;
};

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const DenseLayer<T>& layer);
template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const DenseLayer<T>& layer, const Tensor<T>& grad_out);

/// He-uniform initialization: U(-sqrt(6 / fan_in), sqrt(6 / fan_in)); biases zero.
template <typename T>
void he_uniform(Tensor<T>& weight, std::size_t fan_in, std::mt19937_64& rng);

/// Uniform double in [0, 1) from 53 random bits; stable across standard libraries.
inline double uniform01(std::mt19937_64& rng) { return uniform_real(rng); }

}  // namespace lfdnet::nn

namespace lfdnet::nn {

/// Inference-mode batch norm with running statistics; leaves the layer untouched.
template <typename T>
Tensor<T> batchnorm_infer(const Tensor<T>& x, const BatchNormLayer<T>& layer);

/// Elementwise a + b.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace lfdnet::nn
