// Eigen evaluates small products coefficient-wise with SIMD reductions whose
// peeling depends on pointer alignment, so identical inputs at different heap
// addresses could round differently. Always take the packed GEMM path.
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 0
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "lfdnet/layers.hpp"

namespace lfdnet {

std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

}  // namespace lfdnet

namespace lfdnet::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) throw InvalidArgument(std::string(what) + ": expected rank " + std::to_string(rank) +
                                              ", got " + shape_string(s));
}

struct ConvDims {
  std::size_t n, c, h, w, o, k, ho, wo;
  int stride, pad;
};

template <typename T>
ConvDims conv_dims(const Tensor<T>& x, const ConvLayer<T>& layer) {
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(layer.weight.shape(), 4, "conv2d weight");
  const auto& ws = layer.weight.shape();
  if (ws[1] != x.dim(1))
    throw InvalidArgument("conv2d channel mismatch: input has " + std::to_string(x.dim(1)) + ", kernel expects " +
                          std::to_string(ws[1]));
  if (ws[2] != ws[3]) throw InvalidArgument("conv2d kernel must be square");
  if (layer.bias.size() != ws[0]) throw InvalidArgument("conv2d bias length mismatch");
  if (layer.stride < 1 || layer.padding < 0) throw InvalidArgument("conv2d bad stride/padding");
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), ws[0], ws[2], 0, 0, layer.stride, layer.padding};
  const long hp = static_cast<long>(d.h) + 2 * d.pad - static_cast<long>(d.k);
  const long wp = static_cast<long>(d.w) + 2 * d.pad - static_cast<long>(d.k);
  if (hp < 0 || wp < 0) throw InvalidArgument("conv2d kernel larger than padded input");
  d.ho = static_cast<std::size_t>(hp / d.stride + 1);
  d.wo = static_cast<std::size_t>(wp / d.stride + 1);
  return d;
}

bool is_pointwise(const ConvDims& d) { return d.k == 1 && d.stride == 1 && d.pad == 0; }

// Range of output columns whose input column ow*s - p + kj lies in [0, w).
struct ColRange {
  std::size_t begin, end;
};

inline ColRange valid_cols(const ConvDims& d, std::size_t kj) {
  const long off = static_cast<long>(kj) - d.pad;
  long b = off >= 0 ? 0 : (-off + d.stride - 1) / d.stride;
  long e = (static_cast<long>(d.w) - 1 - off);
  e = e < 0 ? 0 : e / d.stride + 1;
  b = std::min<long>(b, static_cast<long>(d.wo));
  e = std::clamp<long>(e, b, static_cast<long>(d.wo));
  return {static_cast<std::size_t>(b), static_cast<std::size_t>(e)};
}

// Output rows [oh0, oh1) only:
// cols[(c*k + ki)*k + kj, (oh - oh0)*wo + ow] = x[c, oh*s - p + ki, ow*s - p + kj]
template <typename T>
void im2col(const T* x, const ConvDims& d, std::size_t oh0, std::size_t oh1, T* cols) {
  const std::size_t hw_out = (oh1 - oh0) * d.wo;
  for (std::size_t c = 0; c < d.c; ++c) {
    const T* xc = x + c * d.h * d.w;
    for (std::size_t ki = 0; ki < d.k; ++ki) {
      for (std::size_t kj = 0; kj < d.k; ++kj) {
        T* row = cols + ((c * d.k + ki) * d.k + kj) * hw_out;
        const auto [cb, ce] = valid_cols(d, kj);
        const long off = static_cast<long>(kj) - d.pad;
        for (std::size_t oh = oh0; oh < oh1; ++oh) {
          const long ih = static_cast<long>(oh) * d.stride - d.pad + static_cast<long>(ki);
          T* dst = row + (oh - oh0) * d.wo;
          if (ih < 0 || ih >= static_cast<long>(d.h)) {
            std::fill(dst, dst + d.wo, T(0));
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(ih) * d.w;
          std::fill(dst, dst + cb, T(0));
          if (d.stride == 1) {
            std::copy(src + (static_cast<long>(cb) + off), src + (static_cast<long>(ce) + off), dst + cb);
          } else {
            for (std::size_t ow = cb; ow < ce; ++ow) dst[ow] = src[static_cast<long>(ow) * d.stride + off];
          }
          std::fill(dst + ce, dst + d.wo, T(0));
        }
      }
    }
  }
}

// Accumulates (does not clear) the rows [oh0, oh1) of a column buffer into x.
template <typename T>
void col2im(const T* cols, const ConvDims& d, std::size_t oh0, std::size_t oh1, T* x) {
  const std::size_t hw_out = (oh1 - oh0) * d.wo;
  for (std::size_t c = 0; c < d.c; ++c) {
    T* xc = x + c * d.h * d.w;
    for (std::size_t ki = 0; ki < d.k; ++ki) {
      for (std::size_t kj = 0; kj < d.k; ++kj) {
        const T* row = cols + ((c * d.k + ki) * d.k + kj) * hw_out;
        const auto [cb, ce] = valid_cols(d, kj);
        const long off = static_cast<long>(kj) - d.pad;
        for (std::size_t oh = oh0; oh < oh1; ++oh) {
          const long ih = static_cast<long>(oh) * d.stride - d.pad + static_cast<long>(ki);
          if (ih < 0 || ih >= static_cast<long>(d.h)) continue;
          T* dst = xc + static_cast<std::size_t>(ih) * d.w;
          const T* src = row + (oh - oh0) * d.wo;
          if (d.stride == 1) {
            T* dd = dst + off;
            for (std::size_t ow = cb; ow < ce; ++ow) dd[ow] += src[ow];
          } else {
            for (std::size_t ow = cb; ow < ce; ++ow) dst[static_cast<long>(ow) * d.stride + off] += src[ow];
          }
        }
      }
    }
  }
}

template <typename T>
std::size_t channel_spatial(const Tensor<T>& x, std::size_t& spatial) {
  if (x.rank() < 2) throw InvalidArgument("expected a tensor of rank >= 2");
  spatial = 1;
  for (std::size_t i = 2; i < x.rank(); ++i) spatial *= x.dim(i);
  return x.dim(1);
}

}  // namespace

template <typename T>
ConvLayer<T> ConvLayer<T>::make(std::size_t in_ch, std::size_t out_ch, int kernel, int stride) {
  if (kernel != 1 && kernel != 3 && kernel != 7) throw InvalidArgument("conv kernel must be 1, 3 or 7");
  if (stride != 1 && stride != 2) throw InvalidArgument("conv stride must be 1 or 2");
  if (in_ch == 0 || out_ch == 0) throw InvalidArgument("conv channels must be positive");
  ConvLayer l;
  const auto k = static_cast<std::size_t>(kernel);
  l.weight = Tensor<T>({out_ch, in_ch, k, k});
  l.bias = Tensor<T>({out_ch});
  l.stride = stride;
  l.padding = (kernel - 1) / 2;
  return l;
}

// Output rows per im2col chunk, sized so the column buffer stays cache-resident.
std::size_t chunk_rows(const ConvDims& d, std::size_t kdim) {
  constexpr std::size_t kTargetElems = 1u << 16;
  return std::clamp<std::size_t>(kTargetElems / std::max<std::size_t>(1, kdim * d.wo), 1, d.ho);
}

template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvLayer<T>& layer) {
  const auto d = conv_dims(x, layer);
  const std::size_t kdim = d.c * d.k * d.k, hw_out = d.ho * d.wo;
  const auto ek = static_cast<Eigen::Index>(kdim), eo = static_cast<Eigen::Index>(d.o),
             ehw = static_cast<Eigen::Index>(hw_out);
  Tensor<T> y({d.n, d.o, d.ho, d.wo});
  CMapMat<T> w(layer.weight.data(), eo, ek);
  const bool pointwise = is_pointwise(d);
  const std::size_t rows = pointwise ? d.ho : chunk_rows(d, kdim);
  std::vector<T> cols(pointwise ? 0 : kdim * rows * d.wo);
  for (std::size_t n = 0; n < d.n; ++n) {
    const T* xn = x.data() + n * d.c * d.h * d.w;
    T* yn = y.data() + n * d.o * hw_out;
    if (pointwise) {
      MapMat<T>(yn, eo, ehw).noalias() = w * CMapMat<T>(xn, ek, ehw);
    } else {
      for (std::size_t oh0 = 0; oh0 < d.ho; oh0 += rows) {
        const std::size_t oh1 = std::min(d.ho, oh0 + rows);
        const auto ecols = static_cast<Eigen::Index>((oh1 - oh0) * d.wo);
        im2col(xn, d, oh0, oh1, cols.data());
        StridedMap<T>(yn + oh0 * d.wo, eo, ecols, Eigen::OuterStride<>(ehw)).noalias() =
            w * CMapMat<T>(cols.data(), ek, ecols);
      }
    }
    MapMat<T> out(yn, eo, ehw);
    for (std::size_t o = 0; o < d.o; ++o) out.row(static_cast<Eigen::Index>(o)).array() += layer.bias[o];
  }
  return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const ConvLayer<T>& layer, const Tensor<T>& grad_out,
                             bool need_grad_x) {
  const auto d = conv_dims(x, layer);
  if (grad_out.shape() != Shape{d.n, d.o, d.ho, d.wo})
    throw InvalidArgument("conv2d_backward: grad_out shape " + shape_string(grad_out.shape()) +
                          " does not match forward output");
  const std::size_t kdim = d.c * d.k * d.k, hw_out = d.ho * d.wo;
  const auto ek = static_cast<Eigen::Index>(kdim), ehw = static_cast<Eigen::Index>(hw_out),
             eo = static_cast<Eigen::Index>(d.o);
  ConvGrads<T> g;
  g.grad_w = Tensor<T>(layer.weight.shape());
  g.grad_b = Tensor<T>(layer.bias.shape());
  if (need_grad_x) g.grad_x = Tensor<T>(x.shape());

  CMapMat<T> w(layer.weight.data(), eo, ek);
  MapMat<T> gw(g.grad_w.data(), eo, ek);
  const bool pointwise = is_pointwise(d);
  const std::size_t rows = pointwise ? d.ho : chunk_rows(d, kdim);
  std::vector<T> cols(pointwise ? 0 : kdim * rows * d.wo);
  std::vector<T> gcols(need_grad_x && !pointwise ? kdim * rows * d.wo : 0);
  for (std::size_t n = 0; n < d.n; ++n) {
    const T* xn = x.data() + n * d.c * d.h * d.w;
    const T* gon = grad_out.data() + n * d.o * hw_out;
    T* gxn = need_grad_x ? g.grad_x.data() + n * d.c * d.h * d.w : nullptr;
    CMapMat<T> go(gon, eo, ehw);
    for (std::size_t o = 0; o < d.o; ++o) {
      T s = 0;
      for (std::size_t i = 0; i < hw_out; ++i) s += gon[o * hw_out + i];
      g.grad_b[o] += s;
    }
    if (pointwise) {
      gw.noalias() += go * CMapMat<T>(xn, ek, ehw).transpose();
      if (need_grad_x) MapMat<T>(gxn, ek, ehw).noalias() = w.transpose() * go;
      continue;
    }
    for (std::size_t oh0 = 0; oh0 < d.ho; oh0 += rows) {
      const std::size_t oh1 = std::min(d.ho, oh0 + rows);
      const auto ecols = static_cast<Eigen::Index>((oh1 - oh0) * d.wo);
      im2col(xn, d, oh0, oh1, cols.data());
      CStridedMap<T> goc(gon + oh0 * d.wo, eo, ecols, Eigen::OuterStride<>(ehw));
      gw.noalias() += goc * CMapMat<T>(cols.data(), ek, ecols).transpose();
      if (need_grad_x) {
        MapMat<T>(gcols.data(), ek, ecols).noalias() = w.transpose() * goc;
        col2im(gcols.data(), d, oh0, oh1, gxn);
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::max(x[i], T(0));
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  if (y.shape() != grad_out.shape()) throw InvalidArgument("relu_backward shape mismatch");
  Tensor<T> g(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = y[i] > T(0) ? grad_out[i] : T(0);
  return g;
}

template <typename T>
MaxPoolResult<T> maxpool2x2_forward(const Tensor<T>& x) {
  require_rank(x.shape(), 4, "maxpool input");
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 || w % 2) throw InvalidArgument("maxpool2x2: spatial dims " + shape_string(x.shape()) + " not divisible by 2");
  const auto ho = h / 2, wo = w / 2;
  MaxPoolResult<T> r{Tensor<T>({n, c, ho, wo}), std::vector<std::uint32_t>(n * c * ho * wo)};
  std::size_t out = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j, ++out) {
        const std::size_t cand[4] = {base + (2 * i) * w + 2 * j, base + (2 * i) * w + 2 * j + 1,
                                     base + (2 * i + 1) * w + 2 * j, base + (2 * i + 1) * w + 2 * j + 1};
        std::size_t best = cand[0];
        for (int q = 1; q < 4; ++q) {
          if (x[cand[q]] > x[best]) best = cand[q];
        }
        r.output[out] = x[best];
        r.argmax[out] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool2x2_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax,
                              const Tensor<T>& grad_out) {
  if (argmax.size() != grad_out.size()) throw InvalidArgument("maxpool_backward: argmax/grad size mismatch");
  Tensor<T> g(input_shape);
  for (std::size_t i = 0; i < grad_out.size(); ++i) g[argmax[i]] += grad_out[i];
  return g;
}

template <typename T>
Tensor<T> avgpool_forward(const Tensor<T>& x, int k) {
  require_rank(x.shape(), 4, "avgpool input");
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto kk = static_cast<std::size_t>(k);
  if (k < 1 || h % kk || w % kk)
    throw InvalidArgument("avgpool: spatial dims " + shape_string(x.shape()) + " not divisible by " + std::to_string(k));
  const auto ho = h / kk, wo = w / kk;
  Tensor<T> y({n, c, ho, wo});
  const T inv = T(1) / static_cast<T>(kk * kk);
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* src = x.data() + plane * h * w;
    T* dst = y.data() + plane * ho * wo;
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        T s = 0;
        for (std::size_t a = 0; a < kk; ++a)
          for (std::size_t b = 0; b < kk; ++b) s += src[(i * kk + a) * w + j * kk + b];
        dst[i * wo + j] = s * inv;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> avgpool_backward(const Shape& input_shape, int k, const Tensor<T>& grad_out) {
  require_rank(input_shape, 4, "avgpool_backward input");
  const auto kk = static_cast<std::size_t>(k);
  const auto n = input_shape[0], c = input_shape[1], h = input_shape[2], w = input_shape[3];
  const auto ho = h / kk, wo = w / kk;
  if (grad_out.shape() != Shape{n, c, ho, wo}) throw InvalidArgument("avgpool_backward shape mismatch");
  Tensor<T> g(input_shape);
  const T inv = T(1) / static_cast<T>(kk * kk);
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* src = grad_out.data() + plane * ho * wo;
    T* dst = g.data() + plane * h * w;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) dst[i * w + j] = src[(i / kk) * wo + j / kk] * inv;
  }
  return g;
}

template <typename T>
BatchNormLayer<T> BatchNormLayer<T>::make(std::size_t channels, double momentum, double epsilon) {
  BatchNormLayer l;
  l.gamma = Tensor<T>({channels}, T(1));
  l.beta = Tensor<T>({channels}, T(0));
  l.running_mean = Tensor<T>({channels}, T(0));
  l.running_var = Tensor<T>({channels}, T(1));
  l.momentum = momentum;
  l.epsilon = epsilon;
  return l;
}

// Fixed-order 8-lane double accumulation: vectorizes without relying on
// reassociation, so results are identical across runs.
template <typename T>
double lane_sum(const T* p, std::size_t n) {
  double acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int j = 0; j < 8; ++j) acc[j] += static_cast<double>(p[i + j]);
  for (; i < n; ++i) acc[i % 8] += static_cast<double>(p[i]);
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
double lane_centered_sq(const T* p, std::size_t n, double mean) {
  double acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int j = 0; j < 8; ++j) {
      const double d = static_cast<double>(p[i + j]) - mean;
      acc[j] += d * d;
    }
  for (; i < n; ++i) {
    const double d = static_cast<double>(p[i]) - mean;
    acc[i % 8] += d * d;
  }
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
double lane_dot(const T* a, const T* b, std::size_t n) {
  double acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int j = 0; j < 8; ++j) acc[j] += static_cast<double>(a[i + j]) * static_cast<double>(b[i + j]);
  for (; i < n; ++i) acc[i % 8] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

template <typename T>
Tensor<T> batchnorm_infer(const Tensor<T>& x, const BatchNormLayer<T>& layer) {
  std::size_t spatial = 0;
  const std::size_t c = channel_spatial(x, spatial);
  const std::size_t n = x.dim(0);
  if (c != layer.channels()) throw InvalidArgument("batchnorm channel mismatch");
  Tensor<T> y(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(layer.running_var[ch]) + layer.epsilon);
    const T scale = static_cast<T>(layer.gamma[ch] * inv);
    const T mean = layer.running_mean[ch], shift = layer.beta[ch];
    for (std::size_t b = 0; b < n; ++b) {
      const T* src = x.data() + (b * c + ch) * spatial;
      T* dst = y.data() + (b * c + ch) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) dst[i] = (src[i] - mean) * scale + shift;
    }
  }
  return y;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw InvalidArgument("add: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormLayer<T>& layer, Mode mode, BatchNormCache<T>* cache) {
  std::size_t spatial = 0;
  const std::size_t c = channel_spatial(x, spatial);
  const std::size_t n = x.dim(0);
  if (c != layer.channels()) throw InvalidArgument("batchnorm channel mismatch");
  if (mode == Mode::infer) return batchnorm_infer(x, layer);
  Tensor<T> y(x.shape());
  if (n < 2) throw InvalidArgument("batchnorm in train mode needs a batch of at least 2");
  const std::size_t count = n * spatial;
  if (cache) {
    cache->xhat = Tensor<T>(x.shape());
    cache->inv_std.assign(c, T(0));
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0;
    for (std::size_t b = 0; b < n; ++b) sum += lane_sum(x.data() + (b * c + ch) * spatial, spatial);
    const double mean = sum / static_cast<double>(count);
    double sq = 0;
    for (std::size_t b = 0; b < n; ++b) sq += lane_centered_sq(x.data() + (b * c + ch) * spatial, spatial, mean);
    const double var = sq / static_cast<double>(count);
    const double inv = 1.0 / std::sqrt(var + layer.epsilon);
    const T g = layer.gamma[ch], be = layer.beta[ch];
    const T mean_t = static_cast<T>(mean), inv_t = static_cast<T>(inv);
    for (std::size_t b = 0; b < n; ++b) {
      const T* src = x.data() + (b * c + ch) * spatial;
      T* dst = y.data() + (b * c + ch) * spatial;
      if (cache) {
        T* xh = cache->xhat.data() + (b * c + ch) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) {
          xh[i] = (src[i] - mean_t) * inv_t;
          dst[i] = g * xh[i] + be;
        }
      } else {
        for (std::size_t i = 0; i < spatial; ++i) dst[i] = g * ((src[i] - mean_t) * inv_t) + be;
      }
    }
    if (cache) cache->inv_std[ch] = static_cast<T>(inv);
    const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
    layer.running_mean[ch] = static_cast<T>(layer.momentum * layer.running_mean[ch] + (1.0 - layer.momentum) * mean);
    layer.running_var[ch] = static_cast<T>(layer.momentum * layer.running_var[ch] + (1.0 - layer.momentum) * unbiased);
  }
  return y;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormLayer<T>& layer, const BatchNormCache<T>& cache,
                                     const Tensor<T>& grad_out) {
  if (grad_out.shape() != cache.xhat.shape()) throw InvalidArgument("batchnorm_backward shape mismatch");
  std::size_t spatial = 0;
  const std::size_t c = channel_spatial(grad_out, spatial);
  const std::size_t n = grad_out.dim(0);
  const double count = static_cast<double>(n * spatial);
  BatchNormGrads<T> g{Tensor<T>(grad_out.shape()), Tensor<T>({c}), Tensor<T>({c})};
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0, sum_dy_xhat = 0;
    for (std::size_t b = 0; b < n; ++b) {
      const T* dy = grad_out.data() + (b * c + ch) * spatial;
      const T* xh = cache.xhat.data() + (b * c + ch) * spatial;
      sum_dy += lane_sum(dy, spatial);
      sum_dy_xhat += lane_dot(dy, xh, spatial);
    }
    g.grad_beta[ch] = static_cast<T>(sum_dy);
    g.grad_gamma[ch] = static_cast<T>(sum_dy_xhat);
    // dx = gamma * inv_std * (dy - mean(dy) - xhat * mean(dy * xhat))
    const T k = static_cast<T>(static_cast<double>(layer.gamma[ch]) * cache.inv_std[ch]);
    const T m_dy = static_cast<T>(sum_dy / count), m_dyx = static_cast<T>(sum_dy_xhat / count);
    for (std::size_t b = 0; b < n; ++b) {
      const T* dy = grad_out.data() + (b * c + ch) * spatial;
      const T* xh = cache.xhat.data() + (b * c + ch) * spatial;
      T* dx = g.grad_x.data() + (b * c + ch) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) dx[i] = k * ((dy[i] - m_dy) - xh[i] * m_dyx);
    }
  }
  return g;
}

template <typename T>
Tensor<T> dropout_forward(const Tensor<T>& x, double p, Mode mode, std::mt19937_64& rng, Tensor<T>* mask) {
  if (!(p >= 0.0 && p < 1.0)) throw InvalidArgument("dropout probability must be in [0, 1)");
  if (mode == Mode::infer || p == 0.0) {
    if (mask) *mask = Tensor<T>(x.shape(), T(1));
    return x;
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  Tensor<T> y(x.shape());
  Tensor<T> m(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = uniform01(rng) < p ? T(0) : keep_scale;
    y[i] = x[i] * m[i];
  }
  if (mask) *mask = std::move(m);
  return y;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& mask, const Tensor<T>& grad_out) {
  if (mask.shape() != grad_out.shape()) throw InvalidArgument("dropout_backward shape mismatch");
  Tensor<T> g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * mask[i];
  return g;
}

template <typename T>
DenseLayer<T> DenseLayer<T>::make(std::size_t in, std::size_t out) {
  if (in == 0 || out == 0) throw InvalidArgument("dense layer sizes must be positive");
  return DenseLayer{Tensor<T>({out, in}), Tensor<T>({out})};
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const DenseLayer<T>& layer) {
  require_rank(x.shape(), 2, "dense input");
  if (x.dim(1) != layer.in_features()) throw InvalidArgument("dense input width mismatch");
  const auto b = static_cast<Eigen::Index>(x.dim(0)), in = static_cast<Eigen::Index>(x.dim(1)),
             out = static_cast<Eigen::Index>(layer.out_features());
  Tensor<T> y({x.dim(0), layer.out_features()});
  MapMat<T> ym(y.data(), b, out);
  ym.noalias() = CMapMat<T>(x.data(), b, in) * CMapMat<T>(layer.weight.data(), out, in).transpose();
  for (Eigen::Index r = 0; r < b; ++r)
    for (Eigen::Index o = 0; o < out; ++o) ym(r, o) += layer.bias[static_cast<std::size_t>(o)];
  return y;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const DenseLayer<T>& layer, const Tensor<T>& grad_out) {
  require_rank(x.shape(), 2, "dense input");
  const auto b = static_cast<Eigen::Index>(x.dim(0)), in = static_cast<Eigen::Index>(x.dim(1)),
             out = static_cast<Eigen::Index>(layer.out_features());
  if (grad_out.shape() != Shape{x.dim(0), layer.out_features()}) throw InvalidArgument("dense_backward shape mismatch");
  DenseGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(layer.weight.shape()), Tensor<T>(layer.bias.shape())};
  CMapMat<T> go(grad_out.data(), b, out);
  MapMat<T>(g.grad_x.data(), b, in).noalias() = go * CMapMat<T>(layer.weight.data(), out, in);
  MapMat<T>(g.grad_w.data(), out, in).noalias() = go.transpose() * CMapMat<T>(x.data(), b, in);
  for (Eigen::Index o = 0; o < out; ++o) {
    T s = 0;
    for (Eigen::Index r = 0; r < b; ++r) s += go(r, o);
    g.grad_b[static_cast<std::size_t>(o)] = s;
  }
  return g;
}

template <typename T>
void he_uniform(Tensor<T>& weight, std::size_t fan_in, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : weight.values()) v = static_cast<T>((2.0 * uniform01(rng) - 1.0) * limit);
}

#define LFDNET_INSTANTIATE(T)                                                                                   \
  template struct ConvLayer<T>;                                                                                 \
  template struct BatchNormLayer<T>;                                                                            \
  template struct DenseLayer<T>;                                                                                \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const ConvLayer<T>&);                                     \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const ConvLayer<T>&, const Tensor<T>&, bool);         \
  template Tensor<T> relu_forward(const Tensor<T>&);                                                            \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                         \
  template MaxPoolResult<T> maxpool2x2_forward(const Tensor<T>&);                                               \
  template Tensor<T> maxpool2x2_backward(const Shape&, const std::vector<std::uint32_t>&, const Tensor<T>&);    \
  template Tensor<T> avgpool_forward(const Tensor<T>&, int);                                                    \
  template Tensor<T> avgpool_backward(const Shape&, int, const Tensor<T>&);                                     \
  template Tensor<T> batchnorm_forward(const Tensor<T>&, BatchNormLayer<T>&, Mode, BatchNormCache<T>*);         \
  template BatchNormGrads<T> batchnorm_backward(const BatchNormLayer<T>&, const BatchNormCache<T>&,             \
                                                const Tensor<T>&);                                              \
  template Tensor<T> dropout_forward(const Tensor<T>&, double, Mode, std::mt19937_64&, Tensor<T>*);             \
  template Tensor<T> dropout_backward(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> dense_forward(const Tensor<T>&, const DenseLayer<T>&);                                     \
  template DenseGrads<T> dense_backward(const Tensor<T>&, const DenseLayer<T>&, const Tensor<T>&);              \
  template void he_uniform(Tensor<T>&, std::size_t, std::mt19937_64&);                                         \
  template Tensor<T> batchnorm_infer(const Tensor<T>&, const BatchNormLayer<T>&);                               \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);

LFDNET_INSTANTIATE(float)
LFDNET_INSTANTIATE(double)

#undef LFDNET_INSTANTIATE

}  // namespace lfdnet::nn
