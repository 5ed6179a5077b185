#include "lfdnet/network.hpp"

#include <string>

#include "lfdnet/error.hpp"
#include "lfdnet/loss.hpp"

namespace lfdnet {

using nn::Mode;

template <typename T>
Tensor<T> ResidualBlock<T>::forward_train(const Tensor<T>& x) {
  cache.input_shape = x.shape();
  cache.normed = nn::batchnorm_forward(x, bn, Mode::train, &cache.bn);
  const Tensor<T>* main_in = &cache.normed;
  if (downsample) {
    auto pooled = nn::maxpool2x2_forward(cache.normed);
    cache.pooled = std::move(pooled.output);
    cache.argmax = std::move(pooled.argmax);
    main_in = &cache.pooled;
  }
  cache.act_a = nn::relu_forward(nn::conv2d_forward(*main_in, conv_a));
  cache.act_b = nn::relu_forward(nn::conv2d_forward(cache.act_a, conv_b));
  if (proj) return nn::add(cache.act_b, nn::conv2d_forward(cache.normed, *proj));
  return nn::add(cache.act_b, x);
}

template <typename T>
Tensor<T> ResidualBlock<T>::forward_infer(const Tensor<T>& x) const {
  const auto normed = nn::batchnorm_infer(x, bn);
  Tensor<T> a;
  if (downsample) {
    a = nn::relu_forward(nn::conv2d_forward(nn::maxpool2x2_forward(normed).output, conv_a));
  } else {
    a = nn::relu_forward(nn::conv2d_forward(normed, conv_a));
  }
  auto b = nn::relu_forward(nn::conv2d_forward(a, conv_b));
  if (proj) return nn::add(b, nn::conv2d_forward(normed, *proj));
  return nn::add(b, x);
}

template <typename T>
Tensor<T> ResidualBlock<T>::backward(const Tensor<T>& grad_out) {
  auto gzb = nn::relu_backward(cache.act_b, grad_out);
  auto gb = nn::conv2d_backward(cache.act_a, conv_b, gzb);
  grads.b_w = std::move(gb.grad_w);
  grads.b_b = std::move(gb.grad_b);
  auto gza = nn::relu_backward(cache.act_a, gb.grad_x);
  auto ga = nn::conv2d_backward(downsample ? cache.pooled : cache.normed, conv_a, gza);
  grads.a_w = std::move(ga.grad_w);
  grads.a_b = std::move(ga.grad_b);

  Tensor<T> g_normed =
      downsample ? nn::maxpool2x2_backward(cache.normed.shape(), cache.argmax, ga.grad_x) : std::move(ga.grad_x);
  Tensor<T> gx;
  if (proj) {
    auto gp = nn::conv2d_backward(cache.normed, *proj, grad_out);
    grads.p_w = std::move(gp.grad_w);
    grads.p_b = std::move(gp.grad_b);
    for (std::size_t i = 0; i < g_normed.size(); ++i) g_normed[i] += gp.grad_x[i];
    gx = Tensor<T>(cache.input_shape);
  } else {
    gx = grad_out;
  }
  auto gbn = nn::batchnorm_backward(bn, cache.bn, g_normed);
  grads.bn_gamma = std::move(gbn.grad_gamma);
  grads.bn_beta = std::move(gbn.grad_beta);
  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gbn.grad_x[i];
  return gx;
}

template <typename T>
BasicNetwork<T>::BasicNetwork(ArchSpec spec, std::uint64_t seed) : spec_(std::move(spec)), dropout_rng_(seed ^ 0xD1B54A32D192ED03ull) {
  spec_.validate();
  std::mt19937_64 init(seed);
  const auto in_ch = static_cast<std::size_t>(spec_.input_channels);
  stem_ = nn::ConvLayer<T>::make(in_ch, static_cast<std::size_t>(spec_.stem_filters), spec_.stem_kernel, 1);
  nn::he_uniform(stem_.weight, in_ch * spec_.stem_kernel * spec_.stem_kernel, init);

  auto channels = static_cast<std::size_t>(spec_.stem_filters);
  const auto k = static_cast<std::size_t>(spec_.block_kernel);
  for (int g = 0; g < spec_.groups(); ++g) {
    const auto filters = static_cast<std::size_t>(spec_.group_filters[static_cast<std::size_t>(g)]);
    for (int b = 0; b < spec_.blocks_per_group; ++b) {
      ResidualBlock<T> blk;
      blk.downsample = b == 0 && spec_.group_downsample[static_cast<std::size_t>(g)];
      blk.bn = nn::BatchNormLayer<T>::make(channels, spec_.bn_momentum, spec_.bn_epsilon);
      blk.conv_a = nn::ConvLayer<T>::make(channels, filters, spec_.block_kernel, 1);
      nn::he_uniform(blk.conv_a.weight, channels * k * k, init);
      blk.conv_b = nn::ConvLayer<T>::make(filters, filters, spec_.block_kernel, 1);
      nn::he_uniform(blk.conv_b.weight, filters * k * k, init);
      if (blk.downsample || channels != filters) {
        blk.proj = nn::ConvLayer<T>::make(channels, filters, 1, blk.downsample ? 2 : 1);
        nn::he_uniform(blk.proj->weight, channels, init);
      }
      blocks_.push_back(std::move(blk));
      channels = filters;
    }
  }
  head_bn_ = nn::BatchNormLayer<T>::make(channels, spec_.bn_momentum, spec_.bn_epsilon);
  std::size_t width = spec_.flatten_width();
  for (int f : spec_.fc) {
    auto layer = nn::DenseLayer<T>::make(width, static_cast<std::size_t>(f));
    nn::he_uniform(layer.weight, width, init);
    hidden_.push_back(std::move(layer));
    width = static_cast<std::size_t>(f);
  }
  out_ = nn::DenseLayer<T>::make(width, static_cast<std::size_t>(spec_.classes));
  nn::he_uniform(out_.weight, width, init);

  grads_.stem_w = Tensor<T>(stem_.weight.shape());
  grads_.stem_b = Tensor<T>(stem_.bias.shape());
  for (auto& blk : blocks_) {
    blk.grads.bn_gamma = Tensor<T>(blk.bn.gamma.shape());
    blk.grads.bn_beta = Tensor<T>(blk.bn.beta.shape());
    blk.grads.a_w = Tensor<T>(blk.conv_a.weight.shape());
    blk.grads.a_b = Tensor<T>(blk.conv_a.bias.shape());
    blk.grads.b_w = Tensor<T>(blk.conv_b.weight.shape());
    blk.grads.b_b = Tensor<T>(blk.conv_b.bias.shape());
    if (blk.proj) {
      blk.grads.p_w = Tensor<T>(blk.proj->weight.shape());
      blk.grads.p_b = Tensor<T>(blk.proj->bias.shape());
    }
  }
  grads_.head_gamma = Tensor<T>(head_bn_.gamma.shape());
  grads_.head_beta = Tensor<T>(head_bn_.beta.shape());
  for (auto& l : hidden_) {
    grads_.hidden_w.emplace_back(l.weight.shape());
    grads_.hidden_b.emplace_back(l.bias.shape());
  }
  grads_.out_w = Tensor<T>(out_.weight.shape());
  grads_.out_b = Tensor<T>(out_.bias.shape());
}

template <typename T>
void BasicNetwork<T>::check_input(const Tensor<T>& x) const {
  const auto s = static_cast<std::size_t>(spec_.input_size);
  if (x.rank() != 4 || x.dim(1) != static_cast<std::size_t>(spec_.input_channels) || x.dim(2) != s || x.dim(3) != s)
    throw InvalidArgument("network input shape " + shape_string(x.shape()) + " does not match [B," +
                          std::to_string(spec_.input_channels) + "," + std::to_string(s) + "," + std::to_string(s) + "]");
  if (x.dim(0) == 0) throw InvalidArgument("empty batch");
}

template <typename T>
Tensor<T> BasicNetwork<T>::forward_logits(const Tensor<T>& x, Mode mode) {
  if (mode == Mode::infer) return predict_logits(x);
  check_input(x);
  auto& c = cache_;
  c.input = x;
  c.stem_act = nn::relu_forward(nn::conv2d_forward(x, stem_));
  Tensor<T> h;
  if (spec_.initial_pool) {
    auto pooled = nn::maxpool2x2_forward(c.stem_act);
    c.stem_argmax = std::move(pooled.argmax);
    h = std::move(pooled.output);
  } else {
    h = c.stem_act;
  }
  for (auto& blk : blocks_) h = blk.forward_train(h);
  c.trunk_out = std::move(h);
  auto normed = nn::batchnorm_forward(c.trunk_out, head_bn_, Mode::train, &c.head_bn);
  auto pooled = nn::avgpool_forward(normed, spec_.final_pool);
  c.pooled_shape = pooled.shape();
  const auto batch = x.dim(0);
  pooled.reshape({batch, pooled.size() / batch});
  Tensor<T> act = std::move(pooled);
  c.fc_in.resize(hidden_.size());
  c.fc_act.resize(hidden_.size());
  c.fc_mask.resize(hidden_.size());
  for (std::size_t i = 0; i < hidden_.size(); ++i) {
    c.fc_in[i] = std::move(act);
    c.fc_act[i] = nn::relu_forward(nn::dense_forward(c.fc_in[i], hidden_[i]));
    act = nn::dropout_forward(c.fc_act[i], spec_.dropout, Mode::train, dropout_rng_, &c.fc_mask[i]);
  }
  c.out_in = std::move(act);
  return nn::dense_forward(c.out_in, out_);
}

template <typename T>
Tensor<T> BasicNetwork<T>::predict_logits(const Tensor<T>& x) const {
  check_input(x);
  auto h = nn::relu_forward(nn::conv2d_forward(x, stem_));
  if (spec_.initial_pool) h = nn::maxpool2x2_forward(h).output;
  for (const auto& blk : blocks_) h = blk.forward_infer(h);
  auto pooled = nn::avgpool_forward(nn::batchnorm_infer(h, head_bn_), spec_.final_pool);
  const auto batch = x.dim(0);
  pooled.reshape({batch, pooled.size() / batch});
  Tensor<T> act = std::move(pooled);
  for (const auto& layer : hidden_) act = nn::relu_forward(nn::dense_forward(act, layer));
  return nn::dense_forward(act, out_);
}

template <typename T>
Tensor<T> BasicNetwork<T>::forward(const Tensor<T>& x, Mode mode) {
  return nn::softmax(forward_logits(x, mode));
}

template <typename T>
Tensor<T> BasicNetwork<T>::predict(const Tensor<T>& x) const {
  return nn::softmax(predict_logits(x));
}

template <typename T>
void BasicNetwork<T>::backward(const Tensor<T>& grad_logits) {
  auto& c = cache_;
  if (c.out_in.empty()) throw InvalidArgument("backward() called without a train-mode forward pass");
  auto go = nn::dense_backward(c.out_in, out_, grad_logits);
  grads_.out_w = std::move(go.grad_w);
  grads_.out_b = std::move(go.grad_b);
  Tensor<T> g = std::move(go.grad_x);
  for (std::size_t i = hidden_.size(); i-- > 0;) {
    g = nn::relu_backward(c.fc_act[i], nn::dropout_backward(c.fc_mask[i], g));
    auto gd = nn::dense_backward(c.fc_in[i], hidden_[i], g);
    grads_.hidden_w[i] = std::move(gd.grad_w);
    grads_.hidden_b[i] = std::move(gd.grad_b);
    g = std::move(gd.grad_x);
  }
  g.reshape(c.pooled_shape);
  g = nn::avgpool_backward(c.trunk_out.shape(), spec_.final_pool, g);
  auto gbn = nn::batchnorm_backward(head_bn_, c.head_bn, g);
  grads_.head_gamma = std::move(gbn.grad_gamma);
  grads_.head_beta = std::move(gbn.grad_beta);
  g = std::move(gbn.grad_x);
  for (std::size_t i = blocks_.size(); i-- > 0;) g = blocks_[i].backward(g);
  if (spec_.initial_pool) g = nn::maxpool2x2_backward(c.stem_act.shape(), c.stem_argmax, g);
  g = nn::relu_backward(c.stem_act, g);
  auto gs = nn::conv2d_backward(c.input, stem_, g, /*need_grad_x=*/false);
  grads_.stem_w = std::move(gs.grad_w);
  grads_.stem_b = std::move(gs.grad_b);
}

template <typename T>
std::vector<nn::Param<T>> BasicNetwork<T>::params() {
  std::vector<nn::Param<T>> p;
  p.push_back({"stem.weight", &stem_.weight, &grads_.stem_w});
  p.push_back({"stem.bias", &stem_.bias, &grads_.stem_b});
  int g = 1, b = 0;
  int in_group = 0;
  for (auto& blk : blocks_) {
    const std::string prefix = "g" + std::to_string(g) + ".b" + std::to_string(b) + ".";
    p.push_back({prefix + "bn.gamma", &blk.bn.gamma, &blk.grads.bn_gamma});
    p.push_back({prefix + "bn.beta", &blk.bn.beta, &blk.grads.bn_beta});
    p.push_back({prefix + "conv_a.weight", &blk.conv_a.weight, &blk.grads.a_w});
    p.push_back({prefix + "conv_a.bias", &blk.conv_a.bias, &blk.grads.a_b});
    p.push_back({prefix + "conv_b.weight", &blk.conv_b.weight, &blk.grads.b_w});
    p.push_back({prefix + "conv_b.bias", &blk.conv_b.bias, &blk.grads.b_b});
    if (blk.proj) {
      p.push_back({prefix + "proj.weight", &blk.proj->weight, &blk.grads.p_w});
      p.push_back({prefix + "proj.bias", &blk.proj->bias, &blk.grads.p_b});
    }
    if (++in_group == spec_.blocks_per_group) {
      in_group = 0;
      ++g;
      b = 0;
    } else {
      ++b;
    }
  }
  p.push_back({"head.bn.gamma", &head_bn_.gamma, &grads_.head_gamma});
  p.push_back({"head.bn.beta", &head_bn_.beta, &grads_.head_beta});
  for (std::size_t i = 0; i < hidden_.size(); ++i) {
    p.push_back({"fc" + std::to_string(i) + ".weight", &hidden_[i].weight, &grads_.hidden_w[i]});
    p.push_back({"fc" + std::to_string(i) + ".bias", &hidden_[i].bias, &grads_.hidden_b[i]});
  }
  p.push_back({"out.weight", &out_.weight, &grads_.out_w});
  p.push_back({"out.bias", &out_.bias, &grads_.out_b});
  return p;
}

template <typename T>
std::vector<NamedTensor<T>> BasicNetwork<T>::state() {
  std::vector<NamedTensor<T>> s;
  for (auto& p : params()) s.push_back({p.name, p.value});
  int g = 1, b = 0, in_group = 0;
  for (auto& blk : blocks_) {
    const std::string prefix = "g" + std::to_string(g) + ".b" + std::to_string(b) + ".bn.";
    s.push_back({prefix + "running_mean", &blk.bn.running_mean});
    s.push_back({prefix + "running_var", &blk.bn.running_var});
    if (++in_group == spec_.blocks_per_group) {
      in_group = 0;
      ++g;
      b = 0;
    } else {
      ++b;
    }
  }
  s.push_back({"head.bn.running_mean", &head_bn_.running_mean});
  s.push_back({"head.bn.running_var", &head_bn_.running_var});
  return s;
}

template <typename T>
std::size_t BasicNetwork<T>::parameter_count() const {
  std::size_t n = 0;
  for (auto& p : const_cast<BasicNetwork*>(this)->params()) n += p.value->size();
  return n;
}

template struct ResidualBlock<float>;
template struct ResidualBlock<double>;
template class BasicNetwork<float>;
template class BasicNetwork<double>;

}  // namespace lfdnet
