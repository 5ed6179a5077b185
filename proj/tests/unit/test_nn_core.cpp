#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "checks.hpp"
#include "lfdnet/adam.hpp"
#include "lfdnet/error.hpp"
#include "lfdnet/layers.hpp"
#include "lfdnet/loss.hpp"

using namespace lfdnet;
using namespace lfdnet::nn;

namespace {

Tensor<double> random_tensor(Shape s, std::mt19937_64& rng) {
  Tensor<double> t(std::move(s));
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

}  // namespace

TEST(Conv, OneByOneScales) {
  std::mt19937_64 rng(1);
  auto layer = ConvLayer<double>::make(1, 1, 1, 1);
  layer.weight.fill(2);
  layer.bias.fill(0);
  const auto x = random_tensor({2, 1, 5, 4}, rng);
  const auto y = conv2d_forward(x, layer);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], 2 * x[i]);
}

TEST(Conv, CenterDeltaIsIdentity) {
  std::mt19937_64 rng(2);
  auto layer = ConvLayer<double>::make(1, 1, 3, 1);
  layer.weight.fill(0);
  layer.weight[4] = 1;
  const auto x = random_tensor({1, 1, 6, 6}, rng);
  EXPECT_EQ(conv2d_forward(x, layer), x);
}

TEST(Conv, HandDotProduct) {
  ConvLayer<double> layer{Tensor<double>({1, 1, 2, 2}, {1, 0, 0, 1}), Tensor<double>({1}), 1, 0};
  const Tensor<double> x({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto y = conv2d_forward(x, layer);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y[0], 5.0);
}

TEST(Conv, ChannelMismatchIsAnError) {
  const auto layer = ConvLayer<double>::make(3, 4, 3, 1);
  EXPECT_THROW(conv2d_forward(Tensor<double>({1, 2, 4, 4}), layer), InvalidArgument);
}

TEST(Conv, SamePaddingShapes) {
  std::mt19937_64 rng(3);
  for (int k : {1, 3, 7}) {
    for (std::size_t h : {1u, 2u, 5u, 8u, 13u}) {
      const auto layer = ConvLayer<double>::make(2, 3, k, 1);
      EXPECT_EQ(conv2d_forward(random_tensor({1, 2, h, h + 1}, rng), layer).shape(), (Shape{1, 3, h, h + 1}));
      const auto down = ConvLayer<double>::make(2, 3, k, 2);
      EXPECT_EQ(conv2d_forward(random_tensor({1, 2, h, h}, rng), down).shape(), (Shape{1, 3, (h + 1) / 2, (h + 1) / 2}));
    }
  }
}

TEST(Conv, BackwardLinearCases) {
  std::mt19937_64 rng(4);
  auto layer = ConvLayer<double>::make(1, 1, 1, 1);
  layer.weight.fill(0.7);
  const auto x = random_tensor({2, 1, 3, 3}, rng);
  auto g = conv2d_backward(x, layer, Tensor<double>({2, 1, 3, 3}));
  for (auto v : g.grad_x.values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(g.grad_w[0], 0.0);
  EXPECT_EQ(g.grad_b[0], 0.0);

  const auto go = random_tensor({2, 1, 3, 3}, rng);
  g = conv2d_backward(x, layer, go);
  double sxg = 0, sg = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sxg += x[i] * go[i], sg += go[i];
  EXPECT_NEAR(g.grad_w[0], sxg, 1e-14);
  EXPECT_NEAR(g.grad_b[0], sg, 1e-14);
}

TEST(Relu, ForwardBackward) {
  const Tensor<double> x({3}, {-1, 0, 2});
  const auto y = relu_forward(x);
  EXPECT_EQ(y, Tensor<double>({3}, {0, 0, 2}));
  EXPECT_EQ(relu_backward(y, Tensor<double>({3}, {5, 6, 7})), Tensor<double>({3}, {0, 0, 7}));
}

TEST(MaxPool, RoutesGradientToArgmax) {
  const Tensor<double> x({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto r = maxpool2x2_forward(x);
  EXPECT_EQ(r.output, Tensor<double>({1, 1, 1, 1}, {4}));
  EXPECT_EQ(maxpool2x2_backward(x.shape(), r.argmax, Tensor<double>({1, 1, 1, 1}, {9})),
            Tensor<double>({1, 1, 2, 2}, {0, 0, 0, 9}));
  // Ties go to the first element in row-major order.
  const auto t = maxpool2x2_forward(Tensor<double>({1, 1, 2, 2}, {3, 3, 3, 3}));
  EXPECT_EQ(t.argmax[0], 0u);
  EXPECT_THROW(maxpool2x2_forward(Tensor<double>({1, 1, 3, 2})), InvalidArgument);
}

TEST(AvgPool, ConstantImageAndUniformBackward) {
  const Tensor<double> x({1, 2, 4, 4}, 2.5);
  EXPECT_EQ(avgpool_forward(x, 4), Tensor<double>({1, 2, 1, 1}, 2.5));
  const auto g = avgpool_backward(x.shape(), 4, Tensor<double>({1, 2, 1, 1}, {16, 32}));
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(g[i], 1.0);
  for (std::size_t i = 16; i < 32; ++i) EXPECT_EQ(g[i], 2.0);
  EXPECT_THROW(avgpool_forward(Tensor<double>({1, 1, 6, 6}), 4), InvalidArgument);
}

TEST(BatchNorm, TrainModeNormalizesPerChannel) {
  std::mt19937_64 rng(5);
  auto layer = BatchNormLayer<double>::make(3);
  auto x = random_tensor({4, 3, 5, 5}, rng);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 3 * x[i] + 7;
  const auto y = batchnorm_forward(x, layer, Mode::train);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, s2 = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t h = 0; h < 5; ++h)
        for (std::size_t w = 0; w < 5; ++w) s += y.at(n, c, h, w), s2 += y.at(n, c, h, w) * y.at(n, c, h, w);
    const double m = s / 100;
    EXPECT_NEAR(m, 0.0, 1e-5);
    EXPECT_NEAR(s2 / 100 - m * m, 1.0, 1e-5);
    EXPECT_GE(layer.running_var[c], 0.0);
  }
}

TEST(BatchNorm, RunningStatisticsFollowMomentum) {
  auto layer = BatchNormLayer<double>::make(1, 0.9);
  const Tensor<double> x({2, 1, 1, 2}, {1, 2, 3, 4});  // mean 2.5, unbiased var 5/3
  batchnorm_forward(x, layer, Mode::train);
  EXPECT_NEAR(layer.running_mean[0], 0.1 * 2.5, 1e-15);
  EXPECT_NEAR(layer.running_var[0], 0.9 * 1 + 0.1 * 5.0 / 3.0, 1e-15);
}

TEST(BatchNorm, InferModeWithMatchingMeanGivesBeta) {
  auto layer = BatchNormLayer<double>::make(2);
  layer.running_mean = Tensor<double>({2}, {3, -1});
  layer.running_var = Tensor<double>({2}, {2, 0.5});
  layer.beta = Tensor<double>({2}, {0.25, -4});
  Tensor<double> x({2, 2, 2, 2});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t w = 0; w < 2; ++w) x.at(n, 0, h, w) = 3, x.at(n, 1, h, w) = -1;
  const auto before = layer.running_mean;
  const auto y = batchnorm_forward(x, layer, Mode::infer);
  EXPECT_EQ(layer.running_mean, before);
  for (std::size_t n = 0; n < 2; ++n) {
    EXPECT_EQ(y.at(n, 0, 1, 1), 0.25);
    EXPECT_EQ(y.at(n, 1, 0, 1), -4.0);
  }
  EXPECT_EQ(batchnorm_infer(x, layer), y);
}

TEST(BatchNorm, BatchOfOneInTrainModeIsAnError) {
  auto layer = BatchNormLayer<double>::make(1);
  EXPECT_THROW(batchnorm_forward(Tensor<double>({1, 1, 4, 4}), layer, Mode::train), InvalidArgument);
}

TEST(Dropout, InferenceAndZeroRateAreIdentity) {
  std::mt19937_64 rng(6);
  const auto x = random_tensor({3, 50}, rng);
  EXPECT_EQ(dropout_forward(x, 0.25, Mode::infer, rng), x);
  EXPECT_EQ(dropout_forward(x, 0.0, Mode::infer, rng), x);
  EXPECT_EQ(dropout_forward(x, 0.0, Mode::train, rng), x);
}

TEST(Dropout, ZeroedFractionMatchesRate) {
  std::mt19937_64 rng(7);
  const Tensor<float> x({1000000}, 1.0f);
  Tensor<float> mask;
  const auto y = dropout_forward(x, 0.25, Mode::train, rng, &mask);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0f) {
      ++zeros;
    } else {
      EXPECT_FLOAT_EQ(y[i], 1.0f / 0.75f);
    }
  }
  EXPECT_NEAR(static_cast<double>(zeros) / 1e6, 0.25, 0.005);
  const auto g = dropout_backward(mask, x);
  EXPECT_EQ(g, y);
}

TEST(Softmax, RowsSumToOne) {
  std::mt19937_64 rng(8);
  auto logits = random_tensor({16, 43}, rng);
  for (auto& v : logits.values()) v *= 30;
  const auto p = softmax(logits);
  for (std::size_t i = 0; i < 16; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < 43; ++k) {
      s += p[i * 43 + k];
      EXPECT_GT(p[i * 43 + k], 0.0);
      EXPECT_LT(p[i * 43 + k], 1.0);
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(WeightedXent, UniformLogitsGiveLogK) {
  const Tensor<double> logits({2, 43}, 0.37);
  const std::vector<int> labels{0, 42};
  const auto r = softmax_xent_weighted(logits, std::span<const int>(labels), ClassWeights::uniform(43));
  EXPECT_NEAR(r.loss, std::log(43.0), 1e-12);
  EXPECT_NEAR(r.loss, 3.7612, 1e-4);
}

TEST(WeightedXent, ConfidentCorrectPredictionHasNearZeroLoss) {
  Tensor<double> logits({1, 3});
  logits[1] = 60;
  const std::vector<int> labels{1};
  EXPECT_LT(softmax_xent_weighted(logits, std::span<const int>(labels), ClassWeights::uniform(3)).loss, 1e-20);
}

TEST(WeightedXent, UnitWeightsEqualPlainCrossEntropy) {
  std::mt19937_64 rng(9);
  const auto logits = random_tensor({5, 7}, rng).cast<float>();
  const std::vector<int> labels{0, 6, 3, 3, 1};
  const auto r = softmax_xent_weighted(logits, std::span<const int>(labels), ClassWeights::uniform(7));
  // Plain cross-entropy in the stable log-sum-exp form, accumulated in double.
  double total = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    const float* z = logits.data() + i * 7;
    const float mx = *std::max_element(z, z + 7);
    double sum = 0;
    for (std::size_t j = 0; j < 7; ++j) sum += std::exp(static_cast<double>(z[j] - mx));
    total += -(static_cast<double>(z[labels[i]] - mx) - std::log(sum));
  }
  const auto loss = static_cast<float>(total / 5.0);
  EXPECT_EQ(r.loss, loss);
}

TEST(WeightedXent, WeightsScaleSampleContributions) {
  std::mt19937_64 rng(10);
  const auto logits = random_tensor({2, 3}, rng);
  const std::vector<int> a{2, 2}, b{0, 0};
  const ClassWeights w{{3.0, 1.0, 0.5}};
  const auto ra = softmax_xent_weighted(logits, std::span<const int>(a), w);
  const auto ua = softmax_xent_weighted(logits, std::span<const int>(a), ClassWeights::uniform(3));
  EXPECT_NEAR(ra.loss, 0.5 * ua.loss, 1e-14);
  const auto rb = softmax_xent_weighted(logits, std::span<const int>(b), w);
  const auto ub = softmax_xent_weighted(logits, std::span<const int>(b), ClassWeights::uniform(3));
  EXPECT_NEAR(rb.loss, 3 * ub.loss, 1e-14);
}

TEST(WeightedXent, LabelOutOfRange) {
  const std::vector<int> labels{3};
  EXPECT_THROW(softmax_xent_weighted(Tensor<double>({1, 3}), std::span<const int>(labels), ClassWeights::uniform(3)),
               InvalidArgument);
}

TEST(ClassWeights, BalancedAndTableCounts) {
  const std::vector<int> balanced{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
  EXPECT_EQ(compute_class_weights(balanced, 2).weights, (std::vector<double>{1.0, 1.0}));

  const auto& table = lfdnet::testing::cadnet_table2();
  ASSERT_EQ(table.size(), 43u);
  std::vector<int> labels;
  for (std::size_t c = 0; c < table.size(); ++c) labels.insert(labels.end(), table[c].second, static_cast<int>(c));
  ASSERT_EQ(labels.size(), 3317u);
  const auto w = compute_class_weights(labels, 43);
  EXPECT_EQ(table[12].first, "Discs");
  EXPECT_EQ(table[5].first, "Bracket_like_Parts");
  EXPECT_NEAR(w.weights[12], 3317.0 / 7009.0, 1e-12);
  EXPECT_NEAR(w.weights[12], 0.47325, 1e-5);
  EXPECT_NEAR(w.weights[5], 3317.0 / 1161.0, 1e-12);
  EXPECT_NEAR(w.weights[5], 2.8570, 1e-4);
  double total = 0;
  for (std::size_t c = 0; c < 43; ++c) {
    EXPECT_GT(w.weights[c], 0.0);
    total += w.weights[c] * table[c].second;
  }
  EXPECT_NEAR(total, 3317.0, 1e-9 * 3317);
}

TEST(ClassWeights, EmptyClassIsAnError) {
  const std::vector<int> labels{0, 0, 2};
  EXPECT_THROW(compute_class_weights(labels, 3), InvalidArgument);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor<double> w({3}, {1, -2, 3}), g({3});
  std::vector<Param<double>> params{{"w", &w, &g}};
  AdamState<double> state;
  adam_step(params, state);
  EXPECT_EQ(w, Tensor<double>({3}, {1, -2, 3}));
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, FirstStepIsAboutMinusLearningRateTimesSign) {
  Tensor<double> w({2}, {0, 0}), g({2}, {0.5, -0.5});
  std::vector<Param<double>> params{{"w", &w, &g}};
  AdamState<double> state;
  adam_step(params, state);
  EXPECT_NEAR(w[0], -0.001 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(w[1], 0.001, 1e-10);
  for (auto v : state.v[0].values()) EXPECT_GE(v, 0.0);
}

TEST(Adam, QuadraticDecreasesEveryStep) {
  Tensor<double> w({1}, {1.0}), g({1});
  std::vector<Param<double>> params{{"theta", &w, &g}};
  AdamState<double> state;
  state.config.learning_rate = 0.1;
  double f = w[0] * w[0];
  for (int i = 0; i < 10; ++i) {
    g[0] = 2 * w[0];
    adam_step(params, state);
    const double next = w[0] * w[0];
    EXPECT_LT(next, f) << i;
    f = next;
  }
  EXPECT_EQ(state.step, 10);
}

TEST(GradientCheck, EveryBackwardMatchesFiniteDifferences) {
  const auto checks = lfdnet::testing::gradient_checks(31, 3);
  ASSERT_FALSE(checks.empty());
  for (const auto& c : checks) {
    EXPECT_GT(c.coords, 0u) << c.layer;
    EXPECT_LT(c.max_rel_error, 1e-5) << c.layer;
  }
}
