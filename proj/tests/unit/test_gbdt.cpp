#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "checks.hpp"
#include "lfdnet/error.hpp"
#include "lfdnet/gbdt.hpp"
#include "lfdnet/random.hpp"

using namespace lfdnet;
using namespace lfdnet::gbdt;

namespace {

struct Data {
  std::vector<double> x;
  std::vector<int> y;
  std::size_t width = 0;
};

// Noisy 3-class "probability" features: the label usually has the largest value.
Data noisy_probs(std::size_t rows, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Data d;
  d.width = 3;
  for (std::size_t i = 0; i < rows; ++i) {
    const int y = static_cast<int>(i % 3);
    std::vector<double> p(3);
    double s = 0;
    for (auto& v : p) s += (v = uniform_real(rng));
    p[static_cast<std::size_t>(y)] += 0.6 * uniform_real(rng);
    s = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto v : p) d.x.push_back(v / s);
    d.y.push_back(y);
  }
  return d;
}

std::vector<int> predict_rows(const Model& m, const Data& d) {
  std::vector<int> out;
  for (std::size_t i = 0; i < d.y.size(); ++i)
    out.push_back(predict_view(m, std::span<const double>(d.x.data() + i * d.width, d.width)).label);
  return out;
}

void for_each_node(const Model& m, auto&& f) {
  for (const auto& per_class : m.trees)
    for (const auto& t : per_class)
      for (const auto& n : t.nodes) f(t, n);
}

}  // namespace

TEST(Gbdt, SeparableDataIsLearnedAndLeavesAreBounded) {
  const auto r = lfdnet::testing::gbdt_separable(10);
  EXPECT_EQ(r.train_accuracy, 1.0);
  EXPECT_GT(r.leaves, 0u);
  EXPECT_EQ(r.leaf_bound_violations, 0u);
  EXPECT_LE(r.max_abs_leaf, r.leaf_bound);
}

TEST(Gbdt, SingleClassInputIsAnError) {
  const std::vector<double> x{1, 2, 3};
  const std::vector<int> y{1, 1, 1};
  try {
    fit(x, 1, y, 2, Config{});
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("single-class input"), std::string::npos);
  }
}

TEST(Gbdt, NonFiniteFeatureIsAnError) {
  const std::vector<double> x{1, NAN, 3, 4};
  const std::vector<int> y{0, 1, 0, 1};
  EXPECT_THROW(fit(x, 1, y, 2, Config{}), InvalidArgument);
}

TEST(Gbdt, HugeLambdaKeepsUniformPrior) {
  const auto d = noisy_probs(60, 1);
  Config cfg;
  cfg.rounds = 5;
  cfg.lambda = 1e300;
  const auto m = fit(d.x, d.width, d.y, 3, cfg);
  for_each_node(m, [](const Tree&, const Node& n) {
    if (n.is_leaf()) {
      EXPECT_NEAR(n.value, 0.0, 1e-290);
    }
  });
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    const auto p = predict_view(m, std::span<const double>(d.x.data() + i * 3, 3));
    EXPECT_NEAR(p.scores[0], p.scores[1], 1e-290);
    EXPECT_NEAR(p.scores[1], p.scores[2], 1e-290);
  }
}

TEST(Gbdt, ZeroRoundModelGivesUniformScoresAndLabelZero) {
  Model m;
  m.num_classes = 4;
  m.num_features = 2;
  m.trees.assign(4, {});
  const std::vector<double> f{0.3, 0.7};
  const auto p = predict_view(m, f);
  EXPECT_EQ(p.label, 0);
  EXPECT_EQ(p.scores, std::vector<double>(4, 0.0));
  EXPECT_THROW(predict_view(m, std::vector<double>{1.0}), InvalidArgument);
}

TEST(Gbdt, TreesRespectDepthAndStayFinite) {
  const auto d = noisy_probs(90, 2);
  Config cfg;
  cfg.rounds = 8;
  cfg.max_depth = 3;
  const auto m = fit(d.x, d.width, d.y, 3, cfg);
  EXPECT_EQ(m.rounds(), 8u);
  for (const auto& per_class : m.trees)
    for (const auto& t : per_class) EXPECT_LE(t.depth(), 3);
  for_each_node(m, [](const Tree&, const Node& n) { EXPECT_TRUE(std::isfinite(n.value)); });
}

TEST(Gbdt, LeafValuesFollowTheNewtonStep) {
  const auto d = noisy_probs(60, 3);
  Config cfg;
  cfg.rounds = 4;
  cfg.lambda = 2.5;
  cfg.learning_rate = 0.3;
  const auto m = fit(d.x, d.width, d.y, 3, cfg);
  double max_g = 0;
  for_each_node(m, [&](const Tree&, const Node& n) {
    if (n.is_leaf()) {
      EXPECT_NEAR(n.value, -cfg.learning_rate * n.grad_sum / (n.hess_sum + cfg.lambda), 1e-12);
      EXPECT_LE(std::abs(n.value), cfg.learning_rate * std::abs(n.grad_sum) / cfg.lambda + 1e-15);
      max_g = std::max(max_g, std::abs(n.grad_sum));
    }
  });
  for_each_node(m, [&](const Tree&, const Node& n) {
    if (n.is_leaf()) {
      EXPECT_LE(std::abs(n.value), cfg.learning_rate * max_g / cfg.lambda);
    }
  });
}

TEST(Gbdt, DeterministicAndIndependentOfRowOrder) {
  const auto d = noisy_probs(75, 4);
  Config cfg;
  cfg.rounds = 6;
  const auto a = fit(d.x, d.width, d.y, 3, cfg);
  EXPECT_EQ(fit(d.x, d.width, d.y, 3, cfg), a);

  std::vector<std::size_t> perm(d.y.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(5));
  Data p;
  p.width = d.width;
  for (auto i : perm) {
    p.x.insert(p.x.end(), d.x.begin() + static_cast<long>(i * 3), d.x.begin() + static_cast<long>(i * 3 + 3));
    p.y.push_back(d.y[i]);
  }
  const auto b = fit(p.x, p.width, p.y, 3, cfg);
  EXPECT_EQ(predict_rows(a, d), predict_rows(b, d));
}

TEST(Gbdt, ConstantFeatureNeverChangesSplits) {
  const auto d = noisy_probs(60, 6);
  Config cfg;
  cfg.rounds = 5;
  const auto a = fit(d.x, d.width, d.y, 3, cfg);
  Data c;
  c.width = 4;
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    c.x.push_back(0.5);  // constant, placed first so its index would win ties
    c.x.insert(c.x.end(), d.x.begin() + static_cast<long>(i * 3), d.x.begin() + static_cast<long>(i * 3 + 3));
  }
  const auto b = fit(c.x, c.width, d.y, 3, cfg);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t r = 0; r < 5; ++r) {
      const auto& ta = a.trees[k][r].nodes;
      const auto& tb = b.trees[k][r].nodes;
      ASSERT_EQ(ta.size(), tb.size());
      for (std::size_t n = 0; n < ta.size(); ++n) {
        EXPECT_EQ(tb[n].feature, ta[n].is_leaf() ? -1 : ta[n].feature + 1);
        EXPECT_EQ(tb[n].threshold, ta[n].threshold);
        EXPECT_EQ(tb[n].value, ta[n].value);
      }
    }
  }
}

TEST(Gbdt, BoostingReproducesArgmaxOnTrainingRows) {
  const auto d = noisy_probs(150, 7);
  std::vector<int> argmax_labels;
  std::size_t argmax_correct = 0;
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    const auto row = std::span<const double>(d.x.data() + i * 3, 3);
    argmax_correct += static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) == d.y[i];
  }
  const auto m = fit(d.x, d.width, d.y, 3, Config{});
  const auto pred = predict_rows(m, d);
  std::size_t boosted_correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) boosted_correct += pred[i] == d.y[i];
  EXPECT_GE(boosted_correct, argmax_correct);
}

TEST(Gbdt, ModelVoteAndTieBreak) {
  // Stumps on feature 0 (< 0.5 -> class 0 favoured, else class 1).
  Model m;
  m.num_classes = 2;
  m.num_features = 1;
  m.view_onehot = false;
  auto stump = [](double lo, double hi) {
    Tree t;
    t.nodes = {Node{0, 0.5, 1, 2}, Node{}, Node{}};
    t.nodes[1].value = lo;
    t.nodes[2].value = hi;
    return t;
  };
  m.trees = {{stump(1.0, 0.0)}, {stump(0.0, 1.0)}};
  std::vector<double> f(20, 0.9);
  EXPECT_EQ(predict_model(m, f), 1);
  for (std::size_t i = 0; i < 11; ++i) f[i] = 0.1;
  EXPECT_EQ(predict_model(m, f), 0);  // 11 of 20

  // 10-10 tie: class 1's mean score is higher once its winning leaf is larger.
  for (std::size_t i = 0; i < 20; ++i) f[i] = i < 10 ? 0.1 : 0.9;
  m.trees = {{stump(1.0, 0.0)}, {stump(0.0, 1.5)}};
  EXPECT_EQ(predict_model(m, f), 1);
  m.trees = {{stump(1.5, 0.0)}, {stump(0.0, 1.0)}};
  EXPECT_EQ(predict_model(m, f), 0);
  m.trees = {{stump(1.0, 0.0)}, {stump(0.0, 1.0)}};
  EXPECT_EQ(predict_model(m, f), 0);  // equal means -> lowest index

  EXPECT_THROW(predict_model(m, std::vector<double>(19, 0.1)), InvalidArgument);
}

TEST(Gbdt, ViewFeatureLayout) {
  const std::vector<double> p{0.2, 0.8};
  const auto f = view_feature(p, 3, false);
  ASSERT_EQ(f.size(), 22u);
  EXPECT_EQ(f[0], 0.2);
  EXPECT_EQ(f[2 + 3], 1.0);
  EXPECT_EQ(std::accumulate(f.begin() + 2, f.end(), 0.0), 1.0);
  EXPECT_EQ(view_feature(p, 3, true), p);
}

TEST(Gbdt, ModelFileRoundTrip) {
  const auto d = noisy_probs(45, 8);
  Config cfg;
  cfg.rounds = 3;
  const auto m = fit(d.x, d.width, d.y, 3, cfg);
  const auto bytes = encode_model(m);
  EXPECT_EQ(decode_model(bytes), m);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_model(bad), FormatError);
  bad = bytes;
  bad.resize(bytes.size() - 7);
  EXPECT_THROW(decode_model(bad), FormatError);
}

TEST(Gbdt, ConfigValidation) {
  Config c;
  c.rounds = 0;
  EXPECT_ANY_THROW(c.validate());
  c = {};
  c.learning_rate = 1.5;
  EXPECT_ANY_THROW(c.validate());
  c = {};
  c.max_depth = 0;
  EXPECT_ANY_THROW(c.validate());
}
