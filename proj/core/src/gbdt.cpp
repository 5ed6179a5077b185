#include "lfdnet/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "binary_io.hpp"
#include "lfdnet/error.hpp"
#include "lfdnet/render.hpp"

namespace lfdnet::gbdt {

void Config::validate() const {
  if (rounds < 1) throw ConfigError("gbdt.rounds must be >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ConfigError("gbdt.learning_rate must be in (0, 1]");
  if (max_depth < 1) throw ConfigError("gbdt.max_depth must be >= 1");
  if (!(min_child_weight >= 0.0)) throw ConfigError("gbdt.min_child_weight must be >= 0");
  if (!(lambda > 0.0)) throw ConfigError("gbdt.lambda must be positive");
  if (!(gamma >= 0.0)) throw ConfigError("gbdt.gamma must be >= 0");
}

double Tree::predict(std::span<const double> x) const {
  std::size_t n = 0;
  while (!nodes[n].is_leaf())
    n = x[static_cast<std::size_t>(nodes[n].feature)] < nodes[n].threshold ? nodes[n].left : nodes[n].right;
  return nodes[n].value;
}

int Tree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, d[i]);
    if (!nodes[i].is_leaf()) d[nodes[i].left] = d[nodes[i].right] = d[i] + 1;
  }
  return deepest;
}

namespace {

// Midpoint between adjacent distinct values a < b that still separates them.
double split_point(double a, double b) {
  const double mid = a + (b - a) / 2;
  return mid > a ? mid : b;
}

struct Builder {
  std::span<const double> x;
  std::size_t n, f;
  const std::vector<std::vector<std::uint32_t>>& sorted;
  const Config& cfg;

  Tree build(const std::vector<double>& g, const std::vector<double>& h, std::vector<std::uint32_t>& node_of) const {
    Tree t;
    t.nodes.emplace_back();
    std::fill(node_of.begin(), node_of.end(), 0u);
    sum_nodes(t, g, h, node_of, 0);
    std::vector<std::uint32_t> active{0};
    for (int depth = 0; depth < cfg.max_depth && !active.empty(); ++depth) {
      struct Best {
        double gain = 0;
        std::int32_t feature = -1;
        double threshold = 0;
      };
      std::vector<int> slot(t.nodes.size(), -1);
      for (std::size_t s = 0; s < active.size(); ++s) slot[active[s]] = static_cast<int>(s);
      std::vector<Best> best(active.size());
      std::vector<double> gl(active.size()), hl(active.size()), last(active.size());
      std::vector<char> seen(active.size());
      for (std::size_t feat = 0; feat < f; ++feat) {
        std::fill(gl.begin(), gl.end(), 0.0);
        std::fill(hl.begin(), hl.end(), 0.0);
        std::fill(seen.begin(), seen.end(), 0);
        for (auto i : sorted[feat]) {
          const int s = slot[node_of[i]];
          if (s < 0) continue;
          const auto su = static_cast<std::size_t>(s);
          const double v = x[i * f + feat];
          if (seen[su] && v != last[su]) {
            const Node& node = t.nodes[active[su]];
            const double gr = node.grad_sum - gl[su], hr = node.hess_sum - hl[su];
            if (hl[su] >= cfg.min_child_weight && hr >= cfg.min_child_weight) {
              const double gain = 0.5 * (gl[su] * gl[su] / (hl[su] + cfg.lambda) + gr * gr / (hr + cfg.lambda) -
                                         node.grad_sum * node.grad_sum / (node.hess_sum + cfg.lambda)) -
                                  cfg.gamma;
              if (gain > best[su].gain) best[su] = {gain, static_cast<std::int32_t>(feat), split_point(last[su], v)};
            }
          }
          gl[su] += g[i];
          hl[su] += h[i];
          last[su] = v;
          seen[su] = 1;
        }
      }
      std::vector<std::uint32_t> next;
      for (std::size_t s = 0; s < active.size(); ++s) {
        if (best[s].feature < 0) continue;
        const auto left = static_cast<std::uint32_t>(t.nodes.size());
        t.nodes.emplace_back();
        t.nodes.emplace_back();
        Node& node = t.nodes[active[s]];
        node.feature = best[s].feature;
        node.threshold = best[s].threshold;
        node.left = left;
        node.right = left + 1;
        next.push_back(left);
        next.push_back(left + 1);
      }
      if (next.empty()) break;
      for (std::size_t i = 0; i < n; ++i) {
        const Node& node = t.nodes[node_of[i]];
        if (node.is_leaf()) continue;
        node_of[i] = x[i * f + static_cast<std::size_t>(node.feature)] < node.threshold ? node.left : node.right;
      }
      sum_nodes(t, g, h, node_of, next.front());
      active = std::move(next);
    }
    for (auto& node : t.nodes)
      if (node.is_leaf()) node.value = -cfg.learning_rate * node.grad_sum / (node.hess_sum + cfg.lambda);
    return t;
  }

  // G and H of nodes [first, end) in canonical row order.
  void sum_nodes(Tree& t, const std::vector<double>& g, const std::vector<double>& h,
                 const std::vector<std::uint32_t>& node_of, std::uint32_t first) const {
    for (std::size_t i = 0; i < n; ++i) {
      if (node_of[i] < first) continue;
      t.nodes[node_of[i]].grad_sum += g[i];
      t.nodes[node_of[i]].hess_sum += h[i];
    }
  }
};

void softmax_rows(const std::vector<double>& scores, std::size_t k, std::vector<double>& p) {
  p.resize(scores.size());
  for (std::size_t r = 0; r * k < scores.size(); ++r) {
    const double* s = scores.data() + r * k;
    double* o = p.data() + r * k;
    const double mx = *std::max_element(s, s + k);
    double total = 0;
    for (std::size_t c = 0; c < k; ++c) total += (o[c] = std::exp(s[c] - mx));
    for (std::size_t c = 0; c < k; ++c) o[c] /= total;
  }
}

}  // namespace

Model fit(std::span<const double> features, std::size_t num_features, std::span<const int> labels,
          std::size_t num_classes, const Config& cfg) {
  cfg.validate();
  const std::size_t n = labels.size(), f = num_features, k = num_classes;
  if (f == 0) throw InvalidArgument("gbdt: zero feature width");
  if (features.size() != n * f) throw InvalidArgument("gbdt: feature matrix does not match row count");
  if (k < 2) throw InvalidArgument("gbdt: need at least 2 classes");
  for (double v : features)
    if (!std::isfinite(v)) throw InvalidArgument("gbdt: non-finite feature");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw InvalidArgument("gbdt: label out of range");
  if (n == 0 || std::all_of(labels.begin(), labels.end(), [&](int y) { return y == labels[0]; }))
    throw InvalidArgument("single-class input");

  // Canonical row order: lexicographic on (features, label).
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = features.subspan(a * f, f), rb = features.subspan(b * f, f);
    const auto [ia, ib] = std::mismatch(ra.begin(), ra.end(), rb.begin());
    if (ia != ra.end()) return *ia < *ib;
    return labels[a] < labels[b];
  });
  std::vector<double> x(n * f);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(features.begin() + static_cast<long>(perm[i] * f), f, x.begin() + static_cast<long>(i * f));
    y[i] = labels[perm[i]];
  }

  std::vector<std::vector<std::uint32_t>> sorted(f, std::vector<std::uint32_t>(n));
  for (std::size_t feat = 0; feat < f; ++feat) {
    auto& s = sorted[feat];
    std::iota(s.begin(), s.end(), 0u);
    std::stable_sort(s.begin(), s.end(), [&](auto a, auto b) { return x[a * f + feat] < x[b * f + feat]; });
  }

  Model m;
  m.config = cfg;
  m.num_classes = k;
  m.num_features = f;
  m.trees.assign(k, {});
  const Builder builder{x, n, f, sorted, cfg};
  std::vector<double> scores(n * k, 0.0), p, g(n), h(n);
  std::vector<std::uint32_t> node_of(n);
  for (int round = 0; round < cfg.rounds; ++round) {
    softmax_rows(scores, k, p);
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        const double pi = p[i * k + c];
        g[i] = pi - (static_cast<std::size_t>(y[i]) == c ? 1.0 : 0.0);
        h[i] = pi * (1.0 - pi);
      }
      auto tree = builder.build(g, h, node_of);
      for (std::size_t i = 0; i < n; ++i) scores[i * k + c] += tree.nodes[node_of[i]].value;
      m.trees[c].push_back(std::move(tree));
    }
  }
  return m;
}

ViewPrediction predict_view(const Model& model, std::span<const double> feature) {
  if (feature.size() != model.num_features)
    throw InvalidArgument("gbdt: feature width " + std::to_string(feature.size()) + " does not match the model's " +
                          std::to_string(model.num_features));
  ViewPrediction out;
  out.scores.assign(model.num_classes, 0.0);
  for (std::size_t c = 0; c < model.num_classes; ++c)
    for (const auto& t : model.trees[c]) out.scores[c] += t.predict(feature);
  out.label = static_cast<int>(argmax(std::span<const double>(out.scores)));
  return out;
}

int predict_model(const Model& model, std::span<const double> features) {
  const std::size_t w = model.num_features;
  if (w == 0 || features.size() != static_cast<std::size_t>(kViewCount) * w)
    throw InvalidArgument("gbdt: predict_model needs exactly 20 views");
  std::vector<int> labels;
  std::vector<double> scores;
  for (int v = 0; v < kViewCount; ++v) {
    auto p = predict_view(model, features.subspan(static_cast<std::size_t>(v) * w, w));
    labels.push_back(p.label);
    scores.insert(scores.end(), p.scores.begin(), p.scores.end());
  }
  return majority_vote(labels, scores, model.num_classes);
}

std::vector<double> view_feature(std::span<const double> probs, int view, bool probs_only) {
  if (view < 0 || view >= kViewCount) throw InvalidArgument("view index out of range");
  std::vector<double> out(probs.begin(), probs.end());
  if (!probs_only) {
    out.resize(probs.size() + kViewCount, 0.0);
    out[probs.size() + static_cast<std::size_t>(view)] = 1.0;
  }
  return out;
}

FeatureMatrix features_from_dump(const ProbabilityDump& dump, bool probs_only) {
  FeatureMatrix fm;
  fm.width = dump.classes() + (probs_only ? 0 : kViewCount);
  for (std::size_t m = 0; m < dump.models.size(); ++m) {
    for (int v = 0; v < kViewCount; ++v) {
      const auto row = view_feature(dump.view_probs(m, v), v, probs_only);
      fm.x.insert(fm.x.end(), row.begin(), row.end());
      fm.y.push_back(dump.labels[m]);
    }
  }
  return fm;
}

std::vector<int> predict_dump(const Model& model, const ProbabilityDump& dump) {
  if (dump.classes() != model.num_classes) throw InvalidArgument("gbdt: class count of dump and model differ");
  const auto fm = features_from_dump(dump, !model.view_onehot);
  const std::size_t stride = static_cast<std::size_t>(kViewCount) * fm.width;
  std::vector<int> out;
  for (std::size_t m = 0; m < dump.models.size(); ++m)
    out.push_back(predict_model(model, std::span<const double>(fm.x).subspan(m * stride, stride)));
  return out;
}

namespace {
constexpr char kMagic[] = "GBDT";
constexpr char kTrailer[] = "GBDE";
constexpr std::uint32_t kVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_model(const Model& model) {
  detail::ByteWriter w;
  w.put_bytes(std::string_view(kMagic, 4));
  w.put(kVersion);
  w.put(static_cast<std::int32_t>(model.config.rounds));
  w.put(model.config.learning_rate);
  w.put(static_cast<std::int32_t>(model.config.max_depth));
  w.put(model.config.min_child_weight);
  w.put(model.config.lambda);
  w.put(model.config.gamma);
  w.put(static_cast<std::uint32_t>(model.num_classes));
  w.put(static_cast<std::uint32_t>(model.num_features));
  w.put(static_cast<std::uint8_t>(model.view_onehot ? 1 : 0));
  for (const auto& ensemble : model.trees) {
    w.put(static_cast<std::uint32_t>(ensemble.size()));
    for (const auto& t : ensemble) {
      w.put(static_cast<std::uint32_t>(t.nodes.size()));
      for (const auto& nd : t.nodes) {
        w.put(nd.feature);
        w.put(nd.threshold);
        w.put(nd.left);
        w.put(nd.right);
        w.put(nd.value);
        w.put(nd.grad_sum);
        w.put(nd.hess_sum);
      }
    }
  }
  w.put_bytes(std::string_view(kTrailer, 4));
  return std::move(w.bytes());
}

Model decode_model(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (r.remaining() < 4 || r.get_bytes(4) != std::string_view(kMagic, 4)) throw FormatError("bad gbdt model");
  if (const auto v = r.get<std::uint32_t>(); v != kVersion)
    throw FormatError("gbdt model version mismatch: " + std::to_string(v));
  Model m;
  m.config.rounds = r.get<std::int32_t>();
  m.config.learning_rate = r.get<double>();
  m.config.max_depth = r.get<std::int32_t>();
  m.config.min_child_weight = r.get<double>();
  m.config.lambda = r.get<double>();
  m.config.gamma = r.get<double>();
  try {
    m.config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad gbdt model: ") + e.what());
  }
  m.num_classes = r.get<std::uint32_t>();
  m.num_features = r.get<std::uint32_t>();
  m.view_onehot = r.get<std::uint8_t>() != 0;
  if (m.num_classes < 2 || m.num_classes > 1u << 16 || m.num_features == 0 || m.num_features > 1u << 20)
    throw FormatError("bad gbdt model: dimensions");
  m.trees.resize(m.num_classes);
  for (auto& ensemble : m.trees) {
    const auto count = r.get<std::uint32_t>();
    if (count != static_cast<std::uint32_t>(m.config.rounds)) throw FormatError("bad gbdt model: tree count");
    for (std::uint32_t i = 0; i < count; ++i) {
      Tree t;
      const auto nodes = r.get<std::uint32_t>();
      if (nodes == 0 || nodes > r.remaining() / 44) throw FormatError("bad gbdt model: node count");
      t.nodes.resize(nodes);
      for (std::uint32_t j = 0; j < nodes; ++j) {
        Node& nd = t.nodes[j];
        nd.feature = r.get<std::int32_t>();
        nd.threshold = r.get<double>();
        nd.left = r.get<std::uint32_t>();
        nd.right = r.get<std::uint32_t>();
        nd.value = r.get<double>();
        nd.grad_sum = r.get<double>();
        nd.hess_sum = r.get<double>();
        if (!nd.is_leaf() && (static_cast<std::size_t>(nd.feature) >= m.num_features || nd.left <= j ||
                              nd.right <= j || nd.left >= nodes || nd.right >= nodes))
          throw FormatError("bad gbdt model: node links");
        if (!std::isfinite(nd.value)) throw FormatError("bad gbdt model: non-finite leaf");
      }
      if (t.depth() > m.config.max_depth) throw FormatError("bad gbdt model: tree deeper than max_depth");
      ensemble.push_back(std::move(t));
    }
  }
  if (r.remaining() < 4 || r.get_bytes(4) != std::string_view(kTrailer, 4)) throw FormatError("bad gbdt model: trailer");
  if (r.remaining() != 0) throw FormatError("bad gbdt model: trailing bytes");
  return m;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  detail::write_file_bytes(path.string(), encode_model(model));
}

Model load_model(const std::filesystem::path& path) { return decode_model(detail::read_file_bytes(path.string())); }

}  // namespace lfdnet::gbdt
