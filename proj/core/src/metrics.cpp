#include "lfdnet/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "binary_io.hpp"
#include "lfdnet/error.hpp"
#include "lfdnet/manifest.hpp"
#include "lfdnet/render.hpp"

namespace lfdnet {

namespace {

template <typename T>
std::size_t argmax_impl(std::span<const T> v) {
  if (v.empty()) throw InvalidArgument("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

std::size_t argmax(std::span<const double> v) { return argmax_impl(v); }
std::size_t argmax(std::span<const float> v) { return argmax_impl(v); }

int majority_vote(std::span<const int> view_labels, std::span<const double> scores, std::size_t classes) {
  if (view_labels.empty()) throw InvalidArgument("majority vote over zero views");
  if (scores.size() != view_labels.size() * classes) throw InvalidArgument("majority vote: score shape mismatch");
  std::vector<int> votes(classes, 0);
  for (int l : view_labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) throw InvalidArgument("majority vote: label out of range");
    ++votes[static_cast<std::size_t>(l)];
  }
  std::vector<double> sums(classes, 0.0);
  for (std::size_t v = 0; v < view_labels.size(); ++v)
    for (std::size_t c = 0; c < classes; ++c) sums[c] += scores[v * classes + c];
  std::size_t best = 0;
  for (std::size_t c = 1; c < classes; ++c) {
    if (votes[c] > votes[best] || (votes[c] == votes[best] && sums[c] > sums[best])) best = c;
  }
  return static_cast<int>(best);
}

std::span<const double> ProbabilityDump::model_probs(std::size_t m) const {
  const std::size_t stride = static_cast<std::size_t>(kViewCount) * classes();
  return std::span<const double>(probs).subspan(m * stride, stride);
}

std::span<const double> ProbabilityDump::view_probs(std::size_t m, int view) const {
  return model_probs(m).subspan(static_cast<std::size_t>(view) * classes(), classes());
}

void ProbabilityDump::validate() const {
  if (class_names.size() < 2) throw FormatError("probability dump: need at least 2 classes");
  if (labels.size() != models.size()) throw FormatError("probability dump: label count mismatch");
  if (probs.size() != models.size() * kViewCount * classes()) throw FormatError("probability dump: size mismatch");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= classes()) throw FormatError("probability dump: label out of range");
  for (double p : probs)
    if (!std::isfinite(p)) throw FormatError("probability dump: non-finite probability");
}

namespace {

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_double(const std::string& s, std::size_t row) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw FormatError("probability dump row " + std::to_string(row) + ": bad number '" + s + "'");
  return v;
}

}  // namespace

std::string encode_probability_dump(const ProbabilityDump& d) {
  d.validate();
  std::vector<std::string> head{"model", "view"};
  for (const auto& c : d.class_names) head.push_back("p_" + c);
  head.emplace_back("label");
  std::string out = csv_row(head);
  std::vector<std::string> f;
  for (std::size_t m = 0; m < d.models.size(); ++m) {
    for (int v = 0; v < kViewCount; ++v) {
      f.assign({d.models[m], std::to_string(v)});
      for (double p : d.view_probs(m, v)) f.push_back(format_double(p));
      f.push_back(d.class_names[static_cast<std::size_t>(d.labels[m])]);
      out += csv_row(f);
    }
  }
  return out;
}

ProbabilityDump parse_probability_dump(std::string_view text) {
  auto rows = parse_csv(text);
  if (rows.empty()) throw FormatError("probability dump: missing header");
  const auto& h = rows[0];
  if (h.size() < 5 || h[0] != "model" || h[1] != "view" || h.back() != "label")
    throw FormatError("probability dump: unexpected header");
  ProbabilityDump d;
  for (std::size_t i = 2; i + 1 < h.size(); ++i) {
    if (h[i].rfind("p_", 0) != 0) throw FormatError("probability dump: bad column " + h[i]);
    d.class_names.push_back(h[i].substr(2));
  }
  std::map<std::string, int> index;
  for (std::size_t c = 0; c < d.class_names.size(); ++c) index[d.class_names[c]] = static_cast<int>(c);
  const std::size_t k = d.class_names.size();
  std::size_t data_rows = 0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != h.size()) throw FormatError("probability dump row " + std::to_string(r + 1) + ": field count");
    const auto expected_view = static_cast<int>(data_rows++ % kViewCount);
    if (row[1] != std::to_string(expected_view))
      throw FormatError("probability dump row " + std::to_string(r + 1) + ": views must run 0..19 per model");
    if (expected_view == 0) {
      d.models.push_back(row[0]);
      auto it = index.find(row.back());
      if (it == index.end()) throw FormatError("probability dump row " + std::to_string(r + 1) + ": unknown label " + row.back());
      d.labels.push_back(it->second);
    } else if (row[0] != d.models.back()) {
      throw FormatError("probability dump row " + std::to_string(r + 1) + ": model has fewer than 20 views");
    }
    for (std::size_t c = 0; c < k; ++c) d.probs.push_back(parse_double(row[2 + c], r + 1));
  }
  if (d.probs.size() != d.models.size() * kViewCount * k) throw FormatError("probability dump: incomplete last model");
  d.validate();
  return d;
}

ProbabilityDump read_probability_dump(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path.string());
  try {
    return parse_probability_dump({reinterpret_cast<const char*>(bytes.data()), bytes.size()});
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_probability_dump(const ProbabilityDump& d, const std::filesystem::path& path) {
  const auto text = encode_probability_dump(d);
  detail::write_file_bytes(path.string(), {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

void reweight_probabilities(ProbabilityDump& d, std::span<const double> class_weights) {
  const std::size_t k = d.classes();
  if (class_weights.size() != k) throw InvalidArgument("reweight: class weight count mismatch");
  for (std::size_t row = 0; row * k < d.probs.size(); ++row) {
    double* p = d.probs.data() + row * k;
    double total = 0;
    for (std::size_t c = 0; c < k; ++c) total += (p[c] *= class_weights[c]);
    for (std::size_t c = 0; c < k; ++c) p[c] /= total;
  }
}

Evaluation evaluate_models(std::span<const int> truth, std::span<const int> predicted,
                           std::vector<std::string> class_names) {
  if (truth.size() != predicted.size()) throw InvalidArgument("evaluate: label count mismatch");
  const std::size_t k = class_names.size();
  Evaluation e;
  e.class_names = std::move(class_names);
  e.models = truth.size();
  e.model_labels.assign(truth.begin(), truth.end());
  e.model_predictions.assign(predicted.begin(), predicted.end());
  e.confusion.assign(k, std::vector<long>(k, 0));
  for (std::size_t m = 0; m < truth.size(); ++m) {
    const auto t = static_cast<std::size_t>(truth[m]), p = static_cast<std::size_t>(predicted[m]);
    if (t >= k || p >= k) throw InvalidArgument("evaluate: label out of range");
    ++e.confusion[t][p];
    e.models_correct += t == p;
  }
  e.model_accuracy = e.models ? static_cast<double>(e.models_correct) / static_cast<double>(e.models) : 0.0;
  e.model_recall.assign(k, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t c = 0; c < k; ++c) {
    long total = 0;
    for (long v : e.confusion[c]) total += v;
    if (total) e.model_recall[c] = static_cast<double>(e.confusion[c][c]) / static_cast<double>(total);
  }
  return e;
}

Evaluation evaluate(const ProbabilityDump& d) {
  d.validate();
  const std::size_t k = d.classes();
  std::vector<int> predicted(d.models.size());
  std::vector<long> view_correct(kViewCount, 0);
  std::vector<long> class_images(k, 0), class_images_correct(k, 0);
  std::size_t images_correct = 0;
  double loss = 0;
  std::vector<int> view_labels(kViewCount);
  for (std::size_t m = 0; m < d.models.size(); ++m) {
    const auto y = d.labels[m];
    for (int v = 0; v < kViewCount; ++v) {
      const auto p = d.view_probs(m, v);
      view_labels[static_cast<std::size_t>(v)] = static_cast<int>(argmax(p));
      const bool ok = view_labels[static_cast<std::size_t>(v)] == y;
      images_correct += ok;
      view_correct[static_cast<std::size_t>(v)] += ok;
      ++class_images[static_cast<std::size_t>(y)];
      class_images_correct[static_cast<std::size_t>(y)] += ok;
      loss -= std::log(std::max(p[static_cast<std::size_t>(y)], 1e-300));
    }
    predicted[m] = majority_vote(view_labels, d.model_probs(m), k);
  }
  auto e = evaluate_models(d.labels, predicted, d.class_names);
  e.images = d.models.size() * kViewCount;
  e.images_correct = images_correct;
  e.image_accuracy = e.images ? static_cast<double>(images_correct) / static_cast<double>(e.images) : 0.0;
  e.image_loss = e.images ? loss / static_cast<double>(e.images) : 0.0;
  e.image_recall.assign(k, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t c = 0; c < k; ++c)
    if (class_images[c]) e.image_recall[c] = static_cast<double>(class_images_correct[c]) / static_cast<double>(class_images[c]);
  for (long v : view_correct)
    e.view_accuracy.push_back(d.models.empty() ? 0.0 : static_cast<double>(v) / static_cast<double>(d.models.size()));
  return e;
}

std::string format_report(const Evaluation& e) {
  const std::size_t k = e.class_names.size();
  std::size_t width = 5;
  for (const auto& n : e.class_names) width = std::max(width, n.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %6s  %13s  %s\n", static_cast<int>(width), "class", "tested", "misclassified",
                "confused with");
  out += buf;
  long total = 0, wrong = 0;
  for (std::size_t c = 0; c < k; ++c) {
    long tested = 0;
    std::vector<std::pair<long, std::size_t>> targets;
    for (std::size_t p = 0; p < k; ++p) {
      tested += e.confusion[c][p];
      if (p != c && e.confusion[c][p] > 0) targets.emplace_back(e.confusion[c][p], p);
    }
    // Most frequent first, lower class index on ties.
    std::sort(targets.begin(), targets.end(), [](auto a, auto b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
    long missed = tested - e.confusion[c][c];
    std::string conf;
    for (std::size_t i = 0; i < targets.size() && i < 3; ++i) {
      if (i) conf += ", ";
      conf += e.class_names[targets[i].second] + " (" + std::to_string(targets[i].first) + ")";
    }
    if (conf.empty()) conf = "-";
    std::snprintf(buf, sizeof buf, "%-*s  %6ld  %13ld  ", static_cast<int>(width), e.class_names[c].c_str(), tested, missed);
    out += buf;
    out += conf + "\n";
    total += tested;
    wrong += missed;
  }
  std::snprintf(buf, sizeof buf, "%-*s  %6ld  %13ld\n", static_cast<int>(width), "total", total, wrong);
  out += buf;
  const double acc = total ? 100.0 * static_cast<double>(total - wrong) / static_cast<double>(total) : 0.0;
  std::snprintf(buf, sizeof buf, "model accuracy: %ld/%ld = %.2f%%\n", total - wrong, total, acc);
  out += buf;
  if (e.images) {
    std::snprintf(buf, sizeof buf, "image accuracy: %zu/%zu = %.2f%%\n", e.images_correct, e.images,
                  100.0 * e.image_accuracy);
    out += buf;
  }
  return out;
}

}  // namespace lfdnet
