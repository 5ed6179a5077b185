#include "lfdnet/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "lfdnet/checkpoint.hpp"
#include "lfdnet/error.hpp"
#include "lfdnet/gbdt.hpp"
#include "lfdnet/hash.hpp"
#include "lfdnet/parallel.hpp"
#include "lfdnet/split.hpp"
#include "lfdnet/trainer.hpp"

namespace lfdnet::pipeline {

namespace {

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  detail::write_file_bytes(path.string(), {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory " + dir.string() + ": " + ec.message());
}

fs::path relative_to(const fs::path& target, const fs::path& base) {
  const auto abs_target = fs::absolute(target).lexically_normal();
  const auto rel = abs_target.lexically_relative(fs::absolute(base).lexically_normal());
  return rel.empty() ? abs_target : rel;
}

Manifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifact(path.string());
  auto m = read_manifest(path);
  m.validate();
  return m;
}

// Views of the rows tagged `split`, labelled by their index in class_names.
ViewDataset load_views(const Manifest& m, const fs::path& manifest_path, const std::string& split,
                       const std::vector<std::string>& class_names, int jobs) {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < m.rows.size(); ++r)
    if (m.rows[r].split == split) rows.push_back(r);
  std::vector<std::vector<ViewImage>> views(rows.size());
  parallel_for(rows.size(), jobs, [&](std::size_t i) {
    for (const auto& v : m.rows[rows[i]].views) {
      const auto p = resolve_relative(manifest_path, v);
      if (!fs::exists(p)) throw MissingArtifact(p.string());
      views[i].push_back(read_pgm(p));
    }
  });
  ViewDataset ds;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = m.rows[rows[i]];
    auto it = std::find(class_names.begin(), class_names.end(), row.label);
    if (it == class_names.end()) throw ConfigError("label '" + row.label + "' is not a class of the checkpoint");
    ds.add_model(row.path, static_cast<int>(it - class_names.begin()), views[i]);
  }
  return ds;
}

Manifest load_trainable(const fs::path& path) {
  auto m = load_manifest(path);
  if (!m.has_views()) throw MissingArtifact(path.string() + " (view columns; run render first)");
  if (!m.has_split()) throw MissingArtifact(path.string() + " (split tags; run split first)");
  return m;
}

ProbabilityDump make_dump(const ViewDataset& ds, const Tensor<float>& probs, const std::vector<std::string>& names) {
  ProbabilityDump d;
  d.class_names = names;
  d.models = ds.model_names;
  d.labels = ds.model_labels;
  d.probs.assign(probs.data(), probs.data() + probs.size());
  return d;
}

nlohmann::json evaluation_json(const Evaluation& e) {
  using nlohmann::json;
  json per_class = json::object();
  for (std::size_t c = 0; c < e.class_names.size(); ++c) {
    json entry;
    entry["model_recall"] = e.model_recall.empty() ? json(nullptr) : json(e.model_recall[c]);
    if (e.images) entry["image_recall"] = e.image_recall.empty() ? json(nullptr) : json(e.image_recall[c]);
    per_class[e.class_names[c]] = entry;
  }
  json j;
  j["models"] = e.models;
  j["models_correct"] = e.models_correct;
  j["model_accuracy"] = e.model_accuracy;
  // Model-level evaluations (the booster's votes) carry no per-image scores.
  if (e.images) {
    j["images"] = e.images;
    j["images_correct"] = e.images_correct;
    j["image_accuracy"] = e.image_accuracy;
    j["image_loss"] = e.image_loss;
    j["view_accuracy"] = e.view_accuracy;
  }
  j["per_class"] = per_class;
  j["confusion"] = e.confusion;
  return j;
}

}  // namespace

std::string encode_metrics(const std::vector<EpochMetrics>& history) {
  std::string out = "epoch,train_loss,train_accuracy,test_loss,test_accuracy\n";
  for (const auto& m : history)
    out += std::to_string(m.epoch) + "," + fmt(m.train_loss) + "," + fmt(m.train_accuracy) + "," + fmt(m.test_loss) +
           "," + fmt(m.test_accuracy) + "\n";
  return out;
}

Manifest run_gen(const synth::CorpusSpec& spec, const fs::path& out, int jobs) {
  make_dirs(out);
  return synth::generate_corpus(spec, out, jobs);
}

RenderResult run_render(const fs::path& manifest_path, const fs::path& out, const PipelineConfig& cfg, int jobs) {
  cfg.validate();
  const auto in = load_manifest(manifest_path);
  make_dirs(out);
  const std::string settings =
      "resolution=" + std::to_string(cfg.render.resolution) + ";fill_fraction=" + fmt(cfg.render.fill_fraction);

  const std::size_t n = in.rows.size();
  std::vector<std::string> keys(n), errors(n);
  parallel_for(n, jobs, [&](std::size_t r) {
    try {
      const auto bytes = detail::read_file_bytes(resolve_relative(manifest_path, in.rows[r].path).string());
      keys[r] = hex64(fnv1a64(settings, fnv1a64(bytes)));
    } catch (const Error& e) {
      errors[r] = e.what();
    }
  });

  // <key>/<stem>_vNN.pgm, named after the first row carrying that mesh.
  auto view_path = [&](const std::string& key, std::size_t row, int v) {
    char suffix[32];
    std::snprintf(suffix, sizeof suffix, "_v%02d.pgm", v);
    return fs::path(key) / (fs::path(in.rows[row].path).stem().string() + suffix);
  };
  // One job per distinct key, so identical meshes never race on the same files.
  std::map<std::string, std::size_t> first_row;
  for (std::size_t r = 0; r < n; ++r)
    if (errors[r].empty()) first_row.emplace(keys[r], r);
  std::vector<std::pair<std::string, std::size_t>> work(first_row.begin(), first_row.end());
  std::vector<char> was_cached(work.size(), 0);
  std::vector<std::string> work_error(work.size());
  const auto rig = dodecahedron_rig();
  parallel_for(work.size(), jobs, [&](std::size_t w) {
    const auto& [key, r] = work[w];
    bool complete = true;
    for (int v = 0; v < kViewCount && complete; ++v) complete = fs::exists(out / view_path(key, r, v));
    if (complete) {
      was_cached[w] = 1;
      return;
    }
    try {
      const auto mesh = load_mesh(resolve_relative(manifest_path, in.rows[r].path));
      const auto views = render_views(normalize(mesh), rig, cfg.render);
      make_dirs(out / key);
      for (int v = 0; v < kViewCount; ++v) write_pgm(views[static_cast<std::size_t>(v)], out / view_path(key, r, v));
    } catch (const Error& e) {
      work_error[w] = e.what();
    }
  });
  std::map<std::string, std::string> key_error;
  for (std::size_t w = 0; w < work.size(); ++w)
    if (!work_error[w].empty()) key_error[work[w].first] = work_error[w];

  RenderResult res;
  res.models = n;
  res.manifest = out / "manifest.csv";
  Manifest rendered;
  for (std::size_t w = 0; w < work.size(); ++w)
    if (work_error[w].empty() && !was_cached[w]) ++res.rendered;
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = in.rows[r];
    if (errors[r].empty()) {
      auto it = key_error.find(keys[r]);
      if (it != key_error.end()) errors[r] = it->second;
    }
    if (!errors[r].empty()) {
      res.errors.emplace_back(row.path, errors[r]);
      continue;
    }
    ManifestRow o{relative_to(resolve_relative(manifest_path, row.path), out).generic_string(), row.label, row.split, {}};
    for (int v = 0; v < kViewCount; ++v) o.views.push_back(view_path(keys[r], first_row.at(keys[r]), v).generic_string());
    rendered.rows.push_back(std::move(o));
  }
  // Duplicate meshes share images; count them as cached.
  res.cached = n - res.errors.size() - res.rendered;
  write_manifest(rendered, res.manifest);
  const fs::path err_path = out / "render_errors.csv";
  if (res.errors.empty()) {
    std::error_code ec;
    fs::remove(err_path, ec);
  } else {
    std::string text = csv_row({"path", "error"});
    for (const auto& [p, e] : res.errors) text += csv_row({p, e});
    write_text(err_path, text);
  }
  return res;
}

Manifest run_split(const fs::path& manifest_path, const PipelineConfig& cfg) {
  auto m = load_manifest(manifest_path);
  apply_split(m, cfg.split);
  write_manifest(m, manifest_path);
  return m;
}

TrainResult run_train(const fs::path& manifest_path, const fs::path& run_dir, const PipelineConfig& cfg, int jobs,
                      bool resume, const std::function<void(const EpochMetrics&)>& progress) {
  cfg.validate();
  const auto m = load_trainable(manifest_path);
  const auto names = m.labels();
  const auto train_set = load_views(m, manifest_path, "train", names, jobs);
  const auto test_set = load_views(m, manifest_path, "test", names, jobs);
  make_dirs(run_dir);

  Network net(cfg.arch_for(names), cfg.init_seed);
  TrainingState state;
  const fs::path last = run_dir / "last.lfdn";
  if (resume) {
    if (!fs::exists(last)) throw MissingArtifact(last.string());
    load_checkpoint_into(last, net, &state);
  }
  write_text(run_dir / "config.json", cfg.to_json());

  auto on_epoch = [&](Network& n, const TrainingState& s) {
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03d.lfdn", s.epoch);
    const auto bytes = encode_checkpoint(n, s);
    detail::write_file_bytes((run_dir / name).string(), bytes);
    detail::write_file_bytes(last.string(), bytes);
    write_text(run_dir / "metrics.csv", encode_metrics(s.history));
    if (progress && !s.history.empty()) progress(s.history.back());
  };
  train(net, state, train_set, test_set.size() ? &test_set : nullptr, cfg.train, jobs, on_epoch);
  if (!fs::exists(last)) on_epoch(net, state);  // zero epochs requested: still leave a checkpoint

  TrainResult res;
  res.history = state.history;
  res.last_checkpoint = last;
  res.train_models = train_set.models();
  res.test_models = test_set.models();
  return res;
}

Evaluation run_eval(const fs::path& manifest_path, const fs::path& checkpoint, const std::string& split,
                    const fs::path& out, int jobs, bool reweight) {
  if (split != "train" && split != "test") throw ConfigError("--split must be train or test, got '" + split + "'");
  const auto m = load_trainable(manifest_path);
  if (!fs::exists(checkpoint)) throw MissingArtifact(checkpoint.string());
  auto ck = load_checkpoint(checkpoint);
  const auto& names = ck.net.spec().class_names;
  if (names.empty()) throw FormatError("checkpoint has no class names");
  const auto ds = load_views(m, manifest_path, split, names, jobs);
  if (ds.models() == 0) throw ConfigError("manifest has no '" + split + "' rows");
  auto dump = make_dump(ds, predict_dataset(ck.net, ds, jobs), names);
  if (reweight) reweight_probabilities(dump, ck.state.class_weights.weights);

  make_dirs(out);
  write_probability_dump(dump, out / ("probs_" + split + ".csv"));
  const auto e = evaluate(dump);
  write_text(out / ("report_" + split + ".txt"), format_report(e));
  auto j = evaluation_json(e);
  j["split"] = split;
  j["reweighted"] = reweight;
  write_text(out / ("eval_" + split + ".json"), j.dump(2) + "\n");
  return e;
}

BoostResult run_boost(const fs::path& train_dump, const fs::path& test_dump, const PipelineConfig& cfg,
                      const fs::path& out) {
  cfg.validate();
  for (const auto& p : {train_dump, test_dump})
    if (!fs::exists(p)) throw MissingArtifact(p.string());
  const auto tr = read_probability_dump(train_dump);
  const auto te = read_probability_dump(test_dump);
  if (tr.class_names != te.class_names) throw ConfigError("train and test dumps have different classes");

  const auto fm = gbdt::features_from_dump(tr, cfg.gbdt_probs_only);
  auto model = gbdt::fit(fm.x, fm.width, fm.y, tr.classes(), cfg.gbdt);
  model.view_onehot = !cfg.gbdt_probs_only;

  BoostResult res;
  res.raw = evaluate(te);
  res.boosted = evaluate_models(te.labels, gbdt::predict_dump(model, te), te.class_names);
  res.train_raw_accuracy = evaluate(tr).model_accuracy;
  res.train_boosted_accuracy =
      evaluate_models(tr.labels, gbdt::predict_dump(model, tr), tr.class_names).model_accuracy;

  make_dirs(out);
  gbdt::save_model(model, out / "gbdt.model");
  write_text(out / "boost_report.txt", "CNN, 20-view majority vote\n" + format_report(res.raw) +
                                           "\nBoosted trees, 20-view majority vote\n" + format_report(res.boosted));
  nlohmann::json j;
  j["classes"] = te.class_names;
  j["raw"] = evaluation_json(res.raw);
  j["boosted"] = evaluation_json(res.boosted);
  j["raw_model_accuracy"] = res.raw.model_accuracy;
  j["boosted_model_accuracy"] = res.boosted.model_accuracy;
  j["train_raw_model_accuracy"] = res.train_raw_accuracy;
  j["train_boosted_model_accuracy"] = res.train_boosted_accuracy;
  j["gbdt_rounds"] = cfg.gbdt.rounds;
  write_text(out / "summary.json", j.dump(2) + "\n");
  return res;
}

std::vector<ClassScore> run_predict(const fs::path& mesh, const fs::path& checkpoint, const PipelineConfig& cfg,
                                    int jobs, std::size_t top) {
  if (!fs::exists(mesh)) throw MissingArtifact(mesh.string());
  if (!fs::exists(checkpoint)) throw MissingArtifact(checkpoint.string());
  auto ck = load_checkpoint(checkpoint);
  const auto& spec = ck.net.spec();
  RenderConfig rc = cfg.render;
  rc.resolution = spec.input_size;
  ViewDataset ds;
  ds.add_model(mesh.string(), 0, render_views(normalize(load_mesh(mesh)), dodecahedron_rig(), rc));
  const auto probs = predict_dataset(ck.net, ds, jobs);
  const auto k = static_cast<std::size_t>(spec.classes);
  std::vector<double> mean(k, 0.0);
  for (std::size_t v = 0; v < ds.size(); ++v)
    for (std::size_t c = 0; c < k; ++c) mean[c] += probs.data()[v * k + c];
  for (auto& x : mean) x /= static_cast<double>(ds.size());
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return mean[a] > mean[b]; });
  std::vector<ClassScore> res;
  for (std::size_t i = 0; i < std::min(top, k); ++i) {
    const auto c = order[i];
    res.push_back({spec.class_names.empty() ? std::to_string(c) : spec.class_names[c], mean[c]});
  }
  return res;
}

}  // namespace lfdnet::pipeline
