// lfdnet: gen -> render -> split -> train -> eval -> boost, plus predict.
//
// Exit codes: 0 ok, 2 config/usage error, 3 missing artifact, 4 runtime failure.

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "lfdnet/config.hpp"
#include "lfdnet/error.hpp"
#include "lfdnet/parallel.hpp"
#include "lfdnet/pipeline.hpp"
#include "lfdnet/synth.hpp"

namespace {

namespace fs = std::filesystem;
using namespace lfdnet;

constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitRuntime = 4;

// "--families 8" takes the first 8 built-in families; otherwise names.
std::vector<std::string> resolve_families(const std::vector<std::string>& args) {
  std::vector<std::string> names;
  if (args.size() == 1) {
    int n = 0;
    const auto& a = args[0];
    auto [p, ec] = std::from_chars(a.data(), a.data() + a.size(), n);
    if (ec == std::errc() && p == a.data() + a.size()) {
      const auto& all = synth::families();
      if (n < 2 || n > static_cast<int>(all.size()))
        throw ConfigError("--families: count must be in [2, " + std::to_string(all.size()) + "], got " + a);
      for (int i = 0; i < n; ++i) names.push_back(all[static_cast<std::size_t>(i)].name);
      return names;
    }
  }
  for (const auto& a : args) {
    try {
      names.push_back(synth::family(a).name);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("--families: ") + e.what());
    }
  }
  return names;
}

void print_accuracy(const char* what, const Evaluation& e) {
  std::printf("%s: %zu/%zu = %.2f%%\n", what, e.models_correct, e.models, 100.0 * e.model_accuracy);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Light-field CNN classifier for CAD meshes"};
  app.require_subcommand(1);
  int jobs = 0;
  std::string config_path;
  app.add_option("--jobs,-j", jobs, "Worker threads (0 = logical cores)")->check(CLI::NonNegativeNumber);
  app.add_option("--config", config_path, std::string("JSON config file (else $") + kConfigEnvVar + ")");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a labelled synthetic corpus");
  std::vector<std::string> families;
  int per_class = 40;
  std::uint64_t gen_seed = 1;
  int segments = synth::kDefaultSegments;
  std::vector<std::string> counts;
  std::string gen_out;
  gen->add_option("--families", families, "Number of built-in families, or family names")->delimiter(',');
  gen->add_option("--per-class", per_class, "Models per family");
  gen->add_option("--count", counts, "Per-family model count override, family=N (repeatable)");
  gen->add_option("--seed", gen_seed, "Sampling seed");
  gen->add_option("--segments", segments, "Segments per full circle");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // render
  auto* render = app.add_subcommand("render", "Render 20 silhouettes per model");
  std::string manifest, render_out;
  render->add_option("--manifest", manifest, "Corpus manifest")->required();
  render->add_option("--out", render_out, "Image directory (receives the render manifest)")->required();

  // split
  auto* split = app.add_subcommand("split", "Write stratified train/test tags into a manifest");
  split->add_option("--manifest", manifest, "Manifest to update in place")->required();

  // train
  auto* train = app.add_subcommand("train", "Train the CNN on the train split");
  std::string run_dir;
  bool resume = false;
  train->add_option("--manifest", manifest, "Rendered, split manifest")->required();
  train->add_option("--out", run_dir, "Run directory for checkpoints and metrics")->required();
  train->add_flag("--resume", resume, "Continue from <out>/last.lfdn");

  // eval
  auto* eval = app.add_subcommand("eval", "Dump per-view probabilities and a report");
  std::string checkpoint, eval_split = "test", eval_out;
  bool reweight = false;
  eval->add_option("--manifest", manifest, "Rendered, split manifest")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--split", eval_split, "train or test")->check(CLI::IsMember({"train", "test"}));
  eval->add_option("--out", eval_out, "Output directory")->required();
  eval->add_flag("--reweight", reweight, "Multiply probabilities by the class weights before scoring");

  // boost
  auto* boost = app.add_subcommand("boost", "Fit boosted trees on per-view probabilities");
  std::string train_dump, test_dump, boost_out;
  boost->add_option("--train-dump", train_dump, "probs_train.csv from eval")->required();
  boost->add_option("--test-dump", test_dump, "probs_test.csv from eval")->required();
  boost->add_option("--out", boost_out, "Output directory")->required();

  // predict
  auto* predict = app.add_subcommand("predict", "Classify one mesh file");
  std::string mesh;
  predict->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  predict->add_option("mesh", mesh, "STL or OBJ file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    const int threads = resolve_jobs(jobs);
    if (*gen) {
      synth::CorpusSpec spec;
      if (!families.empty()) spec.families = resolve_families(families);
      spec.models_per_family = per_class;
      spec.seed = gen_seed;
      spec.segments = segments;
      for (const auto& c : counts) {
        const auto eq = c.find('=');
        int n = 0;
        const char* b = c.data() + (eq == std::string::npos ? 0 : eq + 1);
        auto [p, ec] = std::from_chars(b, c.data() + c.size(), n);
        if (eq == std::string::npos || ec != std::errc() || p != c.data() + c.size())
          throw ConfigError("--count: expected family=N, got '" + c + "'");
        spec.model_count_overrides[c.substr(0, eq)] = n;
      }
      try {
        spec.validate();
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("--families/--per-class/--count: ") + e.what());
      }
      const auto m = pipeline::run_gen(spec, gen_out, threads);
      std::printf("generated %zu models in %zu classes under %s\n", m.rows.size(), m.labels().size(), gen_out.c_str());
      return 0;
    }

    const auto cfg = load_config(config_path);
    if (*render) {
      const auto r = pipeline::run_render(manifest, render_out, cfg, threads);
      std::printf("rendered %zu models (%zu cached), %zu failed; manifest %s\n", r.rendered, r.cached, r.errors.size(),
                  r.manifest.string().c_str());
      for (const auto& [path, msg] : r.errors) std::fprintf(stderr, "render failed: %s: %s\n", path.c_str(), msg.c_str());
      return r.errors.empty() ? 0 : kExitRuntime;
    }
    if (*split) {
      const auto m = pipeline::run_split(manifest, cfg);
      std::size_t train_rows = 0;
      for (const auto& r : m.rows) train_rows += r.split == "train";
      std::printf("split %zu models: %zu train, %zu test\n", m.rows.size(), train_rows, m.rows.size() - train_rows);
      return 0;
    }
    if (*train) {
      const auto r = pipeline::run_train(manifest, run_dir, cfg, threads, resume, [](const EpochMetrics& m) {
        std::printf("epoch %3d  loss %.4f  acc %.4f  test loss %.4f  test acc %.4f\n", m.epoch, m.train_loss,
                    m.train_accuracy, m.test_loss, m.test_accuracy);
        std::fflush(stdout);
      });
      std::printf("trained on %zu models (%zu test); checkpoint %s\n", r.train_models, r.test_models,
                  r.last_checkpoint.string().c_str());
      return 0;
    }
    if (*eval) {
      const auto e = pipeline::run_eval(manifest, checkpoint, eval_split, eval_out, threads, reweight);
      std::cout << format_report(e);
      return 0;
    }
    if (*boost) {
      const auto r = pipeline::run_boost(train_dump, test_dump, cfg, boost_out);
      print_accuracy("majority vote", r.raw);
      print_accuracy("boosted      ", r.boosted);
      return 0;
    }
    if (*predict) {
      for (const auto& s : pipeline::run_predict(mesh, checkpoint, cfg, threads))
        std::printf("%-16s %.4f\n", s.label.c_str(), s.probability);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const MissingArtifact& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kExitMissing;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitConfig;
}
