#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lfdnet/checkpoint.hpp"
#include "lfdnet/config.hpp"
#include "lfdnet/manifest.hpp"
#include "lfdnet/metrics.hpp"
#include "lfdnet/synth.hpp"

// The pipeline stages behind the CLI commands. Every stage reads and writes
// files only, so stages can run in separate processes.
namespace lfdnet::pipeline {

namespace fs = std::filesystem;

/// Writes the corpus and <out>/manifest.csv.
Manifest run_gen(const synth::CorpusSpec& spec, const fs::path& out, int jobs);

struct RenderResult {
  std::size_t models = 0;
  std::size_t rendered = 0;  // models whose views were (re)computed
  std::size_t cached = 0;    // models whose 20 views were already on disk
  std::vector<std::pair<std::string, std::string>> errors;  // (mesh path, message)
  fs::path manifest;
};

/// Renders every model of `manifest` into <out>/<key>/<stem>_vNN.pgm, where key
/// hashes the mesh bytes and the render settings, and writes the render
/// manifest <out>/manifest.csv (mesh paths rewritten relative to <out>, split
/// tags kept, 20 view columns). Failed rows are left out of the render
/// manifest and listed in <out>/render_errors.csv.
RenderResult run_render(const fs::path& manifest, const fs::path& out, const PipelineConfig& cfg, int jobs);

/// Writes split tags into the manifest in place.
Manifest run_split(const fs::path& manifest, const PipelineConfig& cfg);

struct TrainResult {
  std::vector<EpochMetrics> history;
  fs::path last_checkpoint;
  std::size_t train_models = 0, test_models = 0;
};

/// Trains on the train rows of a rendered, split manifest. Writes
/// <run>/epoch_NNN.lfdn after every epoch, <run>/last.lfdn, <run>/metrics.csv
/// and <run>/config.json. With `resume`, continues from <run>/last.lfdn.
TrainResult run_train(const fs::path& manifest, const fs::path& run_dir, const PipelineConfig& cfg, int jobs,
                      bool resume, const std::function<void(const EpochMetrics&)>& progress = {});

/// Writes <out>/probs_<split>.csv, report_<split>.txt and eval_<split>.json.
/// With `reweight`, probabilities are multiplied by the checkpoint's class
/// weights and renormalized before scoring.
Evaluation run_eval(const fs::path& manifest, const fs::path& checkpoint, const std::string& split,
                    const fs::path& out, int jobs, bool reweight);

struct BoostResult {
  Evaluation raw;      // majority vote of the CNN's per-view argmax
  Evaluation boosted;  // majority vote of the booster's per-view labels
  double train_raw_accuracy = 0, train_boosted_accuracy = 0;
};

/// Fits the booster on the train dump and scores both dumps. Writes
/// <out>/gbdt.model, <out>/boost_report.txt and <out>/summary.json.
BoostResult run_boost(const fs::path& train_dump, const fs::path& test_dump, const PipelineConfig& cfg,
                      const fs::path& out);

struct ClassScore {
  std::string label;
  double probability = 0;
};

/// Renders one mesh at the checkpoint's input size and returns the `top`
/// classes by mean view probability.
std::vector<ClassScore> run_predict(const fs::path& mesh, const fs::path& checkpoint, const PipelineConfig& cfg,
                                    int jobs, std::size_t top = 3);

/// Per-epoch metrics as CSV (`epoch,train_loss,train_accuracy,test_loss,test_accuracy`).
std::string encode_metrics(const std::vector<EpochMetrics>& history);

}  // namespace lfdnet::pipeline
