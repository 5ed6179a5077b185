#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "lfdnet/config.hpp"
#include "lfdnet/error.hpp"
#include "lfdnet/manifest.hpp"
#include "lfdnet/metrics.hpp"
#include "lfdnet/pipeline.hpp"

using namespace lfdnet;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "lfdnet_cli_test";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << s;
}

struct Run {
  int code = -1;
  std::string out;
};

Run lfdnet_cmd(const std::string& args) {
  const auto log = kWork / "cmd.log";
  const std::string cmd = std::string("'") + LFDNET_CLI_PATH + "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

const char* kTinyConfig = R"({
  "render": {"resolution": 32},
  "arch": {"stem_filters": 4, "group_filters": [4, 8], "group_downsample": [false, true],
           "blocks_per_group": 1, "final_pool": 2, "fc": [16]},
  "train": {"epochs": 2, "batch_size": 20},
  "gbdt": {"rounds": 5},
  "seeds": {"split": 3, "init": 4, "shuffle": 5}
})";

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
};

}  // namespace

TEST(Config, DefaultsAndOverrides) {
  const auto d = parse_config("{}");
  EXPECT_EQ(d.render.resolution, 256);
  EXPECT_EQ(d.train.batch_size, 20);
  EXPECT_EQ(d.train.epochs, 100);
  EXPECT_EQ(d.gbdt.rounds, 100);
  const auto c = parse_config(kTinyConfig);
  EXPECT_EQ(c.render.resolution, 32);
  EXPECT_EQ(c.arch.group_filters, (std::vector<int>{4, 8}));
  EXPECT_EQ(c.split.seed, 3u);
  EXPECT_EQ(c.init_seed, 4u);
  EXPECT_EQ(c.train.seed, 5u);
  const auto spec = c.arch_for({"a", "b", "c"});
  EXPECT_EQ(spec.input_size, 32);
  EXPECT_EQ(spec.classes, 3);
  EXPECT_NO_THROW(spec.validate());
  EXPECT_EQ(parse_config(c.to_json()).to_json(), c.to_json());
}

TEST(Config, StrictSchema) {
  EXPECT_THROW(parse_config(R"({"render": {"resolutoin": 64}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"render": {"resolution": "64"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"render": {"resolution": 4}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"train": {"batch_size": 1}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"arch": {"classes": 5}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"arch": {"input_size": 64}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"bogus": {}})"), ConfigError);
  EXPECT_THROW(parse_config("{not json"), ConfigError);
  EXPECT_THROW(parse_config(R"({"render": {"resolution": 100}})"), ConfigError);  // breaks the pool schedule
}

TEST(Config, PathPrecedence) {
  const auto dir = fs::temp_directory_path() / "lfdnet_cfg_test";
  fs::create_directories(dir);
  spit(dir / "a.json", R"({"train": {"epochs": 3}})");
  spit(dir / "b.json", R"({"train": {"epochs": 7}})");
  ::setenv(kConfigEnvVar, (dir / "b.json").c_str(), 1);
  EXPECT_EQ(load_config(dir / "a.json").train.epochs, 3);
  EXPECT_EQ(load_config("").train.epochs, 7);
  ::setenv(kConfigEnvVar, (dir / "missing.json").c_str(), 1);
  EXPECT_THROW(load_config(""), ConfigError);
  ::unsetenv(kConfigEnvVar);
  EXPECT_EQ(load_config("").train.epochs, 100);
  fs::remove_all(dir);
}

TEST(Manifest, RoundTripAndValidation) {
  Manifest m;
  m.rows.push_back({"a/x.stl", "a", "train", {}});
  m.rows.push_back({"b/y, z.stl", "b", "test", {}});
  EXPECT_EQ(parse_manifest(encode_manifest(m)), m);
  EXPECT_EQ(encode_manifest(m).substr(0, 16), "path,label,split");
  for (auto& r : m.rows)
    for (int v = 0; v < 20; ++v) r.views.push_back(r.path + std::to_string(v) + ".pgm");
  EXPECT_EQ(parse_manifest(encode_manifest(m)), m);
  EXPECT_EQ(m.labels(), (std::vector<std::string>{"a", "b"}));

  Manifest dup = m;
  dup.rows[1].path = dup.rows[0].path;
  EXPECT_ANY_THROW(dup.validate());
  Manifest empty_label = m;
  empty_label.rows[0].label.clear();
  EXPECT_ANY_THROW(empty_label.validate());
  EXPECT_EQ(parse_manifest("path,label\nx,y\n").rows.at(0).split, "");
  EXPECT_ANY_THROW(parse_manifest("path,class\nx,y\n"));
  EXPECT_ANY_THROW(parse_manifest("path,label,split\nx,y,validation\n"));
}

TEST(Metrics, EpochLogFormat) {
  const std::vector<EpochMetrics> h{{1, 0.5, 0.25, 0.75, 0.125}, {2, 0.25, 0.5, 0.5, 0.5}};
  const auto text = pipeline::encode_metrics(h);
  std::istringstream in(text);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "epoch,train_loss,train_accuracy,test_loss,test_accuracy");
  EXPECT_EQ(first, "1,0.5,0.25,0.75,0.125");
}

TEST_F(CliTest, UsageAndConfigErrorsExitTwo) {
  EXPECT_EQ(lfdnet_cmd("").code, 2);
  EXPECT_EQ(lfdnet_cmd("frobnicate").code, 2);
  const auto r = lfdnet_cmd("gen --families cuboid,teapot --out '" + (kWork / "bad").string() + "'");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("--families"), std::string::npos) << r.out;
  EXPECT_EQ(lfdnet_cmd("gen --families 8 --per-class 1 --out '" + (kWork / "bad").string() + "'").code, 2);
  spit(kWork / "bad.json", R"({"render": {"fill": 1}})");
  EXPECT_EQ(lfdnet_cmd("--config '" + (kWork / "bad.json").string() + "' split --manifest x.csv").code, 2);
}

TEST_F(CliTest, MissingArtifactsExitThree) {
  const auto r = lfdnet_cmd("split --manifest '" + (kWork / "nope.csv").string() + "'");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("nope.csv"), std::string::npos) << r.out;
  EXPECT_EQ(lfdnet_cmd("predict --checkpoint '" + (kWork / "nope.lfdn").string() + "' x.stl").code, 3);
  EXPECT_EQ(lfdnet_cmd("boost --train-dump a.csv --test-dump b.csv --out '" + kWork.string() + "'").code, 3);
}

TEST_F(CliTest, TinyPipelineEndToEnd) {
  const auto corpus = kWork / "corpus", images = kWork / "images", run = kWork / "run", eval = kWork / "eval";
  const auto cfg_path = kWork / "tiny.json";
  spit(cfg_path, kTinyConfig);
  const std::string cfg = "--jobs 2 --config '" + cfg_path.string() + "' ";

  auto r = lfdnet_cmd("gen --families cuboid,pipe,gear --per-class 5 --seed 2 --out '" + corpus.string() + "'");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto manifest_bytes = slurp(corpus / "manifest.csv");
  ASSERT_EQ(lfdnet_cmd("gen --families cuboid,pipe,gear --per-class 5 --seed 2 --out '" + corpus.string() + "'").code, 0);
  EXPECT_EQ(slurp(corpus / "manifest.csv"), manifest_bytes);

  // Split before render so the tags carry over into the render manifest.
  ASSERT_EQ(lfdnet_cmd(cfg + "split --manifest '" + (corpus / "manifest.csv").string() + "'").code, 0);
  r = lfdnet_cmd(cfg + "render --manifest '" + (corpus / "manifest.csv").string() + "' --out '" + images.string() + "'");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rendered = read_manifest(images / "manifest.csv");
  ASSERT_EQ(rendered.rows.size(), 15u);
  std::size_t pgms = 0;
  for (const auto& e : fs::recursive_directory_iterator(images)) pgms += e.path().extension() == ".pgm";
  EXPECT_EQ(pgms, 15u * 20u);
  r = lfdnet_cmd(cfg + "render --manifest '" + (corpus / "manifest.csv").string() + "' --out '" + images.string() + "'");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("rendered 0 models (15 cached)"), std::string::npos) << r.out;

  const auto train_cmd =
      cfg + "train --manifest '" + (images / "manifest.csv").string() + "' --out '" + run.string() + "'";
  r = lfdnet_cmd(train_cmd);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(run / "epoch_001.lfdn"));
  EXPECT_TRUE(fs::exists(run / "epoch_002.lfdn"));
  const auto metrics = slurp(run / "metrics.csv");
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 3);

  for (const char* split : {"train", "test"}) {
    r = lfdnet_cmd(cfg + "eval --manifest '" + (images / "manifest.csv").string() + "' --checkpoint '" +
                   (run / "last.lfdn").string() + "' --split " + split + " --out '" + eval.string() + "'");
    ASSERT_EQ(r.code, 0) << r.out;
  }
  const auto test_dump = read_probability_dump(eval / "probs_test.csv");
  EXPECT_EQ(test_dump.models.size(), 3u);  // 5 per class -> 1 test model each
  EXPECT_EQ(test_dump.probs.size(), 3u * 20 * 3);
  EXPECT_NE(slurp(eval / "report_test.txt").find("3"), std::string::npos);

  r = lfdnet_cmd(cfg + "boost --train-dump '" + (eval / "probs_train.csv").string() + "' --test-dump '" +
                 (eval / "probs_test.csv").string() + "' --out '" + eval.string() + "'");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(eval / "gbdt.model"));
  EXPECT_TRUE(fs::exists(eval / "summary.json"));

  r = lfdnet_cmd(cfg + "predict --checkpoint '" + (run / "last.lfdn").string() + "' '" +
                 (images / rendered.rows[0].path).string() + "'");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 3);

  // Training an unsplit manifest is a missing artifact.
  Manifest unsplit = rendered;
  for (auto& row : unsplit.rows) row.split.clear();
  write_manifest(unsplit, images / "unsplit.csv");
  EXPECT_EQ(lfdnet_cmd(cfg + "train --manifest '" + (images / "unsplit.csv").string() + "' --out '" +
                       (kWork / "run2").string() + "'")
                .code,
            3);
}
