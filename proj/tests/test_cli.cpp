// Drives the `must` executable end to end on a tiny synthetic configuration.

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const char* const kTinyConfig = R"(# small enough to train in seconds
data.num_videos = 3
data.frames_per_video = 40
data.min_segment = 8
data.max_segment = 14
data.frame_height = 8
data.frame_width = 8
data.test_videos = 1
pyramid.frames_per_seq = 4
pyramid.strides_s = 1,2
backbone.embed_dim = 8
backbone.depth = 1
backbone.heads = 2
backbone.patch = 8
backbone.temporal_pool = 2
mtfe.epochs = 1
mtfe.keyframe_stride = 4
mtfe.batch_size = 8
tcm.epochs = 1
tcm.batch_size = 16
tcm.heads = 2
)";

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("must_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::ofstream(root_ / "tiny.cfg") << kTinyConfig;
  }
  void TearDown() override { fs::remove_all(root_); }

  Result run(const std::string& args) const {
    const fs::path out = root_ / "stdout.txt", err = root_ / "stderr.txt";
    const std::string cmd = std::string(MUST_CLI_PATH) + " --workdir " + root_.string() + " --config tiny.cfg " + args +
                            " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  fs::path root_;
};

}  // namespace

TEST_F(Cli, RepeatedGenerateGivesIdenticalManifests) {
  ASSERT_EQ(run("generate --seed 7 --out gen1").code, 0);
  ASSERT_EQ(run("generate --seed 7 --out gen2").code, 0);
  const auto a = nlohmann::json::parse(slurp(root_ / "gen1" / "manifest.json"));
  const auto b = nlohmann::json::parse(slurp(root_ / "gen2" / "manifest.json"));
  EXPECT_EQ(a["outputs"], b["outputs"]);
  EXPECT_EQ(a["config"], b["config"]);
  EXPECT_EQ(a["seed"], 7);
  EXPECT_EQ(slurp(root_ / "gen1" / "annotations.csv"), slurp(root_ / "gen2" / "annotations.csv"));
  EXPECT_TRUE(fs::exists(root_ / "gen1" / "config.cfg"));
}

TEST_F(Cli, ConfigErrorsExitTwoNamingTheKey) {
  const auto r = run("generate --set data.colour=red");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("data.colour"), std::string::npos) << r.err;
  EXPECT_EQ(run("generate --set data.num_videos=zero").code, 2);
  EXPECT_EQ(run("no-such-command").code, 2);
}

TEST_F(Cli, MissingUpstreamArtifactExitsThreeNamingThePath) {
  const auto r = run("train-mtfe");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find((root_ / "data").string()), std::string::npos) << r.err;
  ASSERT_EQ(run("generate").code, 0);
  const auto e = run("eval");
  EXPECT_EQ(e.code, 3);
  EXPECT_NE(e.err.find("predictions"), std::string::npos) << e.err;
}

TEST_F(Cli, ConfigCommandPrintsMergedConfig) {
  const auto r = run("config --set seed=99");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("seed = 99"), std::string::npos);
  EXPECT_NE(r.out.find("backbone.embed_dim = 8"), std::string::npos);
}

TEST_F(Cli, FullPipelineOfflineThenOnline) {
  for (const char* cmd : {"generate", "train-mtfe", "extract", "train-tcm", "infer", "eval"}) {
    const auto r = run(cmd);
    ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
  }
  for (const char* f : {"mtfe/mtfe.ckpt", "mtfe/train_log.csv", "embeddings/embeddings.bin", "embeddings/index.json",
                        "tcm/tcm.ckpt", "tcm/tcm.json", "predictions/predictions.jsonl", "report/metrics.json",
                        "report/metrics.txt"})
    EXPECT_TRUE(fs::exists(root_ / f)) << f;
  const auto metrics = nlohmann::json::parse(slurp(root_ / "report" / "metrics.json"));
  EXPECT_TRUE(metrics["tcm"].contains("mAP"));
  EXPECT_TRUE(metrics.contains("mtfe_baseline"));

  const auto ribbon = run("ribbon --video v002 --svg figs/ribbon.svg");
  ASSERT_EQ(ribbon.code, 0) << ribbon.err;
  EXPECT_EQ(slurp(root_ / "figs" / "ribbon.svg").rfind("<svg", 0), 0u);
  EXPECT_TRUE(fs::exists(root_ / "figs" / "ribbon.manifest.json"));

  // Online inference on the same trained modules: one record per frame.
  const auto online = run("infer --mode online --out online_predictions");
  ASSERT_EQ(online.code, 0) << online.err;
  std::istringstream lines(slurp(root_ / "online_predictions" / "predictions.jsonl"));
  std::string line;
  std::size_t records = 0;
  while (std::getline(lines, line)) {
    const auto rec = nlohmann::json::parse(line);
    EXPECT_EQ(rec["video"], "v002");
    EXPECT_EQ(rec["frame"], records);
    ++records;
  }
  EXPECT_EQ(records, 40u);
}

TEST_F(Cli, IdempotentTraining) {
  ASSERT_EQ(run("generate").code, 0);
  ASSERT_EQ(run("train-mtfe --out m1").code, 0);
  ASSERT_EQ(run("train-mtfe --out m2").code, 0);
  EXPECT_EQ(slurp(root_ / "m1" / "mtfe.ckpt"), slurp(root_ / "m2" / "mtfe.ckpt"));
  auto outputs = [&](const char* dir) { return nlohmann::json::parse(slurp(root_ / dir / "manifest.json"))["outputs"]; };
  EXPECT_EQ(outputs("m1"), outputs("m2"));
}
