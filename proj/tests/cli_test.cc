#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "ctxgen/io.h"
#include "ctxgen/network.h"
#include "test_util.h"

namespace ctxgen {
namespace {

namespace fs = std::filesystem;

const std::string kCli = CTXGEN_CLI_PATH;
const std::string kConfigs = CTXGEN_CONFIG_DIR;

// Runs the tool with stdout and stderr captured under `dir`; returns the
// exit status.
int RunCli(const testing::TempDir& dir, const std::string& args) {
  const std::string cmd = "'" + kCli + "' " + args + " >'" + (dir.path() / "stdout.txt").string() + "' 2>'" +
                          (dir.path() / "stderr.txt").string() + "'";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string Stdout(const testing::TempDir& dir) { return ReadFile(dir.path() / "stdout.txt"); }
std::string Stderr(const testing::TempDir& dir) { return ReadFile(dir.path() / "stderr.txt"); }

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    work_ = new testing::TempDir();
    data_ = (work_->path() / "data").string();
    ASSERT_EQ(RunCli(*work_, "gen-data --config " + kConfigs + "/smoke_dataset.conf --out " + data_), 0);
  }
  static void TearDownTestSuite() { delete work_; }

  static testing::TempDir* work_;
  static std::string data_;
  testing::TempDir tmp_;
};

testing::TempDir* CliTest::work_ = nullptr;
std::string CliTest::data_;

TEST_F(CliTest, GenDataIsReproducible) {
  const std::string again = (tmp_.path() / "again").string();
  ASSERT_EQ(RunCli(tmp_, "gen-data --config " + kConfigs + "/smoke_dataset.conf --out " + again), 0);
  EXPECT_EQ(DirectoryDigest(again), DirectoryDigest(data_));
  EXPECT_NE(Stdout(tmp_).find("digest=" + DirectoryDigest(again)), std::string::npos);
  const std::string other = (tmp_.path() / "other").string();
  ASSERT_EQ(RunCli(tmp_, "gen-data --config " + kConfigs + "/smoke_dataset.conf --seed 8 --out " + other), 0);
  EXPECT_NE(DirectoryDigest(other), DirectoryDigest(data_));
}

TEST_F(CliTest, SmokeTrainEvalAnalyze) {
  const fs::path out = tmp_.path() / "run";
  const auto start = std::chrono::steady_clock::now();
  ASSERT_EQ(RunCli(tmp_, "train --data " + data_ + " --config " + kConfigs + "/smoke.conf --out " + out.string()), 0);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 60.0);
  for (const char* f : {"checkpoint.bin", "losses.csv", "metrics.csv", "config.txt"}) EXPECT_TRUE(fs::exists(out / f));
  EXPECT_NE(Stdout(tmp_).find("iterations=10"), std::string::npos);
  EXPECT_NE(Stderr(tmp_).find("iter 10:"), std::string::npos);

  const fs::path report = tmp_.path() / "report.csv";
  const std::string eval = "eval --data " + data_ + " --checkpoint " + (out / "checkpoint.bin").string() + " --out ";
  ASSERT_EQ(RunCli(tmp_, eval + report.string()), 0);
  const std::string first = ReadFile(report);
  ASSERT_EQ(RunCli(tmp_, eval + report.string()), 0);
  EXPECT_EQ(ReadFile(report), first);
  EXPECT_EQ(first.rfind(std::string(kMetricCsvHeader) + "\n", 0), 0u);

  const std::string analyze = "analyze --data " + data_ + " --checkpoint " + (out / "checkpoint.bin").string();
  EXPECT_EQ(RunCli(tmp_, analyze + " --mode recmap --limit 2 --out " + (tmp_.path() / "rec").string()), 0);
  EXPECT_TRUE(fs::exists(tmp_.path() / "rec" / "recmap.csv"));
  EXPECT_EQ(RunCli(tmp_, analyze + " --mode scalesel --limit 1 --out " + (tmp_.path() / "sel").string()), 0);
  EXPECT_TRUE(fs::exists(tmp_.path() / "sel" / "scalesel_0000.pgm"));
  EXPECT_EQ(RunCli(tmp_, analyze + " --mode bogus --out " + (tmp_.path() / "x").string()), 1);
}

TEST_F(CliTest, TrainingRunsAreIdentical) {
  const std::string base = "train --data " + data_ + " --config " + kConfigs + "/smoke.conf --out ";
  ASSERT_EQ(RunCli(tmp_, base + (tmp_.path() / "a").string()), 0);
  ASSERT_EQ(RunCli(tmp_, base + (tmp_.path() / "b").string()), 0);
  EXPECT_EQ(DirectoryDigest(tmp_.path() / "a"), DirectoryDigest(tmp_.path() / "b"));
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(RunCli(tmp_, ""), 1);
  EXPECT_EQ(RunCli(tmp_, "frobnicate"), 1);
  EXPECT_EQ(RunCli(tmp_, "train --data " + data_ + " --config /nonexistent.conf --out " + tmp_.path().string()), 1);
  EXPECT_EQ(RunCli(tmp_, "train --data " + data_ + " --config " + kConfigs + "/smoke.conf --variant bogus --out " +
                          tmp_.path().string()),
            1);
  EXPECT_NE(Stderr(tmp_).find("bogus"), std::string::npos);
  EXPECT_EQ(RunCli(tmp_, "train --config " + kConfigs + "/smoke.conf"), 1);
}

TEST_F(CliTest, RuntimeErrorsExitTwo) {
  ModelConfig mc = testing::TinyModelConfig();
  mc.num_classes = 5;
  const fs::path ckpt = tmp_.path() / "five.bin";
  SaveCheckpoint(Model(mc, 1), ckpt);
  EXPECT_EQ(RunCli(tmp_, "eval --data " + data_ + " --checkpoint " + ckpt.string() + " --out " +
                          (tmp_.path() / "r.csv").string()),
            2);
  EXPECT_NE(Stderr(tmp_).find("category mismatch"), std::string::npos);
  EXPECT_EQ(RunCli(tmp_, "eval --data " + (tmp_.path() / "missing").string() + " --checkpoint " + ckpt.string() +
                          " --out " + (tmp_.path() / "r.csv").string()),
            2);
}

TEST_F(CliTest, AblationWritesDigestHeader) {
  const fs::path conf = tmp_.path() / "ablate.conf";
  WriteFileAtomic(conf, ReadFile(kConfigs + "/smoke.conf") + "total_iters=2\neval_every=0\ncells=full,ratio:0:1\n");
  ASSERT_EQ(RunCli(tmp_, "ablate --data " + data_ + " --config " + conf.string() + " --out " +
                          (tmp_.path() / "abl").string()),
            0);
  const std::string csv = ReadFile(tmp_.path() / "abl" / "ablation.csv");
  EXPECT_EQ(csv.rfind("# corpus_digest=" + DirectoryDigest(data_) + "\n", 0), 0u);
  EXPECT_NE(csv.find("\nratio:0:1,"), std::string::npos);
}

}  // namespace
}  // namespace ctxgen
