/* Copyright 2026 The MSSV Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "mssv/cli.h"

#include <gtest/gtest.h>

#include <sstream>

#include "svg_check.h"
#include "test_util.h"

namespace mssv::cli {
namespace {

namespace fs = std::filesystem;
using mssv::testing::ReadFile;
using mssv::testing::ScopedTempDir;
using mssv::testing::WriteFile;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result Invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = Run(args, out, err);
  return {code, out.str(), err.str()};
}

size_t CountFiles(const fs::path& dir, const std::string& ext) {
  size_t n = 0;
  if (!fs::exists(dir)) return 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) n += e.path().extension() == ext;
  return n;
}

// Small corpus plus a config that keeps the model and training short.
class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const Result r = Invoke({"--seed", "3", "synthdata", "--out", (dir_ / "data").string(),
                             "--speakers", "3", "--utts", "4", "--heldout", "2", "--seconds",
                             "1.5"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    WriteFile(dir_ / "small.json",
              R"({"conv1_channels": 4, "conv2_channels": 4, "frame_dim": 8,
                  "embedding_dim": 8, "epochs": 2, "val_interval": 1})");
  }

  std::string Data(const std::string& name) const { return (dir_ / "data" / name).string(); }

  ScopedTempDir dir_;
};

TEST(SynthDataCliTest, DefaultCorpusCountsAndDeterminism) {
  ScopedTempDir dir;
  for (const char* sub : {"a", "b"}) {
    const Result r = Invoke({"--seed", "5", "synthdata", "--out", (dir / sub).string(),
                             "--seconds", "0.2"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
  }
  EXPECT_EQ(CountFiles(dir / "a", ".wav"), 120u);
  const Manifest m = LoadManifest(dir / "a/train.lst");
  EXPECT_EQ(m.entries.size(), 60u);
  EXPECT_EQ(m.SpeakerIds().size(), 20u);
  const TrialList t = LoadTrialList(dir / "a/trials.txt");
  size_t targets = 0;
  for (const auto& tr : t.trials) targets += tr.is_target;
  EXPECT_EQ(targets, 60u);
  EXPECT_EQ(t.trials.size(), 120u);
  for (const auto& e : fs::directory_iterator(dir / "a/wav")) {
    EXPECT_EQ(ReadFile(e.path()), ReadFile(dir / "b/wav" / e.path().filename()));
  }
  EXPECT_EQ(ReadFile(dir / "a/trials.txt"), ReadFile(dir / "b/trials.txt"));
}

TEST_F(CliTest, FeaturizeWritesOneFilePerStreamAndUtterance) {
  WriteFile(dir_ / "two.lst", "s0\tdata/wav/spk000_u00.wav\ns1\tdata/wav/spk001_u00.wav\n");
  const std::string out = (dir_ / "feats").string();
  Result r = Invoke({"featurize", "--manifest", (dir_ / "two.lst").string(), "--out", out});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(CountFiles(out, ".mfbe"), 6u);
  const RowMatrix f = ReadFeatureDump(fs::path(out) / "data_wav_spk000_u00.LF.mfbe");
  EXPECT_EQ(f.cols(), 40);
  EXPECT_EQ(f.rows(), 148);

  r = Invoke({"featurize", "--manifest", (dir_ / "two.lst").string(), "--out", out});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("--force"), std::string::npos);
  EXPECT_NE(r.err.find("data_wav_spk001_u00.HF.mfbe"), std::string::npos) << r.err;
  r = Invoke({"--force", "featurize", "--manifest", (dir_ / "two.lst").string(), "--out", out});
  EXPECT_EQ(r.code, kExitOk) << r.err;
}

TEST_F(CliTest, InvalidBandFailsBeforeWriting) {
  WriteFile(dir_ / "bad.json",
            R"({"streams": [{"name": "FB", "f_low_hz": 20, "f_high_hz": 8000},
                            {"name": "X", "f_low_hz": 3000, "f_high_hz": 1000}]})");
  const std::string out = (dir_ / "feats").string();
  const Result r = Invoke({"--config", (dir_ / "bad.json").string(), "featurize", "--manifest",
                           Data("train.lst"), "--out", out});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("DegenerateBand"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(CliTest, TrainIsDeterministicAndWritesCurve) {
  std::string curves[2], ckpts[2];
  for (int i = 0; i < 2; ++i) {
    const fs::path run = dir_ / ("run" + std::to_string(i));
    const Result r = Invoke({"--profile", "desk", "--seed", "7", "--config",
                             (dir_ / "small.json").string(), "train", "--manifest",
                             Data("train.lst"), "--out", (run / "m.ckpt").string(),
                             "--val-trials", Data("trials.txt")});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_NE(r.out.find("val_eer"), std::string::npos);
    curves[i] = ReadFile(run / "curve.csv");
    ckpts[i] = ReadFile(run / "m.ckpt");
  }
  EXPECT_EQ(curves[0], curves[1]);
  EXPECT_EQ(ckpts[0], ckpts[1]);
  EXPECT_EQ(curves[0].substr(0, 19), "epoch,loss,val_eer\n");
  EXPECT_EQ(std::count(curves[0].begin(), curves[0].end(), '\n'), 3);
}

TEST(TrainCliTest, PaperProfileEcho) {
  const Result r = Invoke({"--profile", "paper", "train", "--dry-run"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("epochs=100\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("lr_initial=0.001\n"), std::string::npos);
  EXPECT_NE(r.out.find("lr_decay=0.95 every 10 epochs"), std::string::npos);
  EXPECT_NE(r.out.find("batch=400"), std::string::npos);
  const Result desk = Invoke({"train", "--dry-run"});
  EXPECT_NE(desk.out.find("batch=32"), std::string::npos);
}

TEST(TrainCliTest, MissingManifestIsUsageError) {
  ScopedTempDir dir;
  Result r = Invoke({"train", "--manifest", (dir / "nope.lst").string(), "--out",
                     (dir / "m.ckpt").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("nope.lst"), std::string::npos);
  EXPECT_NE(r.err.find("--help"), std::string::npos);
  r = Invoke({"train", "--out", (dir / "m.ckpt").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("--manifest"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "m.ckpt"));
}

TEST(UsageTest, ExitCodes) {
  EXPECT_EQ(Invoke({}).code, kExitUsage);
  EXPECT_EQ(Invoke({"bogus"}).code, kExitUsage);
  EXPECT_EQ(Invoke({"--help"}).code, kExitOk);
  EXPECT_EQ(Invoke({"--profile", "huge", "train", "--dry-run"}).code, kExitUsage);
  EXPECT_EQ(Invoke({"--seed", "-3", "train", "--dry-run"}).code, kExitUsage);
  ScopedTempDir dir;
  WriteFile(dir / "c.json", "{not json");
  EXPECT_EQ(Invoke({"--config", (dir / "c.json").string(), "train", "--dry-run"}).code, kExitUsage);
  WriteFile(dir / "c.json", R"({"epochz": 3})");
  const Result r = Invoke({"--config", (dir / "c.json").string(), "train", "--dry-run"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("epochz"), std::string::npos);
  EXPECT_EQ(Invoke({"--config", (dir / "missing.json").string(), "train", "--dry-run"}).code,
            kExitUsage);
}

TEST(ConfigTest, FileKeysAndFlagOverrides) {
  RunConfig cfg = ParseRunConfig(R"({"epochs": 7, "seed": 9, "lr_decay": 0.5,
      "streams": [{"name": "LF", "f_low_hz": 20, "f_high_hz": 2000}]})",
                                 ProfileDefaults("desk"));
  EXPECT_EQ(cfg.train.epochs, 7);
  EXPECT_EQ(cfg.train.seed, 9u);
  EXPECT_EQ(cfg.train.schedule.decay, 0.5);
  ASSERT_EQ(cfg.train.streams.size(), 1u);
  EXPECT_EQ(cfg.train.streams[0].name, "LF");
  EXPECT_EQ(cfg.eval.eval_seconds, 4.0);
  EXPECT_EQ(cfg.eval.dcf.p_target, 0.05);
  EXPECT_THROW(ParseRunConfig(R"({"epochs": "many"})", ProfileDefaults("desk")), Error);

  ScopedTempDir dir;
  WriteFile(dir / "c.json", R"({"seed": 9, "epochs": 4})");
  const Result r = Invoke({"--config", (dir / "c.json").string(), "--seed", "11", "train",
                           "--dry-run"});
  EXPECT_NE(r.out.find("seed=11\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("epochs=4\n"), std::string::npos);
}

TEST_F(CliTest, EvalReportsAndComparesSystems) {
  WriteFile(dir_ / "fb.json",
            R"({"conv1_channels": 4, "conv2_channels": 4, "frame_dim": 8, "embedding_dim": 8,
                "epochs": 1, "streams": [{"name": "FB", "f_low_hz": 20, "f_high_hz": 8000}]})");
  const std::string ms = (dir_ / "ms.ckpt").string(), fb = (dir_ / "fb.ckpt").string();
  ASSERT_EQ(Invoke({"--config", (dir_ / "small.json").string(), "train", "--manifest",
                    Data("train.lst"), "--out", ms})
                .code,
            kExitOk);
  ASSERT_EQ(Invoke({"--config", (dir_ / "fb.json").string(), "train", "--manifest",
                    Data("train.lst"), "--out", fb})
                .code,
            kExitOk);

  const std::string prefix = (dir_ / "rep/one").string();
  Result r = Invoke({"eval", "--checkpoint", ms, "--trials", Data("trials.txt"), "--out", prefix});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("ms\tminDCF(p_target=0.05) "), std::string::npos) << r.out;
  EXPECT_EQ(ReadFile(prefix + ".metrics.txt"), r.out);
  const auto eer_of = [](const std::string& line) { return line.substr(line.find("EER")); };
  const std::string base = r.out;

  r = Invoke({"eval", "--checkpoint", ms, "--trials", Data("trials.txt"), "--out", prefix,
              "--p-target", "0.01"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("minDCF(p_target=0.01)"), std::string::npos);
  EXPECT_EQ(eer_of(r.out), eer_of(base));

  const std::string both = (dir_ / "rep/both").string();
  r = Invoke({"eval", "--checkpoint", fb, "--checkpoint", ms, "--trials", Data("trials.txt"),
              "--out", both});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const std::string svg = ReadFile(both + ".det.svg");
  EXPECT_EQ(mssv::testing::CheckSvg(svg), "");
  EXPECT_EQ(mssv::testing::CountPolylines(svg), 2);
  EXPECT_TRUE(fs::exists(both + ".fb.det.csv"));

  const std::string replot = (dir_ / "replot.svg").string();
  r = Invoke({"det-plot", "--csv", both + ".fb.det.csv", "--csv", both + ".ms.det.csv", "--out",
              replot});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(mssv::testing::CheckSvg(ReadFile(replot)), "");
  EXPECT_EQ(mssv::testing::CountPolylines(ReadFile(replot)), 2);

  r = Invoke({"eval", "--checkpoint", (dir_ / "none.ckpt").string(), "--trials",
              Data("trials.txt"), "--out", prefix});
  EXPECT_EQ(r.code, kExitUsage);
  WriteFile(dir_ / "junk.ckpt", "JUNKJUNKJUNK");
  r = Invoke({"eval", "--checkpoint", (dir_ / "junk.ckpt").string(), "--trials",
              Data("trials.txt"), "--out", prefix});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("BadMagic"), std::string::npos);
}

}  // namespace
}  // namespace mssv::cli
