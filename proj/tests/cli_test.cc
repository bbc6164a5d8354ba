// Copyright 2026 The mosanet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace mosanet {
namespace {

using testing::quote;
using testing::TempDir;

constexpr const char* kSmallConfig =
    "[encoder]\ntype = stub\ndim = 8\n"
    "[model]\ncnn_channels = 2,3\nconvs_per_block = 2\nlstm_hidden = 6\ndense_units = 5\nattention_dim = 4\n"
    "[train]\nlearning_rate = 1e-3\nmax_epochs = 2\nseed = 3\nvalid_fraction = 0.25\n";

class CommandsTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { spdlog::set_level(spdlog::level::warn); }

  CommandsTest() {
    SyntheticOptions so;
    so.count = 8;
    so.min_seconds = 0.3;
    so.max_seconds = 0.5;
    manifest_ = write_synthetic_corpus(dir_ / "corpus", so);
    manifest_path_ = dir_ / "corpus" / "manifest.csv";
    write_file_atomic(dir_ / "small.ini", kSmallConfig);
    cfg_ = parse_config(kSmallConfig);
  }

  CommandArgs args(const std::string& out) const {
    CommandArgs a;
    a.out = dir_ / out;
    a.manifest = manifest_path_;
    return a;
  }

  TempDir dir_;
  Manifest manifest_;
  std::filesystem::path manifest_path_;
  RunConfig cfg_;
};

TEST_F(CommandsTest, PipelineWritesArtifactsAndResolvedConfig) {
  const auto prep = cmd_prepare(cfg_, args("prep"));
  EXPECT_EQ(prep.at("train_utterances"), 6);
  EXPECT_EQ(prep.at("valid_utterances"), 2);

  const auto summary = cmd_train(cfg_, args("train"));
  EXPECT_EQ(summary.at("epochs_run"), 2);
  EXPECT_TRUE(std::filesystem::exists(dir_ / "train" / kBestCheckpointFile));
  EXPECT_TRUE(std::filesystem::exists(dir_ / "train" / kReportFile));

  CommandArgs pa = args("predict");
  pa.checkpoint = dir_ / "train" / kBestCheckpointFile;
  const auto rows = cmd_predict(cfg_, pa);
  ASSERT_EQ(rows.size(), manifest_.size());
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i].utterance_id, manifest_.records[i].utterance_id);

  CommandArgs ea = args("eval");
  ea.predictions = dir_ / "predict" / "predictions.csv";
  const EvalReport rep = cmd_evaluate(cfg_, ea);
  EXPECT_EQ(rep.quality.n_utterances, manifest_.size());
  EXPECT_TRUE(std::filesystem::exists(dir_ / "eval" / "eval_report.json"));
  EXPECT_TRUE(std::filesystem::exists(dir_ / "eval" / "eval_report.txt"));

  for (const char* d : {"prep", "train", "predict", "eval"}) {
    const auto path = dir_ / d / kResolvedConfigFile;
    ASSERT_TRUE(std::filesystem::exists(path)) << d;
    // The resolved file alone reproduces the run configuration.
    const RunConfig back = load_config(path);
    EXPECT_EQ(back.feature_config(), cfg_.feature_config()) << d;
    EXPECT_EQ(back.topology().hash(), cfg_.topology().hash()) << d;
  }
}

TEST_F(CommandsTest, LabelsAsPredictionsScorePerfectly) {
  std::vector<PredictionRow> rows;
  for (const auto& r : manifest_.records) rows.push_back({r.utterance_id, r.quality, r.intelligibility});
  save_predictions(rows, dir_ / "labels.csv");
  CommandArgs a = args("eval");
  a.predictions = dir_ / "labels.csv";
  const EvalReport rep = cmd_evaluate(cfg_, a);
  for (std::size_t t = 0; t < 2; ++t) {
    EXPECT_DOUBLE_EQ(rep.task(t).utt_lcc, 1.0);
    EXPECT_DOUBLE_EQ(rep.task(t).utt_srcc, 1.0);
    EXPECT_EQ(rep.task(t).utt_mse, 0.0);
  }
}

TEST_F(CommandsTest, ZeroEpochTrainSavesInitialWeights) {
  RunConfig c = cfg_;
  c.train.max_epochs = 0;
  c.train.precision = Precision::kFloat64;
  cmd_train(c, args("zero"));
  const auto ck = load_checkpoint<double>(dir_ / "zero" / kBestCheckpointFile);
  const auto init = init_weights<double>(c.topology(), c.train.seed);
  EXPECT_EQ(ck.weights.shared.weight, init.shared.weight);
  EXPECT_EQ(ck.weights.sinc_band, init.sinc_band);
  EXPECT_EQ(read_file(dir_ / "zero" / kReportFile), "");
}

TEST_F(CommandsTest, SeedOverrideChangesInitialization) {
  RunConfig c = cfg_;
  c.train.max_epochs = 0;
  CommandArgs a = args("s1"), b = args("s2");
  a.seed = 1;
  b.seed = 2;
  cmd_train(c, a);
  cmd_train(c, b);
  EXPECT_NE(read_file(dir_ / "s1" / kBestCheckpointFile), read_file(dir_ / "s2" / kBestCheckpointFile));
}

TEST_F(CommandsTest, CheckpointFromOtherFeaturesIsRefused) {
  RunConfig c = cfg_;
  c.train.max_epochs = 0;
  cmd_train(c, args("train"));
  RunConfig other = parse_config(std::string(kSmallConfig) + "[stft]\nhop_ms = 8\n");
  CommandArgs pa = args("predict");
  pa.checkpoint = dir_ / "train" / kBestCheckpointFile;
  EXPECT_THROW(cmd_predict(other, pa), ConfigError);
  EXPECT_FALSE(std::filesystem::exists(dir_ / "predict" / "predictions.csv"));
}

TEST_F(CommandsTest, MissingInputs) {
  CommandArgs pa = args("predict");
  EXPECT_THROW(cmd_predict(cfg_, pa), ConfigError);
  pa.checkpoint = dir_ / "nope.ckpt";
  EXPECT_THROW(cmd_predict(cfg_, pa), IoError);
  CommandArgs ea = args("eval");
  EXPECT_THROW(cmd_evaluate(cfg_, ea), ConfigError);
  CommandArgs ta = args("train");
  ta.manifest.clear();
  EXPECT_THROW(cmd_train(cfg_, ta), ConfigError);
}

// --- the installed binary ----------------------------------------------------------

class BinaryTest : public CommandsTest {
 protected:
  int run(const std::string& tail) const {
    return testing::run_shell(quote(testing::cli_path()) + " --log-level off " + tail + " >/dev/null 2>&1");
  }
};

TEST_F(BinaryTest, SuccessAndShowConfig) {
  EXPECT_EQ(run("show-config"), 0);
  EXPECT_EQ(run("show-config --config " + quote(dir_ / "small.ini")), 0);
  EXPECT_EQ(run("prepare --config " + quote(dir_ / "small.ini") + " --manifest " + quote(manifest_path_) +
                " --out " + quote(dir_ / "p")),
            0);
  EXPECT_TRUE(std::filesystem::exists(dir_ / "p" / "prepare_report.json"));
}

TEST_F(BinaryTest, ConfigErrorsExitWithTwo) {
  write_file_atomic(dir_ / "bad.ini", "[train]\nlearning_rat = 1\n");
  EXPECT_EQ(run("show-config --config " + quote(dir_ / "bad.ini")), 2);
  EXPECT_EQ(run("show-config --config " + quote(dir_ / "missing.ini")), 2);
  EXPECT_EQ(run("train --no-such-flag"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("predict --config " + quote(dir_ / "small.ini") + " --manifest " + quote(manifest_path_)), 2);
}

TEST_F(BinaryTest, DataErrorsExitWithThree) {
  EXPECT_EQ(run("prepare --config " + quote(dir_ / "small.ini") + " --manifest " + quote(dir_ / "none.csv") +
                " --out " + quote(dir_ / "p")),
            3);
  write_file_atomic(dir_ / "broken.csv", std::string(kManifestHeader) + "\na,a.wav,9,0.5,x,,\n");
  EXPECT_EQ(run("prepare --config " + quote(dir_ / "small.ini") + " --manifest " + quote(dir_ / "broken.csv") +
                " --out " + quote(dir_ / "p")),
            3);
}

TEST_F(BinaryTest, NumericFailureExitsWithFour) {
  // A step this large overflows the weights within the first epoch.
  std::string text = kSmallConfig;
  text.replace(text.find("learning_rate = 1e-3"), 20, "learning_rate = 1e30");
  write_file_atomic(dir_ / "huge.ini", text);
  EXPECT_EQ(run("train --config " + quote(dir_ / "huge.ini") + " --manifest " + quote(manifest_path_) + " --out " +
                quote(dir_ / "t")),
            4);
}

}  // namespace
}  // namespace mosanet
