// Copyright (c) 2026 The marblevad Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "marblevad/pipeline.hpp"
#include "test_util.hpp"

namespace marblevad {
namespace {

using marblevad::testing::TempDir;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

RunConfig tiny_run(const fs::path& prepared) {
  RunConfig c;
  c.model.n_blocks = 1;
  c.model.n_subblocks = 1;
  c.model.channels = 8;
  c.model.input_features = 16;
  c.model.block_kernels = {5};
  c.model.prologue = {5, 16, 1};
  c.model.epilogue1 = {5, 16, 2};
  c.model.epilogue2 = {1, 16, 1};
  c.train.epochs = 2;
  c.train.batch_size = 8;
  c.data.prepared_dir = prepared.string();
  c.infer.overlap = 0.5;
  return c;
}

TEST(Synth, WritesClipsManifestAndRecordings) {
  TempDir d("synth");
  std::ostringstream log;
  SynthOptions o;
  o.out_dir = d.path();
  o.n_speech = 2;
  o.n_noise = 2;
  o.n_recordings = 1;
  o.recording_s = 2.0;
  const auto s = cmd_synth(o, log);
  EXPECT_EQ(s.entries.size(), 4u);
  EXPECT_EQ(read_manifest(s.manifest), s.entries);
  ASSERT_EQ(s.recordings.size(), 1u);
  EXPECT_TRUE(fs::exists(recording_labels_path(s.recordings[0])));
  EXPECT_NE(log.str().find("manifest"), std::string::npos);
  const auto recs = load_recordings(d / "recordings");
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].audio.size(), 32000u);
  EXPECT_FALSE(recs[0].labels.empty());
}

TEST(Synth, EmptyCorpusAndDeterminism) {
  TempDir a("synth_a"), b("synth_b");
  std::ostringstream log;
  SynthOptions o;
  o.n_speech = 0;
  o.n_noise = 0;
  o.out_dir = a.path();
  EXPECT_TRUE(cmd_synth(o, log).entries.empty());

  o.n_speech = 1;
  o.n_noise = 1;
  o.seed = 4;
  const auto s1 = cmd_synth(o, log);
  o.out_dir = b.path();
  const auto s2 = cmd_synth(o, log);
  for (std::size_t i = 0; i < s1.entries.size(); ++i) {
    EXPECT_EQ(slurp(s1.entries[i].audio_path), slurp(s2.entries[i].audio_path));
  }
}

class Prepared : public ::testing::Test {
 protected:
  void SetUp() override {
    std::ostringstream log;
    SynthOptions o;
    o.out_dir = dir_.path();
    o.n_speech = 10;
    o.n_noise = 10;
    o.seed = 1;
    o.n_recordings = 1;
    o.recording_s = 3.0;
    synth_ = cmd_synth(o, log);
    cfg_ = tiny_run(dir_ / "prepared");
    prep_ = cmd_prepare(synth_.manifest, cfg_, dir_ / "prepared", 1, log);
  }
  TempDir dir_{"pipeline"};
  SynthSummary synth_;
  RunConfig cfg_;
  PrepareSummary prep_;
};

TEST_F(Prepared, EightOneOneByFileAndBalanced) {
  const auto& tr = prep_.splits.at("train");
  const auto& va = prep_.splits.at("val");
  const auto& te = prep_.splits.at("test");
  EXPECT_EQ(tr.files_speech, 8u);
  EXPECT_EQ(tr.files_non_speech, 8u);
  EXPECT_EQ(va.files_speech, 1u);
  EXPECT_EQ(te.files_non_speech, 1u);
  // One central crop per 1 s speech clip; three strided cuts per noise clip.
  EXPECT_EQ(tr.segments_speech, 8u);
  EXPECT_EQ(tr.segments_non_speech, 8u);
  EXPECT_EQ(te.segments_speech, 3u);
  EXPECT_EQ(te.segments_non_speech, 3u);
  EXPECT_EQ(read_manifest(prep_.manifests.at("train")).size(), 16u);
}

TEST_F(Prepared, RerunIsByteIdentical) {
  std::ostringstream log;
  const auto again = cmd_prepare(synth_.manifest, cfg_, dir_ / "again", 1, log);
  for (const char* split : {"train", "val", "test"}) {
    EXPECT_EQ(slurp(prep_.manifests.at(split)), slurp(again.manifests.at(split))) << split;
  }
}

TEST_F(Prepared, EmptyManifestIsAnError) {
  const auto empty = dir_ / "empty.jsonl";
  write_manifest(empty, {});
  std::ostringstream log;
  EXPECT_THROW(cmd_prepare(empty, cfg_, dir_ / "x", 1, log), ManifestError);
}

TEST_F(Prepared, TrainInferEvalChain) {
  std::ostringstream log;
  const auto ckpt = dir_ / "run" / "model.ckpt";
  const auto ts = cmd_train(cfg_, ckpt, 3, log);
  EXPECT_TRUE(fs::exists(ts.checkpoint));
  EXPECT_TRUE(fs::exists(ts.final_checkpoint));
  // Header plus one row per step and per epoch.
  const std::size_t steps = 2 * 2;  // 16 segments / batch 8, 2 epochs
  std::ifstream csv(ts.log_csv);
  std::size_t rows = 0;
  for (std::string line; std::getline(csv, line);) rows += !line.empty();
  EXPECT_EQ(rows, 1 + steps + 2);
  EXPECT_EQ(ts.val.total(), 2u);  // one crop vs three cuts, rebalanced

  const auto wav = synth_.recordings.at(0);
  const auto is = cmd_infer(ckpt, wav, cfg_.infer, dir_ / "out" / "rec.csv", log);
  EXPECT_EQ(is.timeline.n_frames, 300u);
  EXPECT_EQ(is.intervals_csv, dir_ / "out" / "rec.intervals.csv");
  EXPECT_TRUE(fs::exists(is.intervals_csv));

  const auto es = cmd_eval(is.frames_csv, recording_labels_path(wav), 0.315,
                           dir_ / "out" / "rec.report", log);
  EXPECT_TRUE(fs::exists(es.report_txt));
  EXPECT_TRUE(fs::exists(es.report_csv));
  EXPECT_TRUE(fs::exists(es.roc_csv));
  // Report files sit beside the frame CSV without overwriting it.
  EXPECT_EQ(es.report_csv, dir_ / "out" / "rec.report.csv");
  EXPECT_EQ(es.roc_csv, dir_ / "out" / "rec.report.roc.csv");
  std::ifstream frames(is.frames_csv);
  std::string head;
  std::getline(frames, head);
  EXPECT_EQ(head, "frame_start_s,score,decision");
  EXPECT_GE(es.report.auroc_all, 0.0);
  EXPECT_LE(es.report.auroc_all, 1.0);
}

TEST_F(Prepared, EvalOfOracleAndConstantScores) {
  const auto wav = synth_.recordings.at(0);
  std::ifstream lab(recording_labels_path(wav));
  const auto labels = read_labels_csv(lab);
  auto tl = make_timeline(load_wav(wav).size());
  const auto aligned = align_labels(labels, tl);
  for (std::size_t f = 0; f < tl.n_frames; ++f) {
    const bool sp = aligned.conditions[f] && is_speech(*aligned.conditions[f]);
    tl.scores[f] = sp ? 1.0 : 0.0;
    tl.decisions[f] = sp;
  }
  std::ostringstream log;
  const auto perfect = evaluate_timeline(tl, labels, 0.315, dir_ / "p.txt", log);
  EXPECT_EQ(perfect.report.auroc_all, 1.0);
  EXPECT_EQ(perfect.report.tpr_all, 1.0);

  for (auto& s : tl.scores) s = 0.5;
  const auto flat = evaluate_timeline(tl, labels, 0.315, dir_ / "c.txt", log);
  EXPECT_EQ(flat.report.auroc_all, 0.5);
  EXPECT_EQ(flat.report_csv, dir_ / "c.csv");
  EXPECT_EQ(flat.roc_csv, dir_ / "c.roc.csv");
}

TEST(Describe, PrintsCounts) {
  std::ostringstream out;
  describe(MarbleNetConfig{}, out);
  EXPECT_NE(out.str().find("89154"), std::string::npos);
}

TEST(MeanCi, NormalApproximation) {
  const auto m = mean_ci({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(m.mean, 2.0);
  EXPECT_NEAR(m.half_width, 1.96 / std::sqrt(3.0), 1e-12);
  EXPECT_EQ(mean_ci({4.0}).half_width, 0.0);
}

}  // namespace
}  // namespace marblevad
