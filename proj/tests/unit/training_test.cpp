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


#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "marblevad/synth.hpp"
#include "marblevad/training.hpp"

namespace marblevad {
namespace {

TEST(Schedule, ReferenceValues) {
  TrainConfig c;
  EXPECT_DOUBLE_EQ(lr_at(0, 1000, c), 0.0);
  EXPECT_DOUBLE_EQ(lr_at(50, 1000, c), 0.01);
  EXPECT_DOUBLE_EQ(lr_at(500, 1000, c), 0.01);
  EXPECT_NEAR(lr_at(750, 1000, c), 0.00325, 1e-15);
  EXPECT_DOUBLE_EQ(lr_at(1000, 1000, c), 0.001);
}

TEST(Schedule, WarmupIsLinear) {
  TrainConfig c;
  EXPECT_NEAR(lr_at(25, 1000, c), 0.005, 1e-15);
}

TEST(Schedule, ContinuousAtBoundaries) {
  TrainConfig c;
  const std::size_t total = 100000;
  EXPECT_NEAR(lr_at(4999, total, c), 0.01, 1e-5);
  EXPECT_NEAR(lr_at(49999, total, c), 0.01, 1e-12);
  EXPECT_NEAR(lr_at(50001, total, c), 0.01, 1e-5);
  EXPECT_NEAR(lr_at(99999, total, c), 0.001, 1e-7);
}

TEST(Schedule, ValidateRejectsBadRatios) {
  TrainConfig c;
  c.warmup_ratio = 0.6;
  c.hold_ratio = 0.6;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.min_lr = 0.1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

MarbleNetConfig small_model() {
  MarbleNetConfig c;
  c.n_blocks = 1;
  c.n_subblocks = 1;
  c.channels = 8;
  c.input_features = 16;
  c.block_kernels = {5};
  c.prologue = {5, 16, 1};
  c.epilogue1 = {5, 16, 2};
  c.epilogue2 = {1, 16, 1};
  return c;
}

std::vector<Segment> clips(std::size_t per_class, std::uint64_t seed) {
  std::vector<Segment> out;
  for (std::size_t i = 0; i < per_class; ++i) {
    Segment s;
    s.waveform = synth_speech_clip(derive_seed(seed, 1, i), 0.63);
    s.label = Label::kSpeech;
    out.push_back(s);
    s.waveform = synth_noise_clip(derive_seed(seed, 2, i), 0.63);
    s.label = Label::kNonSpeech;
    out.push_back(s);
  }
  return out;
}

TrainConfig quick(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 4;
  c.seed = 3;
  return c;
}

TEST(Train, LoggedLrFollowsSchedule) {
  Model m(small_model(), 1);
  const auto tr = clips(5, 1), va = clips(1, 2);
  const auto cfg = quick(3);
  const auto res = train(m, tr, va, cfg);
  const std::size_t total = 3 * 3;  // ceil(10 / 4) steps per epoch
  ASSERT_EQ(res.log.steps.size(), total);
  ASSERT_EQ(res.log.epochs.size(), 3u);
  for (std::size_t i = 0; i < total; ++i) {
    EXPECT_EQ(res.log.steps[i].step, i);
    EXPECT_DOUBLE_EQ(res.log.steps[i].lr, lr_at(i, total, cfg));
  }
  std::ostringstream csv;
  write_csv(csv, res.log);
  std::size_t rows = 0;
  for (char ch : csv.str()) rows += ch == '\n';
  EXPECT_EQ(rows, 1 + total + 3);
}

TEST(Train, SameSeedSameTrajectory) {
  const auto tr = clips(4, 5), va = clips(1, 6);
  auto run = [&] {
    Model m(small_model(), 7);
    std::vector<double> losses;
    for (const auto& s : train(m, tr, va, quick(2)).log.steps) losses.push_back(s.loss);
    return losses;
  };
  EXPECT_EQ(run(), run());
}

TEST(Train, DescendsOnTwoSamples) {
  MarbleNetConfig mc = small_model();
  mc.dropout_p = 0.0;
  Model m(mc, 2);
  const auto tr = clips(1, 8);
  TrainConfig cfg = quick(5);
  cfg.batch_size = 2;
  cfg.augment = AugmentConfig::disabled();
  cfg.max_lr = cfg.min_lr = 1e-3;
  cfg.warmup_ratio = 0.0;
  const auto res = train(m, tr, tr, cfg);
  ASSERT_EQ(res.log.steps.size(), 5u);
  for (std::size_t i = 1; i < 5; ++i) {
    EXPECT_LE(res.log.steps[i].loss, res.log.steps[i - 1].loss + 1e-7) << "step " << i;
  }
}

TEST(Train, ValidationDoesNotMutateModel) {
  Model m(small_model(), 3);
  const auto tr = clips(3, 9);
  train(m, tr, tr, quick(1));
  std::vector<std::vector<float>> before;
  for (const auto& p : m.parameters()) before.push_back(p.tensor.vec());
  std::vector<std::vector<float>> stats;
  for (const auto& bn : m.batchnorms()) stats.push_back(bn.running_mean);
  const FeatureExtractor fx(FeatureKind::kMfcc, {}, 16, 16);
  evaluate_segments(m, tr, fx);
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(m.parameters()[i].tensor.vec(), before[i]);
  }
  for (std::size_t i = 0; i < stats.size(); ++i) EXPECT_EQ(m.batchnorms()[i].running_mean, stats[i]);
}

TEST(Train, BestSnapshotKept) {
  Model m(small_model(), 4);
  const auto tr = clips(3, 10), va = clips(2, 11);
  const auto res = train(m, tr, va, quick(3));
  ASSERT_TRUE(res.best.has_value());
  ASSERT_GE(res.best_epoch, 0);
  double lowest = res.log.epochs[0].val_loss;
  for (const auto& e : res.log.epochs) lowest = std::min(lowest, e.val_loss);
  EXPECT_DOUBLE_EQ(res.best_val_loss, lowest);
}

TEST(Train, NeedsBothClasses) {
  Model m(small_model(), 5);
  auto tr = clips(2, 12);
  std::erase_if(tr, [](const Segment& s) { return s.label == Label::kSpeech; });
  EXPECT_THROW(train(m, tr, tr, quick(1)), std::invalid_argument);
  EXPECT_THROW(train(m, {}, tr, quick(1)), std::invalid_argument);
}

TEST(Train, NonFiniteLossAbortsWithContext) {
  Model m(small_model(), 6);
  const auto tr = clips(2, 13);
  TrainConfig cfg = quick(5);
  cfg.max_lr = cfg.min_lr = 1e30;
  cfg.warmup_ratio = 0.0;
  try {
    train(m, tr, tr, cfg);
    FAIL() << "expected divergence";
  } catch (const TrainError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(EvaluateSegments, ConfusionPartitionsSegments) {
  Model m(small_model(), 7);
  const auto segs = clips(6, 14);
  const FeatureExtractor fx(FeatureKind::kMfcc, {}, 16, 16);
  const auto ev = evaluate_segments(m, segs, fx);
  EXPECT_EQ(ev.total(), segs.size());
  EXPECT_DOUBLE_EQ(ev.accuracy,
                   static_cast<double>(ev.confusion[0][0] + ev.confusion[1][1]) / segs.size());
  EXPECT_EQ(ev.confusion[1][0] + ev.confusion[1][1], 6u);
  EXPECT_THROW(evaluate_segments(m, {}, fx), std::invalid_argument);
}

}  // namespace
}  // namespace marblevad
