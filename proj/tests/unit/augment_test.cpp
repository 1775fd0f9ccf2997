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
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "marblevad/augment.hpp"

namespace marblevad {
namespace {

Waveform ramp(std::size_t n) {
  Waveform w;
  for (std::size_t i = 0; i < n; ++i) w.samples.push_back(0.1f + static_cast<float>(i) / (2 * n));
  return w;
}

// Marker value outside anything the fill or the masks produce.
FeatureMatrix marked(std::size_t f, std::size_t t) {
  FeatureMatrix fm;
  fm.n_features = f;
  fm.n_frames = t;
  fm.values.assign(f * t, 7.5);
  return fm;
}

TEST(TimeShift, FiveMsIsEightySamples) {
  Rng rng = make_rng(1);
  const Waveform w = ramp(1000);
  const Waveform s = time_shift(w, {5.0, 5.0}, rng);
  ASSERT_EQ(s.size(), w.size());
  for (std::size_t i = 0; i < 80; ++i) EXPECT_EQ(s.samples[i], 0.0f);
  for (std::size_t i = 80; i < w.size(); ++i) EXPECT_EQ(s.samples[i], w.samples[i - 80]);
}

TEST(TimeShift, ZeroRangeIsIdentity) {
  Rng rng = make_rng(1);
  const Waveform w = ramp(500);
  EXPECT_EQ(time_shift(w, {0.0, 0.0}, rng).samples, w.samples);
}

TEST(TimeShift, NegativeAdvances) {
  Rng rng = make_rng(1);
  const Waveform w = ramp(500);
  const Waveform s = time_shift(w, {-5.0, -5.0}, rng);
  for (std::size_t i = 0; i + 80 < w.size(); ++i) EXPECT_EQ(s.samples[i], w.samples[i + 80]);
  for (std::size_t i = w.size() - 80; i < w.size(); ++i) EXPECT_EQ(s.samples[i], 0.0f);
}

TEST(WhiteNoise, LevelToStd) {
  EXPECT_NEAR(noise_std_for_db(-46.0), 0.005012, 1e-6);
  EXPECT_NEAR(noise_std_for_db(-90.0), 3.162e-5, 1e-8);
}

TEST(WhiteNoise, SampleStdWithinTwoPercent) {
  Rng rng = make_rng(2);
  Waveform w;
  w.samples.assign(1000000, 0.0f);
  const auto out = add_white_noise(w, {-46.0, -46.0}, rng);
  double ss = 0.0;
  for (float v : out.samples) ss += static_cast<double>(v) * v;
  const double sd = std::sqrt(ss / out.size());
  EXPECT_NEAR(sd / noise_std_for_db(-46.0), 1.0, 0.02);
}

TEST(Gate, EightyPercentFires) {
  AugmentConfig cfg;
  Rng rng = make_rng(3);
  int fired = 0;
  for (int i = 0; i < 10000; ++i) {
    Waveform w = ramp(200);
    fired += augment_waveform(w, cfg, rng);
  }
  EXPECT_NEAR(fired / 10000.0, 0.8, 0.02);
}

TEST(SpecAugment, ZeroWidthIsIdentity) {
  AugmentConfig cfg;
  cfg.max_time_mask = 0;
  cfg.max_freq_mask = 0;
  Rng rng = make_rng(4);
  const auto fm = marked(64, 64);
  EXPECT_EQ(spec_augment(fm, cfg, rng).values, fm.values);
}

TEST(SpecAugment, MaskBoundsAndFill) {
  AugmentConfig cfg;
  cfg.mask_fill = -1.25;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng = make_rng(seed);
    const auto out = spec_augment(marked(64, 64), cfg, rng);
    std::size_t frames = 0, bands = 0;
    for (std::size_t t = 0; t < 64; ++t) {
      bool all = true;
      for (std::size_t f = 0; f < 64; ++f) all = all && out.at(f, t) == cfg.mask_fill;
      frames += all;
    }
    for (std::size_t f = 0; f < 64; ++f) {
      bool all = true;
      for (std::size_t t = 0; t < 64; ++t) all = all && out.at(f, t) == cfg.mask_fill;
      bands += all;
    }
    // A fully masked row would count every column, so only check when not.
    if (bands < 64) EXPECT_LE(frames, 50u);
    if (frames < 64) EXPECT_LE(bands, 30u);
    for (double v : out.values) EXPECT_TRUE(v == 7.5 || v == cfg.mask_fill);
  }
}

TEST(SpecAugment, WidthClampedToExtent) {
  AugmentConfig cfg;
  cfg.max_time_mask = 100;
  Rng rng = make_rng(5);
  const auto out = spec_augment(marked(4, 3), cfg, rng);
  EXPECT_EQ(out.values.size(), 12u);
}

TEST(SpecCutout, ZeroMasksIsIdentity) {
  AugmentConfig cfg;
  cfg.n_cutout_masks = 0;
  Rng rng = make_rng(6);
  const auto fm = marked(64, 64);
  EXPECT_EQ(spec_cutout(fm, cfg, rng).values, fm.values);
}

TEST(SpecCutout, MaskedCellsBoundedByAreaSum) {
  AugmentConfig cfg;
  cfg.mask_fill = -3.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng = make_rng(seed);
    const auto out = spec_cutout(marked(64, 64), cfg, rng);
    std::size_t masked = 0;
    for (double v : out.values) {
      EXPECT_TRUE(v == 7.5 || v == cfg.mask_fill);
      masked += v == cfg.mask_fill;
    }
    EXPECT_GT(masked, 0u);
    EXPECT_LE(masked, 5u * 25u * 15u);
  }
}

TEST(Augment, SeedFixesOutcome) {
  AugmentConfig cfg;
  auto run = [&](std::uint64_t seed) {
    Rng rng = make_rng(seed);
    Waveform w = ramp(4000);
    augment_waveform(w, cfg, rng);
    auto fm = augment_features(marked(64, 64), cfg, rng);
    return std::make_pair(w.samples, fm.values);
  };
  EXPECT_EQ(run(9), run(9));
  EXPECT_NE(run(9), run(10));
}

TEST(Augment, DisabledIsExactIdentity) {
  const auto cfg = AugmentConfig::disabled();
  Rng rng = make_rng(7);
  Waveform w = ramp(4000);
  const auto before = w.samples;
  EXPECT_FALSE(augment_waveform(w, cfg, rng));
  EXPECT_EQ(w.samples, before);
  const auto fm = marked(64, 64);
  EXPECT_EQ(augment_features(fm, cfg, rng).values, fm.values);
}

TEST(Augment, ShapesPreserved) {
  AugmentConfig cfg;
  cfg.p_wave_augment = 1.0;
  Rng rng = make_rng(8);
  Waveform w = ramp(1234);
  augment_waveform(w, cfg, rng);
  EXPECT_EQ(w.size(), 1234u);
  const auto fm = augment_features(marked(10, 7), cfg, rng);
  EXPECT_EQ(fm.n_features, 10u);
  EXPECT_EQ(fm.n_frames, 7u);
}

TEST(AugmentConfig, ValidateRejectsBadValues) {
  AugmentConfig c;
  c.p_wave_augment = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.noise_db = {-10.0, -20.0};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.n_time_masks = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace marblevad
