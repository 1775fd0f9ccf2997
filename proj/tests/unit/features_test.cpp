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
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "marblevad/features.hpp"

namespace marblevad {
namespace {

Waveform noise(std::size_t n, std::uint64_t seed, double amp = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  Waveform w;
  for (std::size_t i = 0; i < n; ++i) w.samples.push_back(static_cast<float>(u(rng)));
  return w;
}

TEST(Framing, SixtyThreeHundredthsGiveSixtyFourFrames) {
  EXPECT_EQ(num_frames(10080, FrameSpec{}), 64u);
  EXPECT_EQ(frame_signal(noise(10080, 1), FrameSpec{}).size(), 64u);
}

TEST(Framing, OneHopGivesTwoFrames) {
  EXPECT_EQ(num_frames(160, FrameSpec{}), 2u);
}

TEST(Framing, RectWindowOfOnesIsOnes) {
  FrameSpec spec;
  spec.window = WindowKind::kRect;
  Waveform w;
  w.samples.assign(2000, 1.0f);
  for (const auto& f : frame_signal(w, spec)) {
    for (double v : f) EXPECT_DOUBLE_EQ(v, 1.0);
  }
}

TEST(Spectrum, ZeroFrameZeroSpectrum) {
  const std::vector<double> z(400, 0.0);
  for (double v : power_spectrum(z, 512)) EXPECT_EQ(v, 0.0);
}

TEST(Spectrum, CosineAtBinConcentrates) {
  const std::size_t n = 512, k = 37;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::cos(2.0 * std::numbers::pi * k * i / n);
  const auto p = power_spectrum(x, n);
  // |X_k| = n/2 for a unit cosine at bin k.
  EXPECT_NEAR(p[k], (n / 2.0) * (n / 2.0), 1e-6);
  double rest = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (j != k) rest += p[j];
  }
  EXPECT_LT(rest, 1e-12 * p[k]);
}

TEST(Spectrum, MatchesDirectDft) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> x(400);
    for (double& v : x) v = g(rng);
    const auto p = power_spectrum(x, 512);
    for (std::size_t k = 0; k < p.size(); ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        acc += x[i] * std::polar(1.0, -2.0 * std::numbers::pi * k * i / 512.0);
      }
      EXPECT_NEAR(p[k], std::norm(acc), 1e-9 * std::max(1.0, std::norm(acc)));
    }
  }
}

TEST(Spectrum, RejectsNonPowerOfTwo) {
  EXPECT_THROW(power_spectrum(std::vector<double>(10, 0.0), 500), std::invalid_argument);
}

TEST(MelFilterbank, MelOf700Hz) {
  EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-9);
  EXPECT_NEAR(hz_to_mel(700.0), 781.18, 0.01);
  EXPECT_NEAR(mel_to_hz(hz_to_mel(1234.5)), 1234.5, 1e-9);
}

TEST(MelFilterbank, RowsPositiveContiguousAndIncreasing) {
  const auto fb = build_mel_filterbank();
  ASSERT_EQ(fb.n_mels, 64u);
  ASSERT_EQ(fb.n_bins, 257u);
  for (std::size_t m = 0; m < fb.n_mels; ++m) {
    double sum = 0.0;
    for (std::size_t k = 0; k < fb.n_bins; ++k) {
      const double v = fb.weight(m, k);
      sum += v;
      const bool inside = k >= fb.first[m] && k < fb.last[m];
      if (inside) {
        EXPECT_GT(v, 0.0) << "gap in filter " << m;
      } else {
        EXPECT_EQ(v, 0.0);
      }
    }
    EXPECT_GT(sum, 0.0);
    if (m > 0) EXPECT_GT(fb.centers_hz[m], fb.centers_hz[m - 1]);
  }
}

TEST(LogMel, ZeroSignalHitsFloor) {
  Waveform w;
  w.samples.assign(10080, 0.0f);
  const auto fm = log_mel(w, FrameSpec{}, build_mel_filterbank());
  EXPECT_EQ(fm.n_features, 64u);
  EXPECT_EQ(fm.n_frames, 64u);
  for (double v : fm.values) EXPECT_NEAR(v, std::log(1e-10), 1e-12);
  EXPECT_NEAR(std::log(1e-10), -23.0259, 1e-4);
}

TEST(LogMel, DoublingAmplitudeAddsLnFour) {
  const auto fb = build_mel_filterbank();
  const Waveform a = noise(10080, 2, 0.2);
  Waveform b = a;
  for (float& v : b.samples) v *= 2.0f;
  const auto fa = log_mel(a, FrameSpec{}, fb);
  const auto fbm = log_mel(b, FrameSpec{}, fb);
  for (std::size_t i = 0; i < fa.values.size(); ++i) {
    if (fa.values[i] > std::log(1e-10) + 1.0) {
      EXPECT_NEAR(fbm.values[i] - fa.values[i], std::log(4.0), 1e-9);
    }
  }
}

TEST(Mfcc, SixtyFourBySixtyFour) {
  const auto fm = mfcc(noise(10080, 3), FrameSpec{}, build_mel_filterbank());
  EXPECT_EQ(fm.n_features, 64u);
  EXPECT_EQ(fm.n_frames, 64u);
  EXPECT_EQ(fm.kind, FeatureKind::kMfcc);
}

TEST(Mfcc, DctIsOrthonormal) {
  const std::size_t n = 64;
  const auto c = dct2_matrix(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += c[k * n + i] * c[k * n + j];
      EXPECT_NEAR(acc, i == j ? 1.0 : 0.0, 1e-12);
    }
  }
}

TEST(Mfcc, ConstantColumnOnlyFeedsCoefficientZero) {
  // Zero audio gives a constant log-mel column c = ln(1e-10).
  Waveform w;
  w.samples.assign(1600, 0.0f);
  const auto fm = mfcc(w, FrameSpec{}, build_mel_filterbank());
  const double c = std::log(1e-10);
  for (std::size_t t = 0; t < fm.n_frames; ++t) {
    EXPECT_NEAR(fm.at(0, t), c * 8.0, 1e-9);  // c * sqrt(64)
    for (std::size_t k = 1; k < fm.n_features; ++k) EXPECT_NEAR(fm.at(k, t), 0.0, 1e-9);
  }
}

TEST(Mfcc, ExtractorMatchesFreeFunctions) {
  const Waveform w = noise(10080, 4);
  const FeatureExtractor fx(FeatureKind::kMfcc);
  EXPECT_EQ(fx(w).values, mfcc(w, FrameSpec{}, build_mel_filterbank()).values);
  const FeatureExtractor lx(FeatureKind::kLogMel);
  EXPECT_EQ(lx(w).values, log_mel(w, FrameSpec{}, build_mel_filterbank()).values);
}

TEST(Normalize, RowMeansVanish) {
  const auto fm = normalize(FeatureExtractor()(noise(10080, 5)));
  for (std::size_t f = 0; f < fm.n_features; ++f) {
    double mean = 0.0;
    for (std::size_t t = 0; t < fm.n_frames; ++t) mean += fm.at(f, t);
    EXPECT_LT(std::abs(mean / fm.n_frames), 1e-9);
  }
}

TEST(Normalize, ConstantRowBecomesZero) {
  FeatureMatrix fm;
  fm.n_features = 2;
  fm.n_frames = 4;
  fm.values = {3, 3, 3, 3, 1, 2, 3, 4};
  const auto out = normalize(fm);
  for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(out.at(0, t), 0.0);
}

TEST(Normalize, Idempotent) {
  const auto once = normalize(FeatureExtractor(FeatureKind::kLogMel)(noise(10080, 6)));
  const auto twice = normalize(once);
  for (std::size_t i = 0; i < once.values.size(); ++i) {
    EXPECT_NEAR(once.values[i], twice.values[i], 1e-9);
  }
}

TEST(FeatureKindNames, ParseAndPrint) {
  EXPECT_EQ(parse_feature_kind("mfcc"), FeatureKind::kMfcc);
  EXPECT_EQ(parse_feature_kind("log_mel"), FeatureKind::kLogMel);
  EXPECT_EQ(to_string(FeatureKind::kLogMel), "log_mel");
  EXPECT_THROW(parse_feature_kind("plp"), std::invalid_argument);
}

}  // namespace
}  // namespace marblevad
