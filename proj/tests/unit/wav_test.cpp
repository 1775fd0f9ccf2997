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
#include <cstdint>
#include <cstring>
#include <vector>

#include <gtest/gtest.h>

#include "marblevad/wav.hpp"
#include "test_util.hpp"

namespace marblevad {
namespace {

using marblevad::testing::TempDir;

// Minimal RIFF image with an arbitrary fmt chunk.
std::vector<unsigned char> riff(std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                                std::uint16_t bits, const std::vector<unsigned char>& payload) {
  using namespace wav_detail;
  std::vector<unsigned char> out{'R', 'I', 'F', 'F'};
  put_u32(out, static_cast<std::uint32_t>(36 + payload.size()));
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, format);
  put_u16(out, channels);
  put_u32(out, rate);
  put_u32(out, rate * channels * bits / 8);
  put_u16(out, static_cast<std::uint16_t>(channels * bits / 8));
  put_u16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, static_cast<std::uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

std::vector<unsigned char> pcm16(const std::vector<std::int16_t>& v) {
  std::vector<unsigned char> out;
  for (auto s : v) wav_detail::put_u16(out, static_cast<std::uint16_t>(s));
  return out;
}

TEST(Wav, Pcm16ScalesByTwoToThe15) {
  const auto w = parse_wav(riff(1, 1, 16000, 16, pcm16({0, 16384, -16384})));
  ASSERT_EQ(w.size(), 3u);
  EXPECT_FLOAT_EQ(w.samples[0], 0.0f);
  EXPECT_FLOAT_EQ(w.samples[1], 0.5f);
  EXPECT_FLOAT_EQ(w.samples[2], -0.5f);
  EXPECT_EQ(w.sample_rate, 16000);
}

TEST(Wav, StereoIsAveragedToMono) {
  // Float so that full-scale 1.0 is representable exactly.
  std::vector<unsigned char> payload;
  for (float f : {1.0f, 0.0f}) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    wav_detail::put_u32(payload, u);
  }
  const auto w = parse_wav(riff(3, 2, 16000, 32, payload));
  ASSERT_EQ(w.size(), 1u);
  EXPECT_FLOAT_EQ(w.samples[0], 0.5f);
}

TEST(Wav, OneSecondIs16000Samples) {
  TempDir dir("wav");
  Waveform w;
  w.samples.assign(16000, 0.25f);
  save_wav(dir / "one.wav", w);
  const auto back = load_wav(dir / "one.wav");
  EXPECT_EQ(back.size(), 16000u);
  EXPECT_DOUBLE_EQ(back.duration_s(), 1.0);
}

TEST(Wav, Pcm16RoundTripWithinOneLsb) {
  Waveform w;
  for (int i = 0; i < 1000; ++i) w.samples.push_back(static_cast<float>(std::sin(i * 0.01) * 0.9));
  const auto back = parse_wav(encode_wav(w));
  ASSERT_EQ(back.size(), w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    EXPECT_NEAR(back.samples[i], w.samples[i], 1.0 / 32768.0);
  }
}

TEST(Wav, Float32RoundTripIsExact) {
  Waveform w;
  w.samples = {0.1f, -0.7f, 0.333f};
  const auto back = parse_wav(encode_wav(w, SampleFormat::kFloat32));
  EXPECT_EQ(back.samples, w.samples);
}

TEST(Wav, Decodes8And24Bit) {
  const auto w8 = parse_wav(riff(1, 1, 16000, 8, {128, 192, 64}));
  EXPECT_FLOAT_EQ(w8.samples[1], 0.5f);
  EXPECT_FLOAT_EQ(w8.samples[2], -0.5f);
  // 0x400000 = 2^22 = half scale.
  const auto w24 = parse_wav(riff(1, 1, 16000, 24, {0x00, 0x00, 0x40, 0x00, 0x00, 0xC0}));
  EXPECT_FLOAT_EQ(w24.samples[0], 0.5f);
  EXPECT_FLOAT_EQ(w24.samples[1], -0.5f);
}

TEST(Wav, ErrorsAreDistinct) {
  try {
    load_wav("/nonexistent/x.wav");
    FAIL();
  } catch (const AudioError& e) {
    EXPECT_EQ(e.kind(), AudioError::Kind::kMissingFile);
  }
  try {
    parse_wav({'n', 'o', 'p', 'e'});
    FAIL();
  } catch (const AudioError& e) {
    EXPECT_EQ(e.kind(), AudioError::Kind::kMalformedHeader);
  }
  try {
    parse_wav(riff(2, 1, 16000, 4, {0, 0}));  // ADPCM
    FAIL();
  } catch (const AudioError& e) {
    EXPECT_EQ(e.kind(), AudioError::Kind::kUnsupportedCodec);
  }
}

TEST(Wav, OtherSampleRatesAreRejectedNotResampled) {
  const auto w = parse_wav(riff(1, 1, 44100, 16, pcm16({1, 2})));
  EXPECT_EQ(w.sample_rate, 44100);
  try {
    require_sample_rate(w, "clip");
    FAIL();
  } catch (const AudioError& e) {
    EXPECT_EQ(e.kind(), AudioError::Kind::kUnsupportedSampleRate);
    EXPECT_NE(std::string(e.what()).find("44100"), std::string::npos);
  }
}

}  // namespace
}  // namespace marblevad
