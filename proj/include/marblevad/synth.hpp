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

// Synthetic signal generators used in place of real speech/noise corpora.
//
// "Speech" is a voiced harmonic stack with syllable-rate amplitude modulation;
// "non-speech" is white or pink noise through a random band-pass filter.
// Long recordings with condition-tagged ground truth are assembled from the
// same generators for frame-level evaluation.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "marblevad/rng.hpp"
#include "marblevad/types.hpp"
#include "marblevad/wav.hpp"

namespace marblevad {

namespace synth_detail {

inline double rms(const std::vector<float>& x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (float v : x) acc += static_cast<double>(v) * v;
  return std::sqrt(acc / x.size());
}

inline void scale_to_peak(std::vector<float>& x, double peak) {
  float m = 0.0f;
  for (float v : x) m = std::max(m, std::abs(v));
  if (m <= 0.0f) return;
  const float g = static_cast<float>(peak / m);
  for (float& v : x) v *= g;
}

// RBJ band-pass biquad (constant 0 dB peak gain).
struct Biquad {
  double b0, b1, b2, a1, a2;
  double z1 = 0.0, z2 = 0.0;

  static Biquad bandpass(double center_hz, double q, int sr) {
    const double w0 = 2.0 * std::numbers::pi * center_hz / sr;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    return Biquad{alpha / a0, 0.0, -alpha / a0, -2.0 * std::cos(w0) / a0,
                  (1.0 - alpha) / a0};
  }

  double step(double x) {
    double y = b0 * x + z1;
    z1 = b1 * x - a1 * y + z2;
    z2 = b2 * x - a2 * y;
    return y;
  }
};

}  // namespace synth_detail

inline double db_to_amplitude(double db) { return std::pow(10.0, db / 20.0); }

// Harmonic tone stack: f0 in [90, 300] Hz, 3-6 harmonics, 4-8 Hz AM.
inline std::vector<float> synth_speech_like(Rng& rng, std::size_t n, int sr,
                                            double peak) {
  const double f0 = uniform_real(rng, 90.0, 300.0);
  const int n_harmonics = uniform_int(rng, 3, 6);
  const double am_hz = uniform_real(rng, 4.0, 8.0);
  const double am_depth = uniform_real(rng, 0.6, 1.0);
  const double am_phase = uniform_real(rng, 0.0, 2.0 * std::numbers::pi);
  const double vib_hz = uniform_real(rng, 3.0, 6.0);
  const double vib_depth = uniform_real(rng, 0.0, 0.03);
  std::vector<double> amps(n_harmonics), phases(n_harmonics);
  for (int h = 0; h < n_harmonics; ++h) {
    amps[h] = uniform_real(rng, 0.5, 1.0) / (h + 1);
    phases[h] = uniform_real(rng, 0.0, 2.0 * std::numbers::pi);
  }

  std::vector<float> out(n);
  double phase = 0.0;  // running phase of f0 (vibrato integrates frequency)
  const double dt = 1.0 / sr;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = i * dt;
    const double f = f0 * (1.0 + vib_depth * std::sin(2.0 * std::numbers::pi * vib_hz * t));
    phase += 2.0 * std::numbers::pi * f * dt;
    double v = 0.0;
    for (int h = 0; h < n_harmonics; ++h) {
      v += amps[h] * std::sin((h + 1) * phase + phases[h]);
    }
    const double env =
        1.0 - am_depth * 0.5 *
                  (1.0 + std::cos(2.0 * std::numbers::pi * am_hz * t + am_phase));
    out[i] = static_cast<float>(v * env);
  }
  synth_detail::scale_to_peak(out, peak);
  return out;
}

// White or pink noise, optionally band-limited by a random band-pass.
inline std::vector<float> synth_noise_like(Rng& rng, std::size_t n, int sr,
                                           double peak) {
  const bool pink = uniform_int(rng, 0, 1) == 1;
  const bool filtered = uniform_int(rng, 0, 3) != 0;
  const double center = uniform_real(rng, 150.0, 0.4 * sr);
  const double q = uniform_real(rng, 0.3, 2.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Paul Kellet's economy pink filter.
  double p0 = 0.0, p1 = 0.0, p2 = 0.0;
  auto bp = synth_detail::Biquad::bandpass(center, q, sr);
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = gauss(rng);
    if (pink) {
      p0 = 0.99765 * p0 + x * 0.0990460;
      p1 = 0.96300 * p1 + x * 0.2965164;
      p2 = 0.57000 * p2 + x * 1.0526913;
      x = p0 + p1 + p2 + x * 0.1848;
    }
    if (filtered) x = bp.step(x);
    out[i] = static_cast<float>(x);
  }
  synth_detail::scale_to_peak(out, peak);
  return out;
}

// Steady chord of harmonic tones (no syllabic modulation).
inline std::vector<float> synth_music_like(Rng& rng, std::size_t n, int sr,
                                           double peak) {
  const double root = uniform_real(rng, 110.0, 440.0);
  const double ratios[3] = {1.0, 1.25, 1.5};
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    double v = 0.0;
    for (double r : ratios) {
      for (int h = 1; h <= 3; ++h) {
        v += std::sin(2.0 * std::numbers::pi * root * r * h * t) / h;
      }
    }
    out[i] = static_cast<float>(v);
  }
  synth_detail::scale_to_peak(out, peak);
  return out;
}

struct SynthLevels {
  double min_peak_db = -30.0;
  double max_peak_db = -3.0;
};

inline Waveform synth_speech_clip(std::uint64_t seed, double duration_s,
                                  const SynthLevels& levels = {},
                                  int sr = kSampleRate) {
  Rng rng = make_rng(seed);
  const double peak =
      db_to_amplitude(uniform_real(rng, levels.min_peak_db, levels.max_peak_db));
  const auto n = static_cast<std::size_t>(std::lround(duration_s * sr));
  return Waveform{synth_speech_like(rng, n, sr, peak), sr};
}

inline Waveform synth_noise_clip(std::uint64_t seed, double duration_s,
                                 const SynthLevels& levels = {},
                                 int sr = kSampleRate) {
  Rng rng = make_rng(seed);
  const double peak =
      db_to_amplitude(uniform_real(rng, levels.min_peak_db, levels.max_peak_db));
  const auto n = static_cast<std::size_t>(std::lround(duration_s * sr));
  return Waveform{synth_noise_like(rng, n, sr, peak), sr};
}

struct RecordingOptions {
  double duration_s = 30.0;
  double min_region_s = 0.8;
  double max_region_s = 2.5;
  // Background SNR for the "+noise" / "+music" speech conditions.
  double min_snr_db = 0.0;
  double max_snr_db = 10.0;
  SynthLevels levels{};
};

struct SynthRecording {
  Waveform audio;
  std::vector<LabeledInterval> labels;
};

// Alternates non-speech regions with speech regions of a random condition
// (clean, +noise, +music). Labels tile [0, duration).
inline SynthRecording synth_recording(std::uint64_t seed,
                                      const RecordingOptions& opt = {},
                                      int sr = kSampleRate) {
  Rng rng = make_rng(seed);
  const auto total = static_cast<std::size_t>(std::lround(opt.duration_s * sr));
  SynthRecording rec;
  rec.audio.sample_rate = sr;
  rec.audio.samples.reserve(total);

  bool speech = uniform_int(rng, 0, 1) == 1;
  while (rec.audio.samples.size() < total) {
    const double len_s = uniform_real(rng, opt.min_region_s, opt.max_region_s);
    std::size_t n = static_cast<std::size_t>(std::lround(len_s * sr));
    n = std::min(n, total - rec.audio.samples.size());
    const double peak = db_to_amplitude(
        uniform_real(rng, opt.levels.min_peak_db, opt.levels.max_peak_db));

    std::vector<float> region;
    Condition cond = Condition::kNoSpeech;
    if (!speech) {
      region = synth_noise_like(rng, n, sr, peak);
    } else {
      cond = static_cast<Condition>(uniform_int(rng, 0, 2));
      region = synth_speech_like(rng, n, sr, peak);
      if (cond != Condition::kClean) {
        const double snr = uniform_real(rng, opt.min_snr_db, opt.max_snr_db);
        auto bg = cond == Condition::kNoise ? synth_noise_like(rng, n, sr, 1.0)
                                            : synth_music_like(rng, n, sr, 1.0);
        const double bg_rms = synth_detail::rms(bg);
        const double target = synth_detail::rms(region) / db_to_amplitude(snr);
        const double g = bg_rms > 0.0 ? target / bg_rms : 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          region[i] = static_cast<float>(region[i] + g * bg[i]);
        }
      }
    }
    for (float& v : region) v = std::clamp(v, -1.0f, 1.0f);

    const double start = static_cast<double>(rec.audio.samples.size()) / sr;
    rec.audio.samples.insert(rec.audio.samples.end(), region.begin(), region.end());
    const double end = static_cast<double>(rec.audio.samples.size()) / sr;
    rec.labels.push_back({start, end, cond});
    speech = !speech;
  }
  return rec;
}

// Adds i.i.d. Gaussian noise at `level_db` relative to full scale.
inline Waveform add_noise_db(Waveform w, double level_db, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, db_to_amplitude(level_db));
  for (float& v : w.samples) {
    v = static_cast<float>(std::clamp(v + gauss(rng), -1.0, 1.0));
  }
  return w;
}

// Moves every interior label boundary by a uniform offset of up to
// +/- `fraction` of the shorter adjacent interval.
inline std::vector<LabeledInterval> jitter_boundaries(
    std::vector<LabeledInterval> labels, double fraction, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  for (std::size_t i = 0; i + 1 < labels.size(); ++i) {
    if (labels[i].end_s != labels[i + 1].start_s) continue;
    const double span =
        std::min(labels[i].end_s - labels[i].start_s,
                 labels[i + 1].end_s - labels[i + 1].start_s);
    const double shift = uniform_real(rng, -fraction, fraction) * span;
    labels[i].end_s += shift;
    labels[i + 1].start_s = labels[i].end_s;
  }
  return labels;
}

}  // namespace marblevad
