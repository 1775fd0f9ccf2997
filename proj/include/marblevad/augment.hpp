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

// Training-time augmentation: waveform time shift and white noise (gated
// jointly by p_wave_augment), then SpecAugment time/frequency masks and
// SpecCutout rectangles on the normalized feature matrix.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "marblevad/features.hpp"
#include "marblevad/rng.hpp"
#include "marblevad/wav.hpp"

namespace marblevad {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct AugmentConfig {
  bool enabled = true;
  double p_wave_augment = 0.8;
  Range shift_ms{-5.0, 5.0};
  Range noise_db{-90.0, -46.0};
  int n_time_masks = 2;
  int max_time_mask = 25;
  int n_freq_masks = 2;
  int max_freq_mask = 15;
  int n_cutout_masks = 5;
  int cutout_max_t = 25;
  int cutout_max_f = 15;
  double mask_fill = 0.0;

  static AugmentConfig disabled() {
    AugmentConfig c;
    c.enabled = false;
    return c;
  }

  void validate() const {
    if (p_wave_augment < 0.0 || p_wave_augment > 1.0) {
      throw std::invalid_argument("p_wave_augment must be in [0, 1]");
    }
    if (shift_ms.lo > shift_ms.hi || noise_db.lo > noise_db.hi) {
      throw std::invalid_argument("augmentation ranges must be non-empty");
    }
    if (noise_db.lo < -200.0 || noise_db.hi > 0.0) {
      throw std::invalid_argument("noise_db range must lie within [-200, 0]");
    }
    if (n_time_masks < 0 || n_freq_masks < 0 || n_cutout_masks < 0 ||
        max_time_mask < 0 || max_freq_mask < 0 || cutout_max_t < 0 ||
        cutout_max_f < 0) {
      throw std::invalid_argument("mask counts and sizes must be >= 0");
    }
  }
};

// Delays (positive) or advances (negative) the signal by a shift drawn from
// `shift_ms`; vacated samples are zero.
inline Waveform time_shift(Waveform w, Range shift_ms, Rng& rng) {
  const double ms = uniform_real(rng, shift_ms.lo, shift_ms.hi);
  const long long shift = std::llround(ms * 1e-3 * w.sample_rate);
  const long long n = static_cast<long long>(w.samples.size());
  if (shift == 0) return w;
  std::vector<float> out(w.samples.size(), 0.0f);
  for (long long i = 0; i < n; ++i) {
    const long long src = i - shift;
    if (src >= 0 && src < n) out[i] = w.samples[src];
  }
  w.samples = std::move(out);
  return w;
}

inline double noise_std_for_db(double level_db) { return std::pow(10.0, level_db / 20.0); }

// Adds N(0, 10^(L/20)) per sample, L ~ U[noise_db].
inline Waveform add_white_noise(Waveform w, Range noise_db, Rng& rng) {
  const double level = uniform_real(rng, noise_db.lo, noise_db.hi);
  std::normal_distribution<double> gauss(0.0, noise_std_for_db(level));
  for (float& v : w.samples) {
    v = static_cast<float>(std::clamp(v + gauss(rng), -1.0, 1.0));
  }
  return w;
}

// Gate, then shift + noise. Returns whether the gate fired.
inline bool augment_waveform(Waveform& w, const AugmentConfig& cfg, Rng& rng) {
  if (!cfg.enabled) return false;
  std::bernoulli_distribution gate(cfg.p_wave_augment);
  if (!gate(rng)) return false;
  w = time_shift(std::move(w), cfg.shift_ms, rng);
  w = add_white_noise(std::move(w), cfg.noise_db, rng);
  return true;
}

namespace augment_detail {

// Width ~ U{lo..max} clamped to extent; start uniform over valid positions.
inline std::pair<std::size_t, std::size_t> draw_span(Rng& rng, int lo, int max_width,
                                                     std::size_t extent) {
  if (extent == 0 || max_width < lo) return {0, 0};
  int width = uniform_int(rng, lo, max_width);
  width = std::min<int>(width, static_cast<int>(extent));
  const int start = uniform_int(rng, 0, static_cast<int>(extent) - width);
  return {static_cast<std::size_t>(start), static_cast<std::size_t>(width)};
}

}  // namespace augment_detail

inline FeatureMatrix spec_augment(FeatureMatrix fm, const AugmentConfig& cfg, Rng& rng) {
  using augment_detail::draw_span;
  for (int m = 0; m < cfg.n_time_masks; ++m) {
    auto [t0, width] = draw_span(rng, 0, cfg.max_time_mask, fm.n_frames);
    for (std::size_t f = 0; f < fm.n_features; ++f) {
      for (std::size_t t = t0; t < t0 + width; ++t) fm.at(f, t) = cfg.mask_fill;
    }
  }
  for (int m = 0; m < cfg.n_freq_masks; ++m) {
    auto [f0, width] = draw_span(rng, 0, cfg.max_freq_mask, fm.n_features);
    for (std::size_t f = f0; f < f0 + width; ++f) {
      for (std::size_t t = 0; t < fm.n_frames; ++t) fm.at(f, t) = cfg.mask_fill;
    }
  }
  return fm;
}

inline FeatureMatrix spec_cutout(FeatureMatrix fm, const AugmentConfig& cfg, Rng& rng) {
  using augment_detail::draw_span;
  for (int m = 0; m < cfg.n_cutout_masks; ++m) {
    auto [t0, tw] = draw_span(rng, 1, cfg.cutout_max_t, fm.n_frames);
    auto [f0, fw] = draw_span(rng, 1, cfg.cutout_max_f, fm.n_features);
    for (std::size_t f = f0; f < f0 + fw; ++f) {
      for (std::size_t t = t0; t < t0 + tw; ++t) fm.at(f, t) = cfg.mask_fill;
    }
  }
  return fm;
}

// Feature-level stage; always applied during training when enabled.
inline FeatureMatrix augment_features(FeatureMatrix fm, const AugmentConfig& cfg,
                                      Rng& rng) {
  if (!cfg.enabled) return fm;
  return spec_cutout(spec_augment(std::move(fm), cfg, rng), cfg, rng);
}

}  // namespace marblevad
