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

// Log-mel and MFCC front end.
//
// Defaults: 25 ms Hann window, 10 ms hop, 512-point FFT, reflection padding
// of half a window on both sides, 64 HTK-mel triangular filters over
// 0-8 kHz, natural log with a 1e-10 power floor, orthonormal DCT-II.
// A 0.63 s segment at 16 kHz comes out as exactly 64 x 64.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "marblevad/wav.hpp"

namespace marblevad {

enum class WindowKind { kHann, kRect };
enum class FeatureKind { kMfcc, kLogMel };

inline std::string_view to_string(FeatureKind k) {
  return k == FeatureKind::kMfcc ? "mfcc" : "log_mel";
}

inline FeatureKind parse_feature_kind(std::string_view s) {
  if (s == "mfcc") return FeatureKind::kMfcc;
  if (s == "log_mel" || s == "mel") return FeatureKind::kLogMel;
  throw std::invalid_argument("unknown feature kind '" + std::string(s) + "'");
}

struct FrameSpec {
  double win_len_s = 0.025;
  double hop_s = 0.010;
  std::size_t fft_size = 512;
  WindowKind window = WindowKind::kHann;
  bool center_pad = true;

  std::size_t win_samples(int sr) const {
    return static_cast<std::size_t>(std::lround(win_len_s * sr));
  }
  std::size_t hop_samples(int sr) const {
    return static_cast<std::size_t>(std::lround(hop_s * sr));
  }
  void validate(int sr) const {
    if (hop_samples(sr) == 0) throw std::invalid_argument("hop must be positive");
    if (win_samples(sr) == 0 || win_samples(sr) > fft_size) {
      throw std::invalid_argument("window length must be in [1, fft_size]");
    }
    if ((fft_size & (fft_size - 1)) != 0) {
      throw std::invalid_argument("fft_size must be a power of two");
    }
  }
};

// Row-major (n_features x n_frames).
struct FeatureMatrix {
  std::size_t n_features = 0;
  std::size_t n_frames = 0;
  std::vector<double> values;
  FeatureKind kind = FeatureKind::kMfcc;
  FrameSpec frame_spec{};

  double& at(std::size_t f, std::size_t t) { return values[f * n_frames + t]; }
  double at(std::size_t f, std::size_t t) const { return values[f * n_frames + t]; }
};

inline void write_csv(std::ostream& out, const FeatureMatrix& fm) {
  for (std::size_t f = 0; f < fm.n_features; ++f) {
    for (std::size_t t = 0; t < fm.n_frames; ++t) {
      if (t) out << ',';
      out << fm.at(f, t);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Framing

inline std::vector<double> make_window(WindowKind kind, std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (kind == WindowKind::kHann) {
    // Periodic Hann.
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
    }
  }
  return w;
}

// numpy-style "reflect" (edge sample not repeated), folded until in range.
inline std::size_t reflect_index(long long i, std::size_t n) {
  if (n == 1) return 0;
  const long long period = 2 * static_cast<long long>(n - 1);
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<long long>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

inline std::size_t num_frames(std::size_t n_samples, const FrameSpec& spec,
                              int sr = kSampleRate) {
  const std::size_t hop = spec.hop_samples(sr);
  if (spec.center_pad) return n_samples / hop + 1;
  const std::size_t win = spec.win_samples(sr);
  return n_samples < win ? 0 : (n_samples - win) / hop + 1;
}

// Returns windowed frames of win_len samples each.
inline std::vector<std::vector<double>> frame_signal(const Waveform& w,
                                                     const FrameSpec& spec) {
  if (w.samples.empty()) throw std::invalid_argument("frame_signal: empty waveform");
  spec.validate(w.sample_rate);
  const std::size_t win = spec.win_samples(w.sample_rate);
  const std::size_t hop = spec.hop_samples(w.sample_rate);
  const auto window = make_window(spec.window, win);
  const long long pad = spec.center_pad ? static_cast<long long>(win / 2) : 0;
  const std::size_t n = w.samples.size();
  const std::size_t frames = num_frames(n, spec, w.sample_rate);

  std::vector<std::vector<double>> out(frames, std::vector<double>(win));
  for (std::size_t f = 0; f < frames; ++f) {
    const long long base = static_cast<long long>(f * hop) - pad;
    for (std::size_t j = 0; j < win; ++j) {
      const long long i = base + static_cast<long long>(j);
      out[f][j] = window[j] * w.samples[reflect_index(i, n)];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spectrum

// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        // Recompute twiddles periodically to bound rounding drift.
        if ((k & 31) == 0) {
          w = std::polar(1.0, ang * static_cast<double>(k));
        }
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// |DFT|^2 of the zero-padded frame, bins 0..fft_size/2.
inline std::vector<double> power_spectrum(std::span<const double> frame,
                                          std::size_t fft_size) {
  if (frame.size() > fft_size) {
    throw std::invalid_argument("power_spectrum: frame longer than fft_size");
  }
  if (fft_size == 0 || (fft_size & (fft_size - 1)) != 0) {
    throw std::invalid_argument("power_spectrum: fft_size must be a power of two");
  }
  std::vector<std::complex<double>> buf(fft_size);
  for (std::size_t i = 0; i < frame.size(); ++i) buf[i] = frame[i];
  fft_inplace(buf);
  std::vector<double> out(fft_size / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::norm(buf[k]);
  return out;
}

// ---------------------------------------------------------------------------
// Mel filterbank

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

struct MelFilterbank {
  std::size_t n_mels = 0;
  std::size_t n_bins = 0;
  double f_min = 0.0;
  double f_max = 0.0;
  std::vector<double> weights;  // n_mels x n_bins, row-major
  std::vector<double> centers_hz;
  // Non-zero support [first, last) of each row.
  std::vector<std::size_t> first, last;

  double weight(std::size_t m, std::size_t k) const { return weights[m * n_bins + k]; }

  std::vector<double> apply(std::span<const double> power) const {
    std::vector<double> out(n_mels, 0.0);
    for (std::size_t m = 0; m < n_mels; ++m) {
      double acc = 0.0;
      for (std::size_t k = first[m]; k < last[m]; ++k) acc += weight(m, k) * power[k];
      out[m] = acc;
    }
    return out;
  }
};

inline MelFilterbank build_mel_filterbank(std::size_t n_mels = 64,
                                          std::size_t fft_size = 512,
                                          int sr = kSampleRate, double f_min = 0.0,
                                          double f_max = 8000.0) {
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= sr / 2.0)) {
    throw std::invalid_argument("mel filterbank needs 0 <= f_min < f_max <= sr/2");
  }
  if (n_mels == 0) throw std::invalid_argument("n_mels must be positive");
  MelFilterbank fb;
  fb.n_mels = n_mels;
  fb.n_bins = fft_size / 2 + 1;
  fb.f_min = f_min;
  fb.f_max = f_max;
  fb.weights.assign(n_mels * fb.n_bins, 0.0);
  fb.first.assign(n_mels, 0);
  fb.last.assign(n_mels, 0);

  const double mlo = hz_to_mel(f_min), mhi = hz_to_mel(f_max);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mlo + (mhi - mlo) * static_cast<double>(i) / (n_mels + 1));
  }
  const double bin_hz = static_cast<double>(sr) / fft_size;
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    fb.centers_hz.push_back(mid);
    bool seen = false;
    for (std::size_t k = 0; k < fb.n_bins; ++k) {
      const double f = k * bin_hz;
      double v = 0.0;
      if (f > lo && f < hi) v = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      fb.weights[m * fb.n_bins + k] = v;
      if (v > 0.0) {
        if (!seen) fb.first[m] = k;
        seen = true;
        fb.last[m] = k + 1;
      }
    }
    if (!seen) {
      throw std::invalid_argument(
          "mel filter " + std::to_string(m) + " (" + std::to_string(lo) + "-" +
          std::to_string(hi) + " Hz) covers no FFT bin; reduce n_mels or raise fft_size");
    }
  }
  return fb;
}

// ---------------------------------------------------------------------------
// DCT

// Orthonormal DCT-II matrix, rows = coefficients: C[k][n].
inline std::vector<double> dct2_matrix(std::size_t n) {
  std::vector<double> c(n * n);
  for (std::size_t k = 0; k < n; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / n);
    for (std::size_t i = 0; i < n; ++i) {
      c[k * n + i] = scale * std::cos(std::numbers::pi * (i + 0.5) * k / n);
    }
  }
  return c;
}

inline constexpr double kLogFloor = 1e-10;

// ---------------------------------------------------------------------------

// Precomputed window, filterbank and DCT for repeated extraction.
class FeatureExtractor {
 public:
  FeatureExtractor(FeatureKind kind = FeatureKind::kMfcc, FrameSpec spec = {},
                   std::size_t n_mels = 64, std::size_t n_coeffs = 64,
                   int sr = kSampleRate)
      : kind_(kind),
        spec_(spec),
        sr_(sr),
        n_coeffs_(n_coeffs),
        fb_(build_mel_filterbank(n_mels, spec.fft_size, sr, 0.0, sr / 2.0)) {
    spec_.validate(sr);
    if (n_coeffs_ > n_mels) throw std::invalid_argument("n_coeffs must be <= n_mels");
    if (kind_ == FeatureKind::kMfcc) dct_ = dct2_matrix(n_mels);
  }

  FeatureExtractor(FeatureKind kind, FrameSpec spec, MelFilterbank fb,
                   std::size_t n_coeffs, int sr = kSampleRate)
      : kind_(kind), spec_(spec), sr_(sr), n_coeffs_(n_coeffs), fb_(std::move(fb)) {
    spec_.validate(sr);
    if (n_coeffs_ > fb_.n_mels) throw std::invalid_argument("n_coeffs must be <= n_mels");
    if (kind_ == FeatureKind::kMfcc) dct_ = dct2_matrix(fb_.n_mels);
  }

  FeatureKind kind() const { return kind_; }
  const FrameSpec& frame_spec() const { return spec_; }
  const MelFilterbank& filterbank() const { return fb_; }
  std::size_t n_features() const {
    return kind_ == FeatureKind::kMfcc ? n_coeffs_ : fb_.n_mels;
  }

  FeatureMatrix log_mel(const Waveform& w) const {
    require_sample_rate(w, "feature extraction", sr_);
    const auto frames = frame_signal(w, spec_);
    FeatureMatrix fm;
    fm.kind = FeatureKind::kLogMel;
    fm.frame_spec = spec_;
    fm.n_features = fb_.n_mels;
    fm.n_frames = frames.size();
    fm.values.resize(fm.n_features * fm.n_frames);
    for (std::size_t t = 0; t < frames.size(); ++t) {
      const auto mel = fb_.apply(power_spectrum(frames[t], spec_.fft_size));
      for (std::size_t m = 0; m < fb_.n_mels; ++m) {
        fm.at(m, t) = std::log(std::max(mel[m], kLogFloor));
      }
    }
    return fm;
  }

  FeatureMatrix mfcc(const Waveform& w) const {
    FeatureMatrix lm = log_mel(w);
    const std::size_t n = fb_.n_mels;
    const std::vector<double> c = dct_.empty() ? dct2_matrix(n) : dct_;
    FeatureMatrix fm;
    fm.kind = FeatureKind::kMfcc;
    fm.frame_spec = spec_;
    fm.n_features = n_coeffs_;
    fm.n_frames = lm.n_frames;
    fm.values.assign(fm.n_features * fm.n_frames, 0.0);
    for (std::size_t k = 0; k < n_coeffs_; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        const double ck = c[k * n + i];
        const double* src = &lm.values[i * lm.n_frames];
        double* dst = &fm.values[k * fm.n_frames];
        for (std::size_t t = 0; t < fm.n_frames; ++t) dst[t] += ck * src[t];
      }
    }
    return fm;
  }

  FeatureMatrix operator()(const Waveform& w) const {
    return kind_ == FeatureKind::kMfcc ? mfcc(w) : log_mel(w);
  }

 private:
  FeatureKind kind_;
  FrameSpec spec_;
  int sr_;
  std::size_t n_coeffs_;
  MelFilterbank fb_;
  std::vector<double> dct_;
};

inline FeatureMatrix log_mel(const Waveform& w, const FrameSpec& spec,
                             const MelFilterbank& fb) {
  return FeatureExtractor(FeatureKind::kLogMel, spec, fb, fb.n_mels, w.sample_rate)
      .log_mel(w);
}

inline FeatureMatrix mfcc(const Waveform& w, const FrameSpec& spec,
                          const MelFilterbank& fb, std::size_t n_coeffs = 64) {
  return FeatureExtractor(FeatureKind::kMfcc, spec, fb, n_coeffs, w.sample_rate).mfcc(w);
}

inline constexpr double kStdFloor = 1e-5;

// Per-row zero mean / unit variance over the frames of one segment.
inline FeatureMatrix normalize(FeatureMatrix fm) {
  if (fm.n_frames < 2) {
    throw std::invalid_argument("normalize: need at least 2 frames");
  }
  const double n = static_cast<double>(fm.n_frames);
  for (std::size_t f = 0; f < fm.n_features; ++f) {
    double* row = &fm.values[f * fm.n_frames];
    double mean = 0.0;
    for (std::size_t t = 0; t < fm.n_frames; ++t) mean += row[t];
    mean /= n;
    double var = 0.0;
    for (std::size_t t = 0; t < fm.n_frames; ++t) var += (row[t] - mean) * (row[t] - mean);
    const double sd = std::max(std::sqrt(var / n), kStdFloor);
    for (std::size_t t = 0; t < fm.n_frames; ++t) row[t] = (row[t] - mean) / sd;
  }
  return fm;
}

}  // namespace marblevad
