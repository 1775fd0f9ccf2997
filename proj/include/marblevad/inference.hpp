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

// Frame-level prediction on long recordings.
//
// Two approaches produce a 10 ms frame timeline anchored at t = 0:
//  * shift: a window starts at every frame and its score labels that frame;
//    frames whose window would overrun the audio reuse the end-aligned window.
//  * overlap: segments at hop = seg_len * (1 - overlap), plus one end-aligned
//    segment when needed; each frame is then decided by all segments whose
//    span contains the frame midpoint, by majority vote (median) or by the
//    mean probability. Ties go to speech.

#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "marblevad/features.hpp"
#include "marblevad/log.hpp"
#include "marblevad/marblenet.hpp"
#include "marblevad/types.hpp"
#include "marblevad/wav.hpp"

namespace marblevad {

inline constexpr double kFrameSeconds = 0.010;

struct SegmentScore {
  double start_s = 0.0;
  double end_s = 0.0;
  double p_speech = 0.0;
  // Exact placement in samples; the audio may be shorter than the span
  // when the recording was shorter than one segment.
  std::size_t start_sample = 0;
  std::size_t n_samples = 0;
};

struct FrameTimeline {
  double frame_len_s = kFrameSeconds;
  int sample_rate = kSampleRate;
  std::size_t n_samples = 0;  // audio length the grid covers
  std::size_t n_frames = 0;
  std::vector<double> scores;
  std::vector<bool> decisions;

  std::size_t frame_samples() const {
    return static_cast<std::size_t>(std::lround(frame_len_s * sample_rate));
  }
  double duration_s() const { return static_cast<double>(n_samples) / sample_rate; }
  double frame_start_s(std::size_t f) const { return f * frame_len_s; }
};

// Empty grid of ceil(duration / 10 ms) frames.
inline FrameTimeline make_timeline(std::size_t n_samples, int sr = kSampleRate) {
  FrameTimeline tl;
  tl.sample_rate = sr;
  tl.n_samples = n_samples;
  const std::size_t hop = tl.frame_samples();
  tl.n_frames = (n_samples + hop - 1) / hop;
  tl.scores.assign(tl.n_frames, 0.0);
  tl.decisions.assign(tl.n_frames, false);
  return tl;
}

// Timeline over bare decisions (frames of exactly 10 ms).
inline FrameTimeline timeline_from_decisions(const std::vector<bool>& decisions,
                                             int sr = kSampleRate) {
  FrameTimeline tl = make_timeline(0, sr);
  tl.n_frames = decisions.size();
  tl.n_samples = decisions.size() * tl.frame_samples();
  tl.decisions = decisions;
  tl.scores.resize(decisions.size());
  for (std::size_t i = 0; i < decisions.size(); ++i) tl.scores[i] = decisions[i] ? 1.0 : 0.0;
  return tl;
}

inline bool speech_decision(double score) { return score >= 0.5; }

namespace inference_detail {

// Twice the midpoint (in samples) of frame f, clipped to the audio.
inline std::size_t mid2(const FrameTimeline& tl, std::size_t f) {
  const std::size_t hop = tl.frame_samples();
  const std::size_t start = f * hop;
  const std::size_t end = std::min((f + 1) * hop, std::max(tl.n_samples, start + 1));
  return start + end;
}

inline bool covers(const SegmentScore& s, const FrameTimeline& tl, std::size_t f) {
  const std::size_t m = mid2(tl, f);
  return 2 * s.start_sample <= m && m < 2 * (s.start_sample + s.n_samples);
}

// Frames [first, last) whose midpoint lies in the segment.
inline std::pair<std::size_t, std::size_t> covered_frames(const SegmentScore& s,
                                                          const FrameTimeline& tl) {
  const std::size_t hop = tl.frame_samples();
  std::size_t f = s.start_sample / hop;
  f = f > 0 ? f - 1 : 0;
  while (f < tl.n_frames && !covers(s, tl, f)) {
    if (2 * s.start_sample > mid2(tl, f)) {
      ++f;
    } else {
      return {f, f};
    }
  }
  std::size_t last = f;
  while (last < tl.n_frames && covers(s, tl, last)) ++last;
  return {f, last};
}

template <typename T>
std::vector<double> score_windows(MarbleNet<T>& model, const FeatureExtractor& fx,
                                  const Waveform& w, const std::vector<std::size_t>& starts,
                                  std::size_t len, std::size_t batch = 32) {
  std::vector<double> out;
  out.reserve(starts.size());
  for (std::size_t i = 0; i < starts.size(); i += batch) {
    const std::size_t n = std::min(batch, starts.size() - i);
    std::vector<FeatureMatrix> feats;
    for (std::size_t k = 0; k < n; ++k) {
      Waveform seg;
      seg.sample_rate = w.sample_rate;
      seg.samples.assign(len, 0.0f);
      const std::size_t s = starts[i + k];
      const std::size_t avail = s < w.size() ? std::min(len, w.size() - s) : 0;
      std::copy_n(w.samples.begin() + static_cast<std::ptrdiff_t>(s), avail,
                  seg.samples.begin());
      feats.push_back(normalize(fx(seg)));
    }
    const auto p = model.predict_speech(stack_features<T>(feats));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

}  // namespace inference_detail

// Segment starts for the overlapped approach, in samples.
inline std::vector<std::size_t> segment_starts(std::size_t n_samples, std::size_t seg_len,
                                               double overlap) {
  if (!(overlap >= 0.0 && overlap < 1.0)) {
    throw std::invalid_argument("overlap must be in [0, 1)");
  }
  if (n_samples <= seg_len) return {0};
  const auto hop = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(seg_len) * (1.0 - overlap))));
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + seg_len <= n_samples; s += hop) starts.push_back(s);
  if (starts.back() + seg_len < n_samples) starts.push_back(n_samples - seg_len);
  return starts;
}

template <typename T>
std::vector<SegmentScore> sliding_scores(MarbleNet<T>& model, const Waveform& w,
                                         double seg_len_s, double overlap,
                                         const FeatureExtractor& fx) {
  require_sample_rate(w, "inference");
  if (w.samples.empty()) throw std::invalid_argument("sliding_scores: empty audio");
  const std::size_t len = static_cast<std::size_t>(std::llround(seg_len_s * w.sample_rate));
  if (len == 0) throw std::invalid_argument("segment length must be positive");
  if (w.size() < len) {
    log_warning("audio (" + std::to_string(w.duration_s()) +
                " s) shorter than one segment; scoring a single zero-padded segment");
  }
  const auto starts = segment_starts(w.size(), len, overlap);
  const auto p = inference_detail::score_windows(model, fx, w, starts, len);
  std::vector<SegmentScore> out;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    out.push_back({static_cast<double>(starts[i]) / w.sample_rate,
                   static_cast<double>(starts[i] + len) / w.sample_rate, p[i], starts[i], len});
  }
  return out;
}

template <typename T>
std::vector<SegmentScore> sliding_scores(MarbleNet<T>& model, const Waveform& w,
                                         double seg_len_s, double overlap) {
  const auto& c = model.config();
  return sliding_scores(model, w, seg_len_s, overlap,
                        FeatureExtractor(model.feature_kind(), {}, c.input_features,
                                         c.input_features));
}

// Approach 1: the window starting at each frame labels that frame.
template <typename T>
FrameTimeline frames_by_shift(MarbleNet<T>& model, const Waveform& w, double seg_len_s,
                              const FeatureExtractor& fx) {
  require_sample_rate(w, "inference");
  if (w.samples.empty()) throw std::invalid_argument("frames_by_shift: empty audio");
  const std::size_t len = static_cast<std::size_t>(std::llround(seg_len_s * w.sample_rate));
  FrameTimeline tl = make_timeline(w.size(), w.sample_rate);
  const std::size_t hop = tl.frame_samples();
  const std::size_t last_start = w.size() > len ? w.size() - len : 0;
  if (w.size() < len) {
    log_warning("audio shorter than one segment; scoring a single zero-padded segment");
  }
  std::vector<std::size_t> frame_start(tl.n_frames);
  for (std::size_t f = 0; f < tl.n_frames; ++f) frame_start[f] = std::min(f * hop, last_start);
  std::vector<std::size_t> unique(frame_start.begin(), frame_start.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  const auto p = inference_detail::score_windows(model, fx, w, unique, len);
  for (std::size_t f = 0, u = 0; f < tl.n_frames; ++f) {
    while (unique[u] != frame_start[f]) ++u;
    tl.scores[f] = p[u];
    tl.decisions[f] = speech_decision(p[u]);
  }
  return tl;
}

template <typename T>
FrameTimeline frames_by_shift(MarbleNet<T>& model, const Waveform& w, double seg_len_s) {
  const auto& c = model.config();
  return frames_by_shift(model, w, seg_len_s,
                         FeatureExtractor(model.feature_kind(), {}, c.input_features,
                                          c.input_features));
}

namespace inference_detail {

inline void require_covered(const std::vector<std::size_t>& votes) {
  for (std::size_t f = 0; f < votes.size(); ++f) {
    if (votes[f] == 0) {
      throw std::logic_error("frame " + std::to_string(f) + " is not covered by any segment");
    }
  }
}

inline std::vector<SegmentScore> canonical_order(std::vector<SegmentScore> scores) {
  std::sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) {
    if (a.start_sample != b.start_sample) return a.start_sample < b.start_sample;
    if (a.n_samples != b.n_samples) return a.n_samples < b.n_samples;
    return a.p_speech < b.p_speech;
  });
  return scores;
}

}  // namespace inference_detail

// Majority vote over hard segment decisions; score = fraction voting speech.
inline FrameTimeline smooth_median(const std::vector<SegmentScore>& scores, FrameTimeline tl) {
  std::vector<std::size_t> votes(tl.n_frames, 0), speech(tl.n_frames, 0);
  for (const auto& s : scores) {
    const auto [first, last] = inference_detail::covered_frames(s, tl);
    const bool d = speech_decision(s.p_speech);
    for (std::size_t f = first; f < last; ++f) {
      ++votes[f];
      speech[f] += d;
    }
  }
  inference_detail::require_covered(votes);
  for (std::size_t f = 0; f < tl.n_frames; ++f) {
    tl.scores[f] = static_cast<double>(speech[f]) / votes[f];
    tl.decisions[f] = 2 * speech[f] >= votes[f];
  }
  return tl;
}

// Mean speech probability of the covering segments.
inline FrameTimeline smooth_mean(const std::vector<SegmentScore>& scores, FrameTimeline tl) {
  std::vector<std::size_t> votes(tl.n_frames, 0);
  std::vector<double> sum(tl.n_frames, 0.0);
  for (const auto& s : inference_detail::canonical_order(scores)) {
    const auto [first, last] = inference_detail::covered_frames(s, tl);
    for (std::size_t f = first; f < last; ++f) {
      ++votes[f];
      sum[f] += s.p_speech;
    }
  }
  inference_detail::require_covered(votes);
  for (std::size_t f = 0; f < tl.n_frames; ++f) {
    tl.scores[f] = sum[f] / votes[f];
    tl.decisions[f] = speech_decision(tl.scores[f]);
  }
  return tl;
}

// No smoothing: each frame takes the latest-starting segment covering it.
inline FrameTimeline raw_segment_frames(const std::vector<SegmentScore>& scores,
                                        FrameTimeline tl) {
  std::vector<std::size_t> votes(tl.n_frames, 0);
  for (const auto& s : inference_detail::canonical_order(scores)) {
    const auto [first, last] = inference_detail::covered_frames(s, tl);
    for (std::size_t f = first; f < last; ++f) {
      ++votes[f];
      tl.scores[f] = s.p_speech;
      tl.decisions[f] = speech_decision(s.p_speech);
    }
  }
  inference_detail::require_covered(votes);
  return tl;
}

enum class SmoothingFilter { kNone, kMedian, kMean };

inline SmoothingFilter parse_filter(std::string_view s) {
  if (s == "none") return SmoothingFilter::kNone;
  if (s == "median") return SmoothingFilter::kMedian;
  if (s == "mean") return SmoothingFilter::kMean;
  throw std::invalid_argument("unknown filter '" + std::string(s) + "' (none|median|mean)");
}

inline FrameTimeline smooth(const std::vector<SegmentScore>& scores, std::size_t n_samples,
                            SmoothingFilter filter, int sr = kSampleRate) {
  FrameTimeline tl = make_timeline(n_samples, sr);
  switch (filter) {
    case SmoothingFilter::kMedian:
      return smooth_median(scores, std::move(tl));
    case SmoothingFilter::kMean:
      return smooth_mean(scores, std::move(tl));
    case SmoothingFilter::kNone:
      break;
  }
  return raw_segment_frames(scores, std::move(tl));
}

struct DecisionInterval {
  double start_s = 0.0;
  double end_s = 0.0;
  Label label = Label::kNonSpeech;
};

// Run-length encodes decisions; runs shorter than min_duration_s are
// relabelled to their longer neighbour (shortest run first) until none remain.
inline std::vector<DecisionInterval> decisions_to_intervals(const FrameTimeline& tl,
                                                            double min_duration_s = 0.0) {
  struct Run {
    std::size_t first, last;  // frames [first, last)
    bool speech;
  };
  std::vector<Run> runs;
  for (std::size_t f = 0; f < tl.n_frames; ++f) {
    if (!runs.empty() && runs.back().speech == tl.decisions[f]) {
      runs.back().last = f + 1;
    } else {
      runs.push_back({f, f + 1, tl.decisions[f]});
    }
  }
  const double end_s = std::min(tl.n_frames * tl.frame_len_s, tl.duration_s());
  auto start_of = [&](std::size_t f) { return f * tl.frame_len_s; };
  auto end_of = [&](std::size_t f) { return f >= tl.n_frames ? end_s : f * tl.frame_len_s; };
  auto length = [&](const Run& r) { return end_of(r.last) - start_of(r.first); };
  // Durations are on a 10 ms grid; compare with a small tolerance.
  const double tol = 1e-9;

  while (runs.size() > 1) {
    std::size_t shortest = 0;
    for (std::size_t i = 1; i < runs.size(); ++i) {
      if (length(runs[i]) < length(runs[shortest])) shortest = i;
    }
    if (length(runs[shortest]) >= min_duration_s - tol) break;
    std::size_t into;
    if (shortest == 0) {
      into = 1;
    } else if (shortest + 1 == runs.size()) {
      into = shortest - 1;
    } else {
      into = length(runs[shortest - 1]) >= length(runs[shortest + 1]) ? shortest - 1
                                                                      : shortest + 1;
    }
    runs[shortest].speech = runs[into].speech;
    // Coalesce equal neighbours.
    std::vector<Run> merged;
    for (const auto& r : runs) {
      if (!merged.empty() && merged.back().speech == r.speech) {
        merged.back().last = r.last;
      } else {
        merged.push_back(r);
      }
    }
    runs = std::move(merged);
  }

  std::vector<DecisionInterval> out;
  for (const auto& r : runs) {
    out.push_back({start_of(r.first), end_of(r.last),
                   r.speech ? Label::kSpeech : Label::kNonSpeech});
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

inline void write_frames_csv(std::ostream& out, const FrameTimeline& tl) {
  out << "frame_start_s,score,decision\n";
  out.precision(10);
  for (std::size_t f = 0; f < tl.n_frames; ++f) {
    out << tl.frame_start_s(f) << ',' << tl.scores[f] << ',' << (tl.decisions[f] ? 1 : 0)
        << '\n';
  }
}

inline void write_intervals_csv(std::ostream& out, const std::vector<DecisionInterval>& iv) {
  out << "start_s,end_s,label\n";
  out.precision(10);
  for (const auto& i : iv) out << i.start_s << ',' << i.end_s << ',' << to_string(i.label) << '\n';
}

inline void write_segments_csv(std::ostream& out, const std::vector<SegmentScore>& s) {
  out << "start_s,end_s,p_speech\n";
  out.precision(10);
  for (const auto& x : s) out << x.start_s << ',' << x.end_s << ',' << x.p_speech << '\n';
}

// Reads a frame CSV written by write_frames_csv.
inline FrameTimeline read_frames_csv(std::istream& in, const std::string& name = "<frames>") {
  std::string line;
  if (!std::getline(in, line) || line.rfind("frame_start_s", 0) != 0) {
    throw std::runtime_error(name + ": expected header frame_start_s,score,decision");
  }
  FrameTimeline tl = make_timeline(0);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',')) {
      throw std::runtime_error(name + ":" + std::to_string(lineno) + ": malformed row");
    }
    std::getline(ss, c, ',');
    try {
      const double score = std::stod(b);
      tl.scores.push_back(score);
      tl.decisions.push_back(c.empty() ? speech_decision(score) : std::stoi(c) != 0);
    } catch (const std::exception&) {
      throw std::runtime_error(name + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  tl.n_frames = tl.scores.size();
  tl.n_samples = tl.n_frames * tl.frame_samples();
  return tl;
}

}  // namespace marblevad
