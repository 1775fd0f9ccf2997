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

// Dataset manifests and segmentation.
//
// A manifest is JSON-lines, one ManifestEntry per line:
//   {"audio_filepath": "...", "offset_s": 0.0, "duration_s": 1.0,
//    "label": "speech", "condition": "clean"}
// Segment manifests produced by `prepare` use the same schema, with
// offset/duration pointing at the cut inside the source file.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "marblevad/rng.hpp"
#include "marblevad/synth.hpp"
#include "marblevad/types.hpp"
#include "marblevad/wav.hpp"

namespace marblevad {

inline constexpr double kSegmentLength = 0.63;
inline constexpr double kSegmentStride = 0.15;

struct ManifestEntry {
  std::string audio_path;
  double offset_s = 0.0;
  double duration_s = 0.0;
  Label label = Label::kNonSpeech;
  std::optional<Condition> condition;

  bool operator==(const ManifestEntry&) const = default;
};

struct Segment {
  Waveform waveform;
  Label label = Label::kNonSpeech;
  ManifestEntry source;
  double start_in_source_s = 0.0;

  // Manifest line addressing this segment inside the source file.
  ManifestEntry as_entry() const {
    ManifestEntry e = source;
    e.offset_s = source.offset_s + start_in_source_s;
    e.duration_s = waveform.duration_s();
    return e;
  }
};

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (train < 0 || val < 0 || test < 0 ||
        std::abs(train + val + test - 1.0) > 1e-9) {
      throw std::invalid_argument(
          "split ratios must be non-negative and sum to 1");
    }
  }
};

struct Splits {
  std::vector<ManifestEntry> train, val, test;
};

class ManifestError : public std::runtime_error {
 public:
  ManifestError(const std::string& what, std::size_t line)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

inline nlohmann::json to_json(const ManifestEntry& e) {
  nlohmann::json j = {{"audio_filepath", e.audio_path},
                      {"offset_s", e.offset_s},
                      {"duration_s", e.duration_s},
                      {"label", std::string(to_string(e.label))}};
  if (e.condition) j["condition"] = std::string(to_string(*e.condition));
  return j;
}

inline ManifestEntry entry_from_json(const nlohmann::json& j) {
  ManifestEntry e;
  e.audio_path = j.at("audio_filepath").get<std::string>();
  e.offset_s = j.value("offset_s", 0.0);
  e.duration_s = j.at("duration_s").get<double>();
  e.label = parse_label(j.at("label").get<std::string>());
  if (j.contains("condition") && !j["condition"].is_null()) {
    e.condition = parse_condition(j["condition"].get<std::string>());
  }
  if (e.offset_s < 0.0) throw std::invalid_argument("offset_s must be >= 0");
  if (!(e.duration_s > 0.0)) throw std::invalid_argument("duration_s must be > 0");
  return e;
}

inline std::vector<ManifestEntry> parse_manifest(std::istream& in,
                                                 const std::string& name) {
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(entry_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& ex) {
      throw ManifestError(name + ":" + std::to_string(lineno) + ": " + ex.what(),
                          lineno);
    }
  }
  return out;
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError(path.string() + ": cannot open manifest", 0);
  return parse_manifest(in, path.string());
}

inline void write_manifest(const std::filesystem::path& path,
                           const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  for (const auto& e : entries) out << to_json(e).dump() << '\n';
}

inline std::size_t seconds_to_samples(double s, int sr = kSampleRate) {
  return static_cast<std::size_t>(std::llround(s * sr));
}

// Loads the [offset, offset + duration) slice an entry refers to.
inline Waveform load_entry_audio(const ManifestEntry& e) {
  Waveform full = load_wav(e.audio_path);
  require_sample_rate(full, e.audio_path);
  const std::size_t begin = seconds_to_samples(e.offset_s, full.sample_rate);
  const std::size_t len = seconds_to_samples(e.duration_s, full.sample_rate);
  // One sample of slack for rounding of the stored duration.
  if (begin + len > full.size() + 1) {
    throw std::out_of_range(e.audio_path + ": entry [" +
                            std::to_string(e.offset_s) + " s, +" +
                            std::to_string(e.duration_s) +
                            " s) extends past end of file");
  }
  const std::size_t end = std::min(begin + len, full.size());
  Waveform w;
  w.sample_rate = full.sample_rate;
  w.samples.assign(full.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                   full.samples.begin() + static_cast<std::ptrdiff_t>(end));
  if (w.samples.size() < len) w.samples.resize(len, 0.0f);
  return w;
}

// Splits by source file so that no file contributes to two partitions.
// Files are shuffled with the seed, then cut at cumulative rounded ratios.
inline Splits split_manifest(const std::vector<ManifestEntry>& entries,
                             const SplitSpec& spec) {
  spec.validate();
  if (entries.empty()) throw std::invalid_argument("split_manifest: no entries");

  std::vector<std::string> files;
  std::unordered_map<std::string, std::vector<std::size_t>> by_file;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto [it, inserted] = by_file.try_emplace(entries[i].audio_path);
    if (inserted) files.push_back(entries[i].audio_path);
    it->second.push_back(i);
  }
  Rng rng = make_rng(derive_seed(spec.seed, "split"));
  std::shuffle(files.begin(), files.end(), rng);

  const double g = static_cast<double>(files.size());
  const auto cut1 = static_cast<std::size_t>(std::llround(spec.train * g));
  const auto cut2 = std::max(
      cut1, static_cast<std::size_t>(std::llround((spec.train + spec.val) * g)));

  Splits out;
  for (std::size_t f = 0; f < files.size(); ++f) {
    auto& dst = f < cut1 ? out.train : (f < cut2 ? out.val : out.test);
    for (std::size_t i : by_file[files[f]]) dst.push_back(entries[i]);
  }
  return out;
}

// Start (seconds, relative to the entry) of the training crop. Clips of the
// one-second keyword length use the fixed [0.2 s, 0.83 s) cut; anything else
// is centered.
inline double train_segment_start(double duration_s, double seg_len_s,
                                  int sr = kSampleRate) {
  constexpr double kKeywordClip = 1.0;
  constexpr double kKeywordCropStart = 0.2;
  const double half_sample = 0.5 / sr;
  if (std::abs(duration_s - kKeywordClip) <= half_sample &&
      std::abs(seg_len_s - kSegmentLength) <= half_sample) {
    return kKeywordCropStart;
  }
  const auto n = static_cast<long long>(seconds_to_samples(duration_s, sr));
  const auto len = static_cast<long long>(seconds_to_samples(seg_len_s, sr));
  return static_cast<double>(std::llround((n - len) / 2.0)) / sr;
}

inline ManifestEntry plan_train_segment(const ManifestEntry& entry,
                                        double seg_len_s, int sr = kSampleRate) {
  if (seconds_to_samples(entry.duration_s, sr) < seconds_to_samples(seg_len_s, sr)) {
    throw std::invalid_argument(
        "entry " + entry.audio_path + " @" + std::to_string(entry.offset_s) +
        "s is " + std::to_string(entry.duration_s) +
        " s long, shorter than the segment length " + std::to_string(seg_len_s) +
        " s");
  }
  ManifestEntry e = entry;
  e.offset_s = entry.offset_s + train_segment_start(entry.duration_s, seg_len_s, sr);
  e.duration_s = seg_len_s;
  return e;
}

// Strided cuts starting at 0, stride, 2*stride, ... that fit in the entry.
// Entries shorter than one segment yield nothing and a warning.
inline std::vector<ManifestEntry> plan_strided_segments(
    const ManifestEntry& entry, double seg_len_s, double stride_s,
    std::vector<std::string>* warnings = nullptr, int sr = kSampleRate) {
  if (!(stride_s > 0.0)) throw std::invalid_argument("stride must be positive");
  const auto n = seconds_to_samples(entry.duration_s, sr);
  const auto len = seconds_to_samples(seg_len_s, sr);
  const auto hop = std::max<std::size_t>(1, seconds_to_samples(stride_s, sr));
  std::vector<ManifestEntry> out;
  if (n < len) {
    if (warnings) {
      warnings->push_back("skipping " + entry.audio_path + ": " +
                          std::to_string(entry.duration_s) +
                          " s is shorter than one segment");
    }
    return out;
  }
  for (std::size_t start = 0; start + len <= n; start += hop) {
    ManifestEntry e = entry;
    e.offset_s = entry.offset_s + static_cast<double>(start) / sr;
    e.duration_s = seg_len_s;
    out.push_back(std::move(e));
  }
  return out;
}

inline Segment cut_segment(const ManifestEntry& entry, const Waveform& entry_audio,
                           const ManifestEntry& cut) {
  const int sr = entry_audio.sample_rate;
  const double rel = cut.offset_s - entry.offset_s;
  const std::size_t begin = seconds_to_samples(rel, sr);
  const std::size_t len = seconds_to_samples(cut.duration_s, sr);
  if (begin + len > entry_audio.size()) {
    throw std::out_of_range(entry.audio_path + ": segment exceeds entry audio");
  }
  Segment s;
  s.waveform.sample_rate = sr;
  s.waveform.samples.assign(
      entry_audio.samples.begin() + static_cast<std::ptrdiff_t>(begin),
      entry_audio.samples.begin() + static_cast<std::ptrdiff_t>(begin + len));
  s.label = entry.label;
  s.source = entry;
  s.start_in_source_s = rel;
  return s;
}

inline Segment make_train_segment(const ManifestEntry& entry,
                                  const Waveform& entry_audio, double seg_len_s) {
  return cut_segment(entry, entry_audio,
                     plan_train_segment(entry, seg_len_s, entry_audio.sample_rate));
}

inline Segment make_train_segment(const ManifestEntry& entry, double seg_len_s) {
  plan_train_segment(entry, seg_len_s);  // fail before touching the file
  return make_train_segment(entry, load_entry_audio(entry), seg_len_s);
}

inline std::vector<Segment> make_strided_segments(
    const ManifestEntry& entry, const Waveform& entry_audio, double seg_len_s,
    double stride_s, std::vector<std::string>* warnings = nullptr) {
  std::vector<Segment> out;
  for (const auto& cut : plan_strided_segments(entry, seg_len_s, stride_s, warnings,
                                               entry_audio.sample_rate)) {
    out.push_back(cut_segment(entry, entry_audio, cut));
  }
  return out;
}

inline std::vector<Segment> make_strided_segments(
    const ManifestEntry& entry, double seg_len_s, double stride_s,
    std::vector<std::string>* warnings = nullptr) {
  if (seconds_to_samples(entry.duration_s) < seconds_to_samples(seg_len_s)) {
    return make_strided_segments(entry, Waveform{}, seg_len_s, stride_s, warnings);
  }
  return make_strided_segments(entry, load_entry_audio(entry), seg_len_s, stride_s,
                               warnings);
}

inline Segment load_segment(const ManifestEntry& cut) {
  Segment s;
  s.waveform = load_entry_audio(cut);
  s.label = cut.label;
  s.source = cut;
  return s;
}

namespace corpus_detail {
inline Label label_of(const ManifestEntry& e) { return e.label; }
inline Label label_of(const Segment& s) { return s.label; }
}  // namespace corpus_detail

// Subsamples the majority class down to the minority count. Survivors keep
// their input order.
template <typename Item>
std::vector<Item> rebalance(const std::vector<Item>& items, std::uint64_t seed) {
  using corpus_detail::label_of;
  std::vector<std::size_t> speech, other;
  for (std::size_t i = 0; i < items.size(); ++i) {
    (label_of(items[i]) == Label::kSpeech ? speech : other).push_back(i);
  }
  if (speech.empty() || other.empty()) {
    throw std::invalid_argument("rebalance: both classes must be present (speech=" +
                                std::to_string(speech.size()) + ", non_speech=" +
                                std::to_string(other.size()) + ")");
  }
  auto& major = speech.size() > other.size() ? speech : other;
  const std::size_t keep = std::min(speech.size(), other.size());
  Rng rng = make_rng(derive_seed(seed, "rebalance"));
  std::shuffle(major.begin(), major.end(), rng);
  major.resize(keep);

  std::vector<std::size_t> idx;
  idx.reserve(2 * keep);
  idx.insert(idx.end(), speech.begin(), speech.end());
  idx.insert(idx.end(), other.begin(), other.end());
  std::sort(idx.begin(), idx.end());
  std::vector<Item> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(items[i]);
  return out;
}

// Writes `n_speech` speech-like and `n_noise` noise-like one-second clips to
// `dir/audio/` and returns their manifest (not written to disk).
inline std::vector<ManifestEntry> synth_corpus(std::size_t n_speech,
                                               std::size_t n_noise,
                                               std::uint64_t seed,
                                               const std::filesystem::path& dir) {
  constexpr double kClipSeconds = 1.0;
  const auto audio_dir = dir / "audio";
  std::filesystem::create_directories(audio_dir);
  std::vector<ManifestEntry> out;
  out.reserve(n_speech + n_noise);
  auto emit = [&](const char* stem, std::size_t i, Label label, const Waveform& w) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%05zu.wav", stem, i);
    const auto path = audio_dir / name;
    save_wav(path, w);
    out.push_back({path.string(), 0.0, kClipSeconds, label,
                   label == Label::kSpeech ? std::optional(Condition::kClean)
                                           : std::nullopt});
  };
  const auto speech_root = derive_seed(seed, "synth.speech");
  const auto noise_root = derive_seed(seed, "synth.noise");
  for (std::size_t i = 0; i < n_speech; ++i) {
    emit("speech", i, Label::kSpeech,
         synth_speech_clip(derive_seed(speech_root, 0, i), kClipSeconds));
  }
  for (std::size_t i = 0; i < n_noise; ++i) {
    emit("noise", i, Label::kNonSpeech,
         synth_noise_clip(derive_seed(noise_root, 0, i), kClipSeconds));
  }
  return out;
}

}  // namespace marblevad
