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

// End-to-end commands behind the `vad` executable. Each takes explicit
// arguments and a stream for progress text so tests can drive them directly.

#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "marblevad/config.hpp"
#include "marblevad/corpus.hpp"
#include "marblevad/evaluation.hpp"
#include "marblevad/inference.hpp"
#include "marblevad/marblenet.hpp"
#include "marblevad/synth.hpp"
#include "marblevad/training.hpp"

namespace marblevad {

namespace fs = std::filesystem;

// Sibling path with the extension replaced: ("out/frames.csv", ".intervals.csv")
// -> "out/frames.intervals.csv".
inline fs::path sibling(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out.replace_extension();
  out += suffix;
  return out;
}

inline void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  fs::path out_dir;
  std::size_t n_speech = 100;
  std::size_t n_noise = 100;
  std::uint64_t seed = 0;
  // Long labelled recordings for frame-level evaluation.
  std::size_t n_recordings = 0;
  double recording_s = 30.0;
};

struct SynthSummary {
  fs::path manifest;
  std::vector<ManifestEntry> entries;
  std::vector<fs::path> recordings;
};

inline fs::path recording_labels_path(const fs::path& wav) {
  return sibling(wav, ".labels.csv");
}

inline SynthSummary cmd_synth(const SynthOptions& opt, std::ostream& log) {
  std::error_code ec;
  fs::create_directories(opt.out_dir, ec);
  if (ec || !fs::is_directory(opt.out_dir)) {
    throw std::runtime_error("cannot create output directory " + opt.out_dir.string());
  }
  SynthSummary s;
  s.entries = synth_corpus(opt.n_speech, opt.n_noise, derive_seed(opt.seed, "data"),
                           opt.out_dir);
  s.manifest = opt.out_dir / "manifest.jsonl";
  write_manifest(s.manifest, s.entries);

  if (opt.n_recordings > 0) {
    const auto dir = opt.out_dir / "recordings";
    fs::create_directories(dir);
    RecordingOptions ro;
    ro.duration_s = opt.recording_s;
    const auto root = derive_seed(opt.seed, "recordings");
    for (std::size_t i = 0; i < opt.n_recordings; ++i) {
      const auto rec = synth_recording(derive_seed(root, 0, i), ro);
      char name[32];
      std::snprintf(name, sizeof(name), "rec_%03zu.wav", i);
      const auto wav = dir / name;
      save_wav(wav, rec.audio);
      std::ofstream lab(recording_labels_path(wav));
      write_labels_csv(lab, rec.labels);
      s.recordings.push_back(wav);
    }
  }
  log << "wrote " << s.entries.size() << " clips (" << opt.n_speech << " speech, "
      << opt.n_noise << " non_speech) and " << s.recordings.size() << " recordings to "
      << opt.out_dir.string() << "\nmanifest: " << s.manifest.string() << '\n';
  return s;
}

// ---------------------------------------------------------------------------
// prepare

struct SplitCounts {
  std::size_t files_speech = 0, files_non_speech = 0;
  std::size_t segments_speech = 0, segments_non_speech = 0;
};

struct PrepareSummary {
  std::map<std::string, SplitCounts> splits;  // "train", "val", "test"
  std::map<std::string, fs::path> manifests;
  std::vector<std::string> warnings;
};

// Train/val speech uses the central crop; test speech and all non-speech
// use strided cuts. Each split is then rebalanced. Splitting is done per
// label so both classes keep the configured ratio.
inline PrepareSummary cmd_prepare(const fs::path& manifest, const RunConfig& cfg,
                                  const fs::path& out_dir, std::uint64_t seed,
                                  std::ostream& log) {
  const auto entries = read_manifest(manifest);
  if (entries.empty()) throw ManifestError(manifest.string() + ": manifest is empty", 0);

  std::vector<ManifestEntry> speech, other;
  for (const auto& e : entries) (e.label == Label::kSpeech ? speech : other).push_back(e);
  const auto data_seed = derive_seed(seed, "data");
  auto split_label = [&](const std::vector<ManifestEntry>& part, const char* name) {
    if (part.empty()) return Splits{};
    SplitSpec spec{cfg.data.train_ratio, cfg.data.val_ratio, cfg.data.test_ratio,
                   derive_seed(data_seed, name)};
    return split_manifest(part, spec);
  };
  const Splits sp = split_label(speech, "speech");
  const Splits np = split_label(other, "non_speech");

  PrepareSummary summary;
  fs::create_directories(out_dir);
  const std::pair<const char*, std::pair<const std::vector<ManifestEntry>*,
                                         const std::vector<ManifestEntry>*>>
      parts[] = {{"train", {&sp.train, &np.train}},
                 {"val", {&sp.val, &np.val}},
                 {"test", {&sp.test, &np.test}}};
  for (const auto& [name, files] : parts) {
    const auto& [sfiles, nfiles] = files;
    std::vector<ManifestEntry> cuts;
    const bool central = std::string(name) != "test";
    for (const auto& e : *sfiles) {
      if (central) {
        cuts.push_back(plan_train_segment(e, cfg.data.seg_len_s));
      } else {
        for (auto& c : plan_strided_segments(e, cfg.data.seg_len_s, cfg.data.stride_s,
                                             &summary.warnings)) {
          cuts.push_back(std::move(c));
        }
      }
    }
    for (const auto& e : *nfiles) {
      for (auto& c :
           plan_strided_segments(e, cfg.data.seg_len_s, cfg.data.stride_s, &summary.warnings)) {
        cuts.push_back(std::move(c));
      }
    }
    bool has_speech = false, has_other = false;
    for (const auto& c : cuts) (c.label == Label::kSpeech ? has_speech : has_other) = true;
    if (cfg.data.rebalance && has_speech && has_other) {
      cuts = rebalance(cuts, derive_seed(data_seed, std::string("rebalance.") + name));
    } else if (cfg.data.rebalance && !cuts.empty()) {
      summary.warnings.push_back(std::string(name) + " split has a single class; not rebalanced");
    }
    SplitCounts c;
    c.files_speech = sfiles->size();
    c.files_non_speech = nfiles->size();
    for (const auto& cut : cuts) {
      (cut.label == Label::kSpeech ? c.segments_speech : c.segments_non_speech)++;
    }
    const auto path = out_dir / (std::string(name) + ".jsonl");
    write_manifest(path, cuts);
    summary.splits[name] = c;
    summary.manifests[name] = path;
  }

  for (const auto& w : summary.warnings) log << "warning: " << w << '\n';
  log << std::left << std::setw(7) << "split" << std::setw(22) << "files (speech/non)"
      << "segments (speech/non)\n";
  for (const char* name : {"train", "val", "test"}) {
    const auto& c = summary.splits[name];
    std::ostringstream f, s;
    f << c.files_speech + c.files_non_speech << " (" << c.files_speech << '/'
      << c.files_non_speech << ')';
    s << c.segments_speech + c.segments_non_speech << " (" << c.segments_speech << '/'
      << c.segments_non_speech << ')';
    log << std::setw(7) << name << std::setw(22) << f.str() << s.str() << '\n';
  }
  return summary;
}

// ---------------------------------------------------------------------------
// train

struct TrainSummary {
  fs::path checkpoint;        // best validation loss
  fs::path final_checkpoint;  // last epoch
  fs::path log_csv;
  int best_epoch = -1;
  SegmentEval val;            // of the saved (best) model
  TrainLog log;
};

inline std::vector<Segment> load_split(const RunConfig& cfg, const std::string& split) {
  if (cfg.data.prepared_dir.empty()) {
    throw ConfigError("data.prepared_dir is not set (run `prepare` first)");
  }
  const auto path = fs::path(cfg.data.prepared_dir) / (split + ".jsonl");
  return load_segments(read_manifest(path));
}

inline TrainSummary cmd_train(const RunConfig& cfg, const fs::path& ckpt, std::uint64_t seed,
                              std::ostream& log) {
  cfg.model.validate();
  const auto train_set = load_split(cfg, "train");
  const auto val_set = load_split(cfg, "val");
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(seed, "train");

  Model model(cfg.model, derive_seed(seed, "init"));
  model.set_feature_kind(tc.feature_kind);
  log << model.config().name() << ": " << model.param_count() << " parameters, "
      << train_set.size() << " train / " << val_set.size() << " val segments\n";

  TrainHooks hooks;
  hooks.on_epoch = [&log](const EpochRecord& r) {
    log << "epoch " << r.epoch << "  train_acc " << std::fixed << std::setprecision(4)
        << r.train_accuracy << "  val_acc " << r.val_accuracy << "  val_loss " << r.val_loss
        << std::defaultfloat << '\n';
  };
  auto result = train(model, train_set, val_set, tc, hooks);

  TrainSummary s;
  ensure_parent(ckpt);
  s.checkpoint = ckpt;
  s.final_checkpoint = sibling(ckpt, ".final.ckpt");
  s.log_csv = sibling(ckpt, ".log.csv");
  s.best_epoch = result.best_epoch;
  s.log = result.log;
  Model& best = result.best ? *result.best : model;
  best.save(s.checkpoint);
  model.save(s.final_checkpoint);
  {
    std::ofstream out(s.log_csv);
    write_csv(out, result.log);
  }
  const FeatureExtractor fx(tc.feature_kind, tc.frame_spec, cfg.model.input_features,
                            cfg.model.input_features);
  s.val = evaluate_segments(best, val_set, fx);
  log << "saved " << s.checkpoint.string() << " (best epoch " << s.best_epoch << "), final "
      << s.final_checkpoint.string() << "\nval accuracy " << s.val.accuracy << ", val loss "
      << s.val.loss << "\nlog " << s.log_csv.string() << '\n';
  return s;
}

// ---------------------------------------------------------------------------
// infer

inline FeatureExtractor extractor_for(const Model& model, const FrameSpec& spec = {}) {
  const auto& c = model.config();
  return FeatureExtractor(model.feature_kind(), spec, c.input_features, c.input_features);
}

// Frame timeline for one recording. filter: none | median | mean | shift.
inline FrameTimeline score_recording(Model& model, const Waveform& w, const InferConfig& ic,
                                     const FeatureExtractor& fx) {
  if (ic.filter == "shift") return frames_by_shift(model, w, ic.seg_len_s, fx);
  const auto filter = parse_filter(ic.filter);
  const auto scores = sliding_scores(model, w, ic.seg_len_s, ic.overlap, fx);
  return smooth(scores, w.size(), filter, w.sample_rate);
}

struct InferSummary {
  fs::path frames_csv;
  fs::path intervals_csv;
  FrameTimeline timeline;
  std::vector<DecisionInterval> intervals;
};

inline InferSummary cmd_infer(const fs::path& ckpt, const fs::path& wav, const InferConfig& ic,
                              const fs::path& out_csv, std::ostream& log) {
  Model model = Model::load(ckpt);
  const Waveform w = load_wav(wav);
  require_sample_rate(w, wav.string());
  InferSummary s;
  s.timeline = score_recording(model, w, ic, extractor_for(model));
  s.intervals = decisions_to_intervals(s.timeline, ic.min_duration_s);
  ensure_parent(out_csv);
  s.frames_csv = out_csv;
  s.intervals_csv = sibling(out_csv, ".intervals.csv");
  {
    std::ofstream out(s.frames_csv);
    if (!out) throw std::runtime_error(out_csv.string() + ": cannot open for writing");
    write_frames_csv(out, s.timeline);
  }
  {
    std::ofstream out(s.intervals_csv);
    write_intervals_csv(out, s.intervals);
  }
  std::size_t speech = 0;
  for (bool d : s.timeline.decisions) speech += d;
  log << s.timeline.n_frames << " frames (" << speech << " speech), " << s.intervals.size()
      << " intervals\nframes " << s.frames_csv.string() << "\nintervals "
      << s.intervals_csv.string() << '\n';
  return s;
}

// ---------------------------------------------------------------------------
// eval

struct EvalSummary {
  EvalReport report;
  fs::path report_txt, report_csv, roc_csv;
};

inline EvalSummary evaluate_timeline(const FrameTimeline& tl,
                                     const std::vector<LabeledInterval>& labels,
                                     double target_fpr, const fs::path& out,
                                     std::ostream& log) {
  const auto aligned = align_labels(labels, tl);
  EvalSummary s;
  s.report = condition_report(tl, aligned, target_fpr);

  std::vector<double> sc;
  std::vector<bool> pos;
  for (std::size_t f = 0; f < tl.n_frames; ++f) {
    if (!aligned.conditions[f]) continue;
    sc.push_back(tl.scores[f]);
    pos.push_back(is_speech(*aligned.conditions[f]));
  }
  const auto curve = roc_curve(sc, pos);

  ensure_parent(out);
  s.report_txt = out;
  // "r.txt" -> r.csv, r.roc.csv; any other name is extended, never replaced,
  // so "rec.report" cannot clobber the frame CSV "rec.csv".
  fs::path base = out;
  if (out.extension() == ".txt") base.replace_extension();
  s.report_csv = base;
  s.report_csv += ".csv";
  s.roc_csv = base;
  s.roc_csv += ".roc.csv";
  {
    std::ofstream o(s.report_txt);
    if (!o) throw std::runtime_error(out.string() + ": cannot open for writing");
    write_report_text(o, s.report);
  }
  {
    std::ofstream o(s.report_csv);
    write_report_csv(o, s.report);
  }
  {
    std::ofstream o(s.roc_csv);
    write_roc_csv(o, curve);
  }
  write_report_text(log, s.report);
  return s;
}

inline EvalSummary cmd_eval(const fs::path& scores_csv, const fs::path& labels_csv,
                            double target_fpr, const fs::path& out, std::ostream& log) {
  std::ifstream sin(scores_csv);
  if (!sin) throw std::runtime_error(scores_csv.string() + ": cannot open");
  const auto tl = read_frames_csv(sin, scores_csv.string());
  std::ifstream lin(labels_csv);
  if (!lin) throw std::runtime_error(labels_csv.string() + ": cannot open");
  const auto labels = read_labels_csv(lin, labels_csv.string());
  return evaluate_timeline(tl, labels, target_fpr, out, log);
}

// ---------------------------------------------------------------------------
// describe

inline void describe(const MarbleNetConfig& cfg, std::ostream& out) {
  cfg.validate();
  Model m(cfg, 0);
  out << cfg.name() << '\n';
  write_breakdown(out, m.param_breakdown());
  out << "closed-form count " << expected_param_count(cfg) << '\n';
}

// ---------------------------------------------------------------------------
// Labelled recordings and pooled frame-level evaluation.

struct EvalRecording {
  std::string name;
  Waveform audio;
  std::vector<LabeledInterval> labels;
};

inline std::vector<EvalRecording> load_recordings(const fs::path& dir) {
  std::vector<fs::path> wavs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".wav") wavs.push_back(e.path());
  }
  std::sort(wavs.begin(), wavs.end());
  std::vector<EvalRecording> out;
  for (const auto& w : wavs) {
    std::ifstream lab(recording_labels_path(w));
    if (!lab) throw std::runtime_error(w.string() + ": no labels file next to it");
    out.push_back({w.filename().string(), load_wav(w),
                   read_labels_csv(lab, recording_labels_path(w).string())});
  }
  if (out.empty()) throw std::runtime_error(dir.string() + ": no recordings found");
  return out;
}

// All recordings' frames pooled into one report.
inline EvalReport evaluate_recordings(Model& model, const std::vector<EvalRecording>& recs,
                                      const InferConfig& ic, double target_fpr) {
  const auto fx = extractor_for(model);
  std::vector<double> scores;
  std::vector<std::optional<Condition>> conds;
  for (const auto& r : recs) {
    const auto tl = score_recording(model, r.audio, ic, fx);
    const auto aligned = align_labels(r.labels, tl);
    scores.insert(scores.end(), tl.scores.begin(), tl.scores.end());
    conds.insert(conds.end(), aligned.conditions.begin(), aligned.conditions.end());
  }
  return condition_report(scores, conds, target_fpr);
}

// ---------------------------------------------------------------------------
// Feature comparison (MFCC vs log-mel), one row per feature kind.

struct FeatureTrial {
  FeatureKind kind = FeatureKind::kMfcc;
  std::uint64_t seed = 0;
  double test_accuracy = 0.0;
  EvalReport report;
};

struct MeanCi {
  double mean = 0.0;
  double half_width = 0.0;  // 95% normal-approximation interval
  std::size_t n = 0;
};

inline MeanCi mean_ci(const std::vector<double>& v) {
  MeanCi m;
  m.n = v.size();
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    m.half_width = 1.96 * sd / std::sqrt(static_cast<double>(v.size()));
  }
  return m;
}

inline void write_feature_table(std::ostream& out, const std::vector<FeatureTrial>& trials,
                                double target_fpr) {
  auto cell = [](const std::vector<double>& v) {
    std::ostringstream s;
    if (v.empty()) return std::string("-");
    const auto m = mean_ci(v);
    s << std::fixed << std::setprecision(3) << m.mean << "+-" << m.half_width;
    return s.str();
  };
  std::ostringstream head;
  head << "TPR for FPR=" << target_fpr;
  out << std::left << std::setw(17) << "" << std::setw(60) << head.str() << "AUROC\n";
  out << std::setw(17) << "Feature" << std::setw(15) << "Clean" << std::setw(15) << "+Noise"
      << std::setw(15) << "+Music" << std::setw(15) << "All" << std::setw(15) << "All"
      << "Seg. acc\n";
  for (FeatureKind kind : {FeatureKind::kMfcc, FeatureKind::kLogMel}) {
    std::vector<double> clean, noise, music, all, au, acc;
    for (const auto& t : trials) {
      if (t.kind != kind) continue;
      if (t.report.tpr_clean) clean.push_back(*t.report.tpr_clean);
      if (t.report.tpr_noise) noise.push_back(*t.report.tpr_noise);
      if (t.report.tpr_music) music.push_back(*t.report.tpr_music);
      all.push_back(t.report.tpr_all);
      au.push_back(t.report.auroc_all);
      acc.push_back(t.test_accuracy);
    }
    if (acc.empty()) continue;
    out << std::setw(17) << (kind == FeatureKind::kMfcc ? "MFCC" : "Mel spectrogram")
        << std::setw(15) << cell(clean) << std::setw(15) << cell(noise) << std::setw(15)
        << cell(music) << std::setw(15) << cell(all) << std::setw(15) << cell(au) << cell(acc)
        << '\n';
  }
}

inline void write_feature_trials_csv(std::ostream& out, const std::vector<FeatureTrial>& trials) {
  out << "feature,seed,test_accuracy,clean,noise,music,all,auroc\n";
  out.precision(10);
  auto opt = [](const std::optional<double>& v) {
    std::ostringstream s;
    s.precision(10);
    if (v) s << *v;
    return s.str();
  };
  for (const auto& t : trials) {
    out << to_string(t.kind) << ',' << t.seed << ',' << t.test_accuracy << ','
        << opt(t.report.tpr_clean) << ',' << opt(t.report.tpr_noise) << ','
        << opt(t.report.tpr_music) << ',' << t.report.tpr_all << ',' << t.report.auroc_all
        << '\n';
  }
}

// Trains one model per (feature kind, seed) on the prepared splits, scores
// the test split and the labelled recordings.
inline std::vector<FeatureTrial> compare_features(const RunConfig& cfg,
                                                  const std::vector<std::uint64_t>& seeds,
                                                  const std::vector<EvalRecording>& recs,
                                                  std::ostream& log) {
  const auto train_set = load_split(cfg, "train");
  const auto val_set = load_split(cfg, "val");
  const auto test_set = load_split(cfg, "test");
  std::vector<FeatureTrial> out;
  for (FeatureKind kind : {FeatureKind::kMfcc, FeatureKind::kLogMel}) {
    for (std::uint64_t seed : seeds) {
      TrainConfig tc = cfg.train;
      tc.feature_kind = kind;
      tc.seed = derive_seed(seed, "train");
      Model model(cfg.model, derive_seed(seed, "init"));
      auto result = train(model, train_set, val_set, tc);
      Model& best = result.best ? *result.best : model;
      FeatureTrial t;
      t.kind = kind;
      t.seed = seed;
      t.test_accuracy = evaluate_segments(best, test_set, extractor_for(best)).accuracy;
      t.report = evaluate_recordings(best, recs, cfg.infer, cfg.eval.target_fpr);
      log << to_string(kind) << " seed " << seed << ": test accuracy " << t.test_accuracy
          << ", AUROC " << t.report.auroc_all << '\n';
      out.push_back(std::move(t));
    }
  }
  return out;
}

}  // namespace marblevad
