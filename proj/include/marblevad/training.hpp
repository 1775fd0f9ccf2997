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

// Segment-classifier training: warmup-hold-polynomial-decay learning rate,
// SGD with momentum and coupled weight decay, per-sample seeded
// augmentation, per-epoch validation and best-validation-loss selection.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "marblevad/augment.hpp"
#include "marblevad/corpus.hpp"
#include "marblevad/features.hpp"
#include "marblevad/log.hpp"
#include "marblevad/marblenet.hpp"
#include "marblevad/nn/optim.hpp"
#include "marblevad/rng.hpp"

namespace marblevad {

struct TrainConfig {
  int epochs = 150;
  std::size_t batch_size = 128;
  double max_lr = 0.01;
  double min_lr = 0.001;
  double warmup_ratio = 0.05;
  double hold_ratio = 0.45;
  double poly_power = 2.0;
  double momentum = 0.9;
  double weight_decay = 0.001;
  std::uint64_t seed = 0;
  AugmentConfig augment{};
  FeatureKind feature_kind = FeatureKind::kMfcc;
  FrameSpec frame_spec{};

  void validate() const {
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be > 0");
    if (warmup_ratio < 0 || hold_ratio < 0 || warmup_ratio + hold_ratio > 1.0) {
      throw std::invalid_argument("warmup_ratio + hold_ratio must be <= 1");
    }
    if (min_lr > max_lr) throw std::invalid_argument("min_lr must be <= max_lr");
    augment.validate();
  }
};

// Linear warmup from 0, hold at max_lr, then
// min_lr + (max_lr - min_lr) * (1 - p)^power over the remaining steps.
inline double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
  if (total_steps == 0) return cfg.min_lr;
  const double s = static_cast<double>(std::min(step, total_steps));
  const double total = static_cast<double>(total_steps);
  const double warmup_end = cfg.warmup_ratio * total;
  const double hold_end = (cfg.warmup_ratio + cfg.hold_ratio) * total;
  if (s < warmup_end) return cfg.max_lr * s / warmup_end;
  if (s < hold_end) return cfg.max_lr;
  const double decay_len = total - hold_end;
  if (decay_len <= 0.0) return cfg.min_lr;
  const double p = std::clamp((s - hold_end) / decay_len, 0.0, 1.0);
  return cfg.min_lr + (cfg.max_lr - cfg.min_lr) * std::pow(1.0 - p, cfg.poly_power);
}

struct StepRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double val_loss = 0.0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

// One row per step and one per epoch.
inline void write_csv(std::ostream& out, const TrainLog& log) {
  out << "kind,index,lr,loss,train_accuracy,val_accuracy,val_loss\n";
  out.precision(9);
  for (const auto& s : log.steps) out << "step," << s.step << ',' << s.lr << ',' << s.loss << ",,,\n";
  for (const auto& e : log.epochs) {
    out << "epoch," << e.epoch << ",,," << e.train_accuracy << ',' << e.val_accuracy << ','
        << e.val_loss << '\n';
  }
}

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SegmentEval {
  double accuracy = 0.0;
  double loss = 0.0;
  // confusion[true][predicted], index 0 = non_speech, 1 = speech.
  std::array<std::array<std::size_t, 2>, 2> confusion{};
  std::size_t total() const {
    return confusion[0][0] + confusion[0][1] + confusion[1][0] + confusion[1][1];
  }
};

// Normalized features of one segment.
inline FeatureMatrix segment_features(const FeatureExtractor& fx, const Waveform& w) {
  return normalize(fx(w));
}

// Loads every cut of a segment manifest, reading each source file once.
inline std::vector<Segment> load_segments(const std::vector<ManifestEntry>& cuts) {
  std::map<std::string, Waveform> cache;
  std::vector<Segment> out;
  out.reserve(cuts.size());
  for (const auto& cut : cuts) {
    auto it = cache.find(cut.audio_path);
    if (it == cache.end()) {
      Waveform w = load_wav(cut.audio_path);
      require_sample_rate(w, cut.audio_path);
      it = cache.emplace(cut.audio_path, std::move(w)).first;
    }
    const Waveform& full = it->second;
    const std::size_t begin = seconds_to_samples(cut.offset_s, full.sample_rate);
    const std::size_t len = seconds_to_samples(cut.duration_s, full.sample_rate);
    if (begin + len > full.size()) {
      throw std::out_of_range(cut.audio_path + ": segment at " + std::to_string(cut.offset_s) +
                              " s runs past end of file");
    }
    Segment s;
    s.waveform.sample_rate = full.sample_rate;
    s.waveform.samples.assign(full.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                              full.samples.begin() + static_cast<std::ptrdiff_t>(begin + len));
    s.label = cut.label;
    s.source = cut;
    out.push_back(std::move(s));
  }
  return out;
}

template <typename T>
SegmentEval evaluate_features(MarbleNet<T>& model, const std::vector<FeatureMatrix>& feats,
                              const std::vector<int>& labels, std::size_t batch_size = 64) {
  if (feats.empty()) throw std::invalid_argument("evaluate_segments: no segments");
  nn::NoGradGuard guard;
  SegmentEval ev;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < feats.size(); i += batch_size) {
    const std::size_t n = std::min(batch_size, feats.size() - i);
    auto x = stack_features<T>(std::span(feats).subspan(i, n));
    auto logits = model.forward(x, nn::Mode::kEval);
    std::span<const int> lab(labels.data() + i, n);
    loss_sum += static_cast<double>(nn::softmax_cross_entropy(logits, lab).item()) * n;
    const auto p = nn::softmax_rows(logits);
    for (std::size_t b = 0; b < n; ++b) {
      const int pred = p[b * 2 + 1] >= T(0.5) ? 1 : 0;
      ev.confusion[lab[b]][pred]++;
      correct += pred == lab[b];
    }
  }
  ev.accuracy = static_cast<double>(correct) / feats.size();
  ev.loss = loss_sum / feats.size();
  return ev;
}

template <typename T>
SegmentEval evaluate_segments(MarbleNet<T>& model, const std::vector<Segment>& segments,
                              const FeatureExtractor& fx) {
  if (segments.empty()) throw std::invalid_argument("evaluate_segments: no segments");
  std::vector<FeatureMatrix> feats;
  std::vector<int> labels;
  for (const auto& s : segments) {
    feats.push_back(segment_features(fx, s.waveform));
    labels.push_back(static_cast<int>(s.label));
  }
  return evaluate_features(model, feats, labels);
}

template <typename T>
struct TrainResult {
  TrainLog log;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  std::optional<MarbleNet<T>> best;  // snapshot at lowest validation loss
};

struct TrainHooks {
  // Called after each epoch.
  std::function<void(const EpochRecord&)> on_epoch;
};

template <typename T>
TrainResult<T> train(MarbleNet<T>& model, const std::vector<Segment>& train_set,
                     const std::vector<Segment>& val_set, const TrainConfig& cfg,
                     const TrainHooks& hooks = {}) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) {
    throw std::invalid_argument("train: training and validation sets must be non-empty");
  }
  {
    bool speech = false, other = false;
    for (const auto& s : train_set) (s.label == Label::kSpeech ? speech : other) = true;
    if (!speech || !other) throw std::invalid_argument("train: both classes must be present");
  }

  const FeatureExtractor fx(cfg.feature_kind, cfg.frame_spec, model.config().input_features,
                            model.config().input_features);
  model.seed_dropout(derive_seed(cfg.seed, "dropout"));
  model.set_feature_kind(cfg.feature_kind);

  std::vector<int> train_labels, val_labels;
  for (const auto& s : train_set) train_labels.push_back(static_cast<int>(s.label));
  std::vector<FeatureMatrix> val_feats;
  for (const auto& s : val_set) {
    val_feats.push_back(segment_features(fx, s.waveform));
    val_labels.push_back(static_cast<int>(s.label));
  }
  std::vector<FeatureMatrix> clean_feats;
  if (!cfg.augment.enabled) {
    for (const auto& s : train_set) clean_feats.push_back(segment_features(fx, s.waveform));
  }

  const std::size_t n = train_set.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(cfg.epochs);
  const std::uint64_t shuffle_root = derive_seed(cfg.seed, "shuffle");
  const std::uint64_t augment_root = derive_seed(cfg.seed, "augment");

  TrainResult<T> result;
  auto& params = model.parameters();
  std::size_t step = 0;
  std::vector<std::size_t> order(n);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = make_rng(derive_seed(shuffle_root, static_cast<std::uint64_t>(epoch), 0));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    std::size_t correct = 0;
    for (std::size_t b0 = 0; b0 < n; b0 += cfg.batch_size, ++step) {
      const std::size_t bn = std::min(cfg.batch_size, n - b0);
      std::vector<FeatureMatrix> feats;
      std::vector<int> labels;
      feats.reserve(bn);
      for (std::size_t k = 0; k < bn; ++k) {
        const std::size_t idx = order[b0 + k];
        labels.push_back(train_labels[idx]);
        if (!cfg.augment.enabled) {
          feats.push_back(clean_feats[idx]);
          continue;
        }
        Rng rng = make_rng(derive_seed(augment_root, static_cast<std::uint64_t>(epoch), idx));
        Waveform w = train_set[idx].waveform;
        augment_waveform(w, cfg.augment, rng);
        feats.push_back(augment_features(segment_features(fx, w), cfg.augment, rng));
      }

      const double lr = lr_at(step, total_steps, cfg);
      auto x = stack_features<T>(feats);
      auto logits = model.forward(x, nn::Mode::kTrain);
      const auto diverged = [&] {
        return TrainError("non-finite loss at step " + std::to_string(step) + " (lr " +
                          std::to_string(lr) + ")");
      };
      for (T v : logits.vec()) {
        if (!std::isfinite(static_cast<double>(v))) throw diverged();
      }
      auto loss = nn::softmax_cross_entropy(logits, std::span<const int>(labels));
      const double loss_value = static_cast<double>(loss.item());
      if (!std::isfinite(loss_value)) throw diverged();
      const auto p = nn::softmax_rows(logits);
      for (std::size_t k = 0; k < bn; ++k) {
        correct += (p[k * 2 + 1] >= T(0.5) ? 1 : 0) == labels[k];
      }
      nn::zero_grad(std::span(params));
      loss.backward();
      nn::sgd_step(std::span(params), {lr, cfg.momentum, cfg.weight_decay});
      // An overflowing update would otherwise only surface in validation.
      for (const auto& prm : params) {
        for (T v : prm.tensor.vec()) {
          if (!std::isfinite(static_cast<double>(v))) throw diverged();
        }
      }
      result.log.steps.push_back({step, lr, loss_value});
    }

    SegmentEval val;
    try {
      val = evaluate_features(model, val_feats, val_labels);
    } catch (const std::domain_error&) {
      throw TrainError("non-finite validation loss after epoch " + std::to_string(epoch) +
                       " (step " + std::to_string(step) + ", lr " +
                       std::to_string(lr_at(step - 1, total_steps, cfg)) + ")");
    }
    EpochRecord rec{epoch, static_cast<double>(correct) / n, val.accuracy, val.loss};
    result.log.epochs.push_back(rec);
    if (result.best_epoch < 0 || val.loss < result.best_val_loss) {
      result.best_epoch = epoch;
      result.best_val_loss = val.loss;
      result.best.emplace(model.clone());
    }
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  nn::zero_grad(std::span(params));
  return result;
}

}  // namespace marblevad
