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

// Frame-level evaluation: label alignment, ROC, AUROC and per-condition TPR
// at a fixed false positive rate.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "marblevad/inference.hpp"
#include "marblevad/types.hpp"

namespace marblevad {

inline constexpr double kDefaultTargetFpr = 0.315;

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FrameLabels {
  // One entry per timeline frame; nullopt = outside every interval.
  std::vector<std::optional<Condition>> conditions;
  std::size_t excluded = 0;
};

// Each frame takes the condition of the interval containing its midpoint.
// Intervals are half-open, so a midpoint on a boundary goes to the right.
inline FrameLabels align_labels(std::vector<LabeledInterval> intervals, std::size_t n_frames,
                                double frame_len_s = kFrameSeconds) {
  for (const auto& iv : intervals) {
    if (!(iv.start_s < iv.end_s)) {
      throw EvalError("label interval [" + std::to_string(iv.start_s) + ", " +
                      std::to_string(iv.end_s) + ") is empty");
    }
  }
  std::sort(intervals.begin(), intervals.end(),
            [](const auto& a, const auto& b) { return a.start_s < b.start_s; });
  for (std::size_t i = 1; i < intervals.size(); ++i) {
    if (intervals[i].start_s < intervals[i - 1].end_s - 1e-9) {
      throw EvalError("label intervals overlap at " + std::to_string(intervals[i].start_s) +
                      " s");
    }
  }
  // Snap near-coincident values so 0.035 and 3.5 * 0.01 compare equal.
  auto at_or_after = [](double t, double bound) { return t >= bound - 1e-9; };

  FrameLabels out;
  out.conditions.assign(n_frames, std::nullopt);
  std::size_t k = 0;
  for (std::size_t f = 0; f < n_frames; ++f) {
    const double mid = (static_cast<double>(f) + 0.5) * frame_len_s;
    while (k < intervals.size() && at_or_after(mid, intervals[k].end_s)) ++k;
    if (k < intervals.size() && at_or_after(mid, intervals[k].start_s)) {
      out.conditions[f] = intervals[k].condition;
    } else {
      ++out.excluded;
    }
  }
  return out;
}

inline FrameLabels align_labels(const std::vector<LabeledInterval>& intervals,
                                const FrameTimeline& tl) {
  return align_labels(intervals, tl.n_frames, tl.frame_len_s);
}

// Staircase ROC; point 0 is (0, 0) at threshold +inf and each later point
// lowers the threshold to the next distinct score (predict positive if
// score >= threshold).
struct RocCurve {
  std::vector<double> thresholds;
  std::vector<std::size_t> tp;
  std::vector<std::size_t> fp;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;

  std::size_t size() const { return thresholds.size(); }
  double tpr(std::size_t i) const { return static_cast<double>(tp[i]) / n_pos; }
  double fpr(std::size_t i) const { return static_cast<double>(fp[i]) / n_neg; }
};

inline RocCurve roc_curve(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw EvalError("roc_curve: size mismatch");
  std::vector<std::size_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (!std::isfinite(scores[i])) throw EvalError("roc_curve: non-finite score");
    idx[i] = i;
  }
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  RocCurve c;
  for (bool p : positive) (p ? c.n_pos : c.n_neg)++;
  if (c.n_pos == 0 || c.n_neg == 0) {
    throw EvalError("roc_curve needs both positive and negative frames (got " +
                    std::to_string(c.n_pos) + " positive, " + std::to_string(c.n_neg) +
                    " negative)");
  }
  c.thresholds.push_back(std::numeric_limits<double>::infinity());
  c.tp.push_back(0);
  c.fp.push_back(0);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double s = scores[idx[i]];
    for (; i < idx.size() && scores[idx[i]] == s; ++i) (positive[idx[i]] ? tp : fp)++;
    c.thresholds.push_back(s);
    c.tp.push_back(tp);
    c.fp.push_back(fp);
  }
  return c;
}

// Trapezoidal area, accumulated in integer counts and divided once.
inline double auroc(const RocCurve& c) {
  long double twice_area = 0.0L;
  for (std::size_t i = 1; i < c.size(); ++i) {
    twice_area += static_cast<long double>(c.fp[i] - c.fp[i - 1]) *
                  static_cast<long double>(c.tp[i] + c.tp[i - 1]);
  }
  return static_cast<double>(twice_area /
                             (2.0L * static_cast<long double>(c.n_pos) * c.n_neg));
}

struct OperatingPoint {
  double tpr = 0.0;
  double threshold = 0.0;  // from the lower-FPR bracketing point
  // Interpolation between point lo (fpr <= target) and hi (fpr > target);
  // alpha = 0 when lo is attained exactly or is the last point.
  std::size_t lo = 0;
  std::size_t hi = 0;
  double alpha = 0.0;
};

inline OperatingPoint operating_point(const RocCurve& c, double target_fpr) {
  if (!(target_fpr >= 0.0 && target_fpr <= 1.0)) {
    throw EvalError("target FPR must be in [0, 1]");
  }
  // Highest-TPR point with fpr <= target is the last such point.
  std::size_t lo = 0;
  while (lo + 1 < c.size() && c.fpr(lo + 1) <= target_fpr) ++lo;
  OperatingPoint op;
  op.lo = lo;
  op.hi = lo;
  op.threshold = c.thresholds[lo];
  op.tpr = c.tpr(lo);
  if (lo + 1 < c.size() && c.fpr(lo) < target_fpr) {
    op.hi = lo + 1;
    op.alpha = (target_fpr - c.fpr(lo)) / (c.fpr(lo + 1) - c.fpr(lo));
    op.tpr = (1.0 - op.alpha) * c.tpr(lo) + op.alpha * c.tpr(lo + 1);
  }
  return op;
}

inline std::pair<double, double> tpr_at_fpr(const RocCurve& c,
                                            double target_fpr = kDefaultTargetFpr) {
  const auto op = operating_point(c, target_fpr);
  return {op.tpr, op.threshold};
}

struct EvalReport {
  double target_fpr = kDefaultTargetFpr;
  double threshold = 0.0;
  double alpha = 0.0;
  std::optional<double> tpr_clean, tpr_noise, tpr_music;
  double tpr_all = 0.0;
  double auroc_all = 0.0;
  // Indexed by Condition.
  std::array<std::size_t, 4> frame_counts{};
  std::size_t excluded_frames = 0;

  std::size_t scored_frames() const {
    return frame_counts[0] + frame_counts[1] + frame_counts[2] + frame_counts[3];
  }
};

// One global threshold fixes FPR on no_speech frames; each speech condition
// is then scored at that same (interpolated) operating point.
inline EvalReport condition_report(std::span<const double> scores,
                                   std::span<const std::optional<Condition>> conditions,
                                   double target_fpr = kDefaultTargetFpr) {
  if (scores.size() != conditions.size()) {
    throw EvalError("condition_report: " + std::to_string(scores.size()) + " scores vs " +
                    std::to_string(conditions.size()) + " labelled frames");
  }
  EvalReport r;
  r.target_fpr = target_fpr;
  std::vector<double> s;
  std::vector<bool> pos;
  std::vector<Condition> cond;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!conditions[i]) {
      ++r.excluded_frames;
      continue;
    }
    s.push_back(scores[i]);
    pos.push_back(is_speech(*conditions[i]));
    cond.push_back(*conditions[i]);
    r.frame_counts[static_cast<std::size_t>(*conditions[i])]++;
  }
  const RocCurve curve = roc_curve(s, pos);
  r.auroc_all = auroc(curve);
  const auto op = operating_point(curve, target_fpr);
  r.threshold = op.threshold;
  r.alpha = op.alpha;
  r.tpr_all = op.tpr;

  const double t_lo = curve.thresholds[op.lo];
  const double t_hi = curve.thresholds[op.hi];
  auto tpr_for = [&](Condition c) -> std::optional<double> {
    const std::size_t n = r.frame_counts[static_cast<std::size_t>(c)];
    if (n == 0) return std::nullopt;
    std::size_t at_lo = 0, at_hi = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (cond[i] != c) continue;
      at_lo += s[i] >= t_lo;
      at_hi += s[i] >= t_hi;
    }
    return (1.0 - op.alpha) * at_lo / n + op.alpha * at_hi / n;
  };
  r.tpr_clean = tpr_for(Condition::kClean);
  r.tpr_noise = tpr_for(Condition::kNoise);
  r.tpr_music = tpr_for(Condition::kMusic);
  return r;
}

inline EvalReport condition_report(const FrameTimeline& tl, const FrameLabels& labels,
                                   double target_fpr = kDefaultTargetFpr) {
  return condition_report(tl.scores, labels.conditions, target_fpr);
}

// ---------------------------------------------------------------------------
// I/O

inline std::vector<LabeledInterval> read_labels_csv(std::istream& in,
                                                    const std::string& name = "<labels>") {
  std::string line;
  if (!std::getline(in, line) || line.rfind("start_s,end_s,condition", 0) != 0) {
    throw EvalError(name + ": expected header start_s,end_s,condition");
  }
  std::vector<LabeledInterval> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, c;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    try {
      out.push_back({std::stod(a), std::stod(b), parse_condition(c)});
    } catch (const std::exception& e) {
      throw EvalError(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_labels_csv(std::ostream& out, const std::vector<LabeledInterval>& labels) {
  out << "start_s,end_s,condition\n";
  out.precision(10);
  for (const auto& l : labels) {
    out << l.start_s << ',' << l.end_s << ',' << to_string(l.condition) << '\n';
  }
}

inline void write_roc_csv(std::ostream& out, const RocCurve& c) {
  out << "threshold,fpr,tpr\n";
  out.precision(10);
  for (std::size_t i = 0; i < c.size(); ++i) {
    out << c.thresholds[i] << ',' << c.fpr(i) << ',' << c.tpr(i) << '\n';
  }
}

inline void write_report_csv(std::ostream& out, const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) {
    if (!v) return std::string();
    std::ostringstream s;
    s.precision(10);
    s << *v;
    return s.str();
  };
  out << "target_fpr,threshold,clean,noise,music,all,auroc,n_clean,n_noise,n_music,"
         "n_no_speech,n_excluded\n";
  out.precision(10);
  out << r.target_fpr << ',' << r.threshold << ',' << opt(r.tpr_clean) << ','
      << opt(r.tpr_noise) << ',' << opt(r.tpr_music) << ',' << r.tpr_all << ',' << r.auroc_all;
  for (auto n : r.frame_counts) out << ',' << n;
  out << ',' << r.excluded_frames << '\n';
}

inline void write_report_text(std::ostream& out, const EvalReport& r) {
  auto cell = [](const std::optional<double>& v) {
    std::ostringstream s;
    if (v) {
      s << std::fixed << std::setprecision(3) << *v;
    } else {
      s << "-";
    }
    return s.str();
  };
  std::ostringstream head;
  head << "TPR for FPR = " << r.target_fpr;
  out << std::left << std::setw(24) << head.str() << std::setw(9) << "Clean" << std::setw(9)
      << "+Noise" << std::setw(9) << "+Music" << std::setw(9) << "All" << "AUROC\n";
  out << std::setw(24) << "" << std::setw(9) << cell(r.tpr_clean) << std::setw(9)
      << cell(r.tpr_noise) << std::setw(9) << cell(r.tpr_music) << std::setw(9)
      << cell(r.tpr_all) << cell(r.auroc_all) << '\n';
  out << "threshold " << std::setprecision(6) << r.threshold << ", frames: clean "
      << r.frame_counts[0] << ", noise " << r.frame_counts[1] << ", music " << r.frame_counts[2]
      << ", no_speech " << r.frame_counts[3] << ", excluded " << r.excluded_frames << '\n';
}

}  // namespace marblevad
