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

// Run configuration: flat "section.key = value" lines, '#' comments.
//
//   seed = 7
//   data.manifest = corpus/manifest.jsonl
//   train.epochs = 50
//   model.block_kernels = 13,15,17

#pragma once

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "marblevad/corpus.hpp"
#include "marblevad/evaluation.hpp"
#include "marblevad/features.hpp"
#include "marblevad/inference.hpp"
#include "marblevad/marblenet.hpp"
#include "marblevad/training.hpp"

namespace marblevad {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  std::string manifest;
  std::string prepared_dir;  // output of `prepare`, input of `train`
  double seg_len_s = kSegmentLength;
  double stride_s = kSegmentStride;
  double train_ratio = 0.8;
  double val_ratio = 0.1;
  double test_ratio = 0.1;
  bool rebalance = true;
};

struct InferConfig {
  double seg_len_s = kSegmentLength;
  double overlap = 0.875;
  std::string filter = "median";  // none | median | mean | shift
  double min_duration_s = 0.0;
};

struct EvalConfig {
  double target_fpr = kDefaultTargetFpr;
  std::string labels;
};

struct RunConfig {
  DataConfig data;
  MarbleNetConfig model;
  TrainConfig train;
  InferConfig infer;
  EvalConfig eval;
  std::optional<std::uint64_t> seed;
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double to_double(const std::string& v) {
  std::size_t pos = 0;
  const double d = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("not a number: " + v);
  return d;
}

template <typename U>
U to_unsigned(const std::string& v) {
  U out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw std::invalid_argument("not a non-negative integer: " + v);
  }
  return out;
}

inline int to_int(const std::string& v) {
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw std::invalid_argument("not an integer: " + v);
  }
  return out;
}

inline bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("not a boolean: " + v);
}

inline std::vector<std::size_t> to_size_list(const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_unsigned<std::size_t>(trim(item)));
  return out;
}

inline Range to_range(const std::string& v) {
  const auto comma = v.find(',');
  if (comma == std::string::npos) throw std::invalid_argument("expected lo,hi: " + v);
  return {to_double(trim(v.substr(0, comma))), to_double(trim(v.substr(comma + 1)))};
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = to_unsigned<std::uint64_t>(v); }},
      {"data.manifest", [](RunConfig& c, const std::string& v) { c.data.manifest = v; }},
      {"data.prepared_dir", [](RunConfig& c, const std::string& v) { c.data.prepared_dir = v; }},
      {"data.seg_len", [](RunConfig& c, const std::string& v) { c.data.seg_len_s = to_double(v); }},
      {"data.stride", [](RunConfig& c, const std::string& v) { c.data.stride_s = to_double(v); }},
      {"data.train_ratio",
       [](RunConfig& c, const std::string& v) { c.data.train_ratio = to_double(v); }},
      {"data.val_ratio", [](RunConfig& c, const std::string& v) { c.data.val_ratio = to_double(v); }},
      {"data.test_ratio",
       [](RunConfig& c, const std::string& v) { c.data.test_ratio = to_double(v); }},
      {"data.rebalance", [](RunConfig& c, const std::string& v) { c.data.rebalance = to_bool(v); }},

      {"features.kind",
       [](RunConfig& c, const std::string& v) { c.train.feature_kind = parse_feature_kind(v); }},
      {"features.win_s",
       [](RunConfig& c, const std::string& v) { c.train.frame_spec.win_len_s = to_double(v); }},
      {"features.hop_s",
       [](RunConfig& c, const std::string& v) { c.train.frame_spec.hop_s = to_double(v); }},
      {"features.fft_size",
       [](RunConfig& c, const std::string& v) {
         c.train.frame_spec.fft_size = to_unsigned<std::size_t>(v);
       }},
      {"features.n_mels",
       [](RunConfig& c, const std::string& v) {
         c.model.input_features = to_unsigned<std::size_t>(v);
       }},

      {"model.n_blocks",
       [](RunConfig& c, const std::string& v) { c.model.n_blocks = to_unsigned<std::size_t>(v); }},
      {"model.n_subblocks",
       [](RunConfig& c, const std::string& v) {
         c.model.n_subblocks = to_unsigned<std::size_t>(v);
       }},
      {"model.channels",
       [](RunConfig& c, const std::string& v) { c.model.channels = to_unsigned<std::size_t>(v); }},
      {"model.block_kernels",
       [](RunConfig& c, const std::string& v) { c.model.block_kernels = to_size_list(v); }},
      {"model.dropout", [](RunConfig& c, const std::string& v) { c.model.dropout_p = to_double(v); }},

      {"train.epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = to_int(v); }},
      {"train.batch_size",
       [](RunConfig& c, const std::string& v) {
         c.train.batch_size = to_unsigned<std::size_t>(v);
       }},
      {"train.max_lr", [](RunConfig& c, const std::string& v) { c.train.max_lr = to_double(v); }},
      {"train.min_lr", [](RunConfig& c, const std::string& v) { c.train.min_lr = to_double(v); }},
      {"train.warmup_ratio",
       [](RunConfig& c, const std::string& v) { c.train.warmup_ratio = to_double(v); }},
      {"train.hold_ratio",
       [](RunConfig& c, const std::string& v) { c.train.hold_ratio = to_double(v); }},
      {"train.momentum", [](RunConfig& c, const std::string& v) { c.train.momentum = to_double(v); }},
      {"train.weight_decay",
       [](RunConfig& c, const std::string& v) { c.train.weight_decay = to_double(v); }},
      {"train.augment",
       [](RunConfig& c, const std::string& v) { c.train.augment.enabled = to_bool(v); }},
      {"train.augment_p",
       [](RunConfig& c, const std::string& v) { c.train.augment.p_wave_augment = to_double(v); }},
      {"train.shift_ms",
       [](RunConfig& c, const std::string& v) { c.train.augment.shift_ms = to_range(v); }},
      {"train.noise_db",
       [](RunConfig& c, const std::string& v) { c.train.augment.noise_db = to_range(v); }},

      {"infer.seg_len", [](RunConfig& c, const std::string& v) { c.infer.seg_len_s = to_double(v); }},
      {"infer.overlap", [](RunConfig& c, const std::string& v) { c.infer.overlap = to_double(v); }},
      {"infer.filter", [](RunConfig& c, const std::string& v) { c.infer.filter = v; }},
      {"infer.min_duration",
       [](RunConfig& c, const std::string& v) { c.infer.min_duration_s = to_double(v); }},

      {"eval.target_fpr",
       [](RunConfig& c, const std::string& v) { c.eval.target_fpr = to_double(v); }},
      {"eval.labels", [](RunConfig& c, const std::string& v) { c.eval.labels = v; }},
  };
  return table;
}

}  // namespace config_detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : config_detail::setters()) out.push_back(k);
  return out;
}

// Applies one key/value pair; `where` prefixes error messages.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value,
                             const std::string& where = "") {
  const auto& table = config_detail::setters();
  const auto it = table.find(key);
  const std::string prefix = where.empty() ? "" : where + ": ";
  if (it == table.end()) throw ConfigError(prefix + "unknown key '" + key + "'");
  try {
    it->second(cfg, value);
  } catch (const std::exception& e) {
    throw ConfigError(prefix + key + ": " + e.what());
  }
}

// Parses "key=value" (flag form used by --set).
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  set_config_value(cfg, config_detail::trim(assignment.substr(0, eq)),
                   config_detail::trim(assignment.substr(eq + 1)), "--set");
}

inline RunConfig parse_config(std::istream& in, const std::string& name = "<config>",
                              RunConfig cfg = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = config_detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    const std::string where = name + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    set_config_value(cfg, config_detail::trim(t.substr(0, eq)),
                     config_detail::trim(t.substr(eq + 1)), where);
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in, path.string());
}

// Flag > config file > $VAD_SEED > 0.
inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag,
                                  const RunConfig& cfg) {
  if (flag) return *flag;
  if (cfg.seed) return *cfg.seed;
  if (const char* env = std::getenv("VAD_SEED"); env != nullptr && *env != '\0') {
    try {
      return config_detail::to_unsigned<std::uint64_t>(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("VAD_SEED is not an integer: ") + env);
    }
  }
  return 0;
}

inline void write_config(std::ostream& out, const RunConfig& c) {
  auto list = [](const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  out.precision(10);
  if (c.seed) out << "seed = " << *c.seed << '\n';
  out << "data.manifest = " << c.data.manifest << '\n'
      << "data.prepared_dir = " << c.data.prepared_dir << '\n'
      << "data.seg_len = " << c.data.seg_len_s << '\n'
      << "data.stride = " << c.data.stride_s << '\n'
      << "data.train_ratio = " << c.data.train_ratio << '\n'
      << "data.val_ratio = " << c.data.val_ratio << '\n'
      << "data.test_ratio = " << c.data.test_ratio << '\n'
      << "data.rebalance = " << (c.data.rebalance ? "true" : "false") << '\n'
      << "features.kind = " << to_string(c.train.feature_kind) << '\n'
      << "features.win_s = " << c.train.frame_spec.win_len_s << '\n'
      << "features.hop_s = " << c.train.frame_spec.hop_s << '\n'
      << "features.fft_size = " << c.train.frame_spec.fft_size << '\n'
      << "features.n_mels = " << c.model.input_features << '\n'
      << "model.n_blocks = " << c.model.n_blocks << '\n'
      << "model.n_subblocks = " << c.model.n_subblocks << '\n'
      << "model.channels = " << c.model.channels << '\n'
      << "model.block_kernels = " << list(c.model.block_kernels) << '\n'
      << "model.dropout = " << c.model.dropout_p << '\n'
      << "train.epochs = " << c.train.epochs << '\n'
      << "train.batch_size = " << c.train.batch_size << '\n'
      << "train.max_lr = " << c.train.max_lr << '\n'
      << "train.min_lr = " << c.train.min_lr << '\n'
      << "train.warmup_ratio = " << c.train.warmup_ratio << '\n'
      << "train.hold_ratio = " << c.train.hold_ratio << '\n'
      << "train.momentum = " << c.train.momentum << '\n'
      << "train.weight_decay = " << c.train.weight_decay << '\n'
      << "train.augment = " << (c.train.augment.enabled ? "true" : "false") << '\n'
      << "train.augment_p = " << c.train.augment.p_wave_augment << '\n'
      << "train.shift_ms = " << c.train.augment.shift_ms.lo << ',' << c.train.augment.shift_ms.hi
      << '\n'
      << "train.noise_db = " << c.train.augment.noise_db.lo << ',' << c.train.augment.noise_db.hi
      << '\n'
      << "infer.seg_len = " << c.infer.seg_len_s << '\n'
      << "infer.overlap = " << c.infer.overlap << '\n'
      << "infer.filter = " << c.infer.filter << '\n'
      << "infer.min_duration = " << c.infer.min_duration_s << '\n'
      << "eval.target_fpr = " << c.eval.target_fpr << '\n'
      << "eval.labels = " << c.eval.labels << '\n';
}

}  // namespace marblevad
