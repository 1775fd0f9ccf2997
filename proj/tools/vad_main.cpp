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

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "marblevad/pipeline.hpp"

namespace {

using namespace marblevad;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "run config (key = value lines)");
  cmd->add_option("--set", c.overrides, "override a config key, e.g. --set train.epochs=10");
  cmd->add_option("--seed", c.seed, "root seed (falls back to config, then $VAD_SEED)");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MarbleNet voice activity detection"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic speech/noise corpus");
  SynthOptions so;
  std::string synth_out;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--n-speech", so.n_speech, "speech clips");
  synth->add_option("--n-noise", so.n_noise, "non-speech clips");
  synth->add_option("--n-recordings", so.n_recordings, "labelled long recordings");
  synth->add_option("--recording-seconds", so.recording_s, "length of each recording");
  synth->add_option("--seed", synth_seed, "root seed");

  // prepare
  auto* prepare = app.add_subcommand("prepare", "cut and split segments from a manifest");
  Common pc;
  std::string prep_manifest, prep_out;
  add_common(prepare, pc);
  prepare->add_option("--manifest", prep_manifest, "input manifest (JSON lines)");
  prepare->add_option("--out", prep_out, "output directory for split manifests");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model on prepared splits");
  Common tcm;
  std::string train_out;
  std::optional<std::string> prepared;
  std::optional<int> epochs;
  std::optional<std::size_t> batch;
  add_common(train_cmd, tcm);
  train_cmd->add_option("--out", train_out, "checkpoint path")->required();
  train_cmd->add_option("--data", prepared, "prepared split directory");
  train_cmd->add_option("--epochs", epochs, "epochs");
  train_cmd->add_option("--batch-size", batch, "batch size");

  // infer
  auto* infer = app.add_subcommand("infer", "frame-level speech scores for a recording");
  Common ic;
  std::string ckpt, wav, infer_out;
  std::optional<double> overlap, seg_len, min_dur;
  std::optional<std::string> filter;
  add_common(infer, ic);
  infer->add_option("--ckpt", ckpt, "checkpoint")->required();
  infer->add_option("--wav", wav, "16 kHz WAV file")->required();
  infer->add_option("--out", infer_out, "frame CSV path")->required();
  infer->add_option("--overlap", overlap, "segment overlap in [0, 1)");
  infer->add_option("--filter", filter, "none | median | mean | shift");
  infer->add_option("--seg-len", seg_len, "segment length in seconds");
  infer->add_option("--min-duration", min_dur, "merge decision runs shorter than this");

  // eval
  auto* eval = app.add_subcommand("eval", "TPR at fixed FPR and AUROC from frame scores");
  Common ec;
  std::string scores, eval_out;
  std::optional<std::string> labels;
  std::optional<double> target_fpr;
  add_common(eval, ec);
  eval->add_option("--scores", scores, "frame CSV from `infer`")->required();
  eval->add_option("--labels", labels, "label CSV (start_s,end_s,condition)");
  eval->add_option("--target-fpr", target_fpr, "operating false positive rate");
  eval->add_option("--out", eval_out, "report path")->required();

  // describe
  auto* desc = app.add_subcommand("describe", "print the model's per-layer parameter counts");
  Common dc;
  add_common(desc, dc);

  // compare-features
  auto* cmp = app.add_subcommand("compare-features", "train MFCC and log-mel models side by side");
  Common cc;
  std::string recordings, cmp_out;
  std::size_t trials = 1;
  add_common(cmp, cc);
  cmp->add_option("--recordings", recordings, "directory of labelled recordings")->required();
  cmp->add_option("--trials", trials, "seeds per feature kind");
  cmp->add_option("--out", cmp_out, "report path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      so.out_dir = synth_out;
      so.seed = resolve_seed(synth_seed, RunConfig{});
      cmd_synth(so, std::cout);
    } else if (*prepare) {
      RunConfig cfg = resolve(pc);
      if (!prep_manifest.empty()) cfg.data.manifest = prep_manifest;
      if (!prep_out.empty()) cfg.data.prepared_dir = prep_out;
      if (cfg.data.manifest.empty() || cfg.data.prepared_dir.empty()) {
        throw ConfigError("prepare needs --manifest and --out (or data.manifest / data.prepared_dir)");
      }
      cmd_prepare(cfg.data.manifest, cfg, cfg.data.prepared_dir, resolve_seed(pc.seed, cfg),
                  std::cout);
    } else if (*train_cmd) {
      RunConfig cfg = resolve(tcm);
      if (prepared) cfg.data.prepared_dir = *prepared;
      if (epochs) cfg.train.epochs = *epochs;
      if (batch) cfg.train.batch_size = *batch;
      cmd_train(cfg, train_out, resolve_seed(tcm.seed, cfg), std::cout);
    } else if (*infer) {
      RunConfig cfg = resolve(ic);
      if (overlap) cfg.infer.overlap = *overlap;
      if (filter) cfg.infer.filter = *filter;
      if (seg_len) cfg.infer.seg_len_s = *seg_len;
      if (min_dur) cfg.infer.min_duration_s = *min_dur;
      cmd_infer(ckpt, wav, cfg.infer, infer_out, std::cout);
    } else if (*eval) {
      RunConfig cfg = resolve(ec);
      if (labels) cfg.eval.labels = *labels;
      if (target_fpr) cfg.eval.target_fpr = *target_fpr;
      if (cfg.eval.labels.empty()) throw ConfigError("eval needs --labels (or eval.labels)");
      cmd_eval(scores, cfg.eval.labels, cfg.eval.target_fpr, eval_out, std::cout);
    } else if (*desc) {
      describe(resolve(dc).model, std::cout);
    } else if (*cmp) {
      RunConfig cfg = resolve(cc);
      const auto root = resolve_seed(cc.seed, cfg);
      std::vector<std::uint64_t> seeds;
      for (std::size_t i = 0; i < trials; ++i) seeds.push_back(root + i);
      const auto results = compare_features(cfg, seeds, load_recordings(recordings), std::cerr);
      write_feature_table(std::cout, results, cfg.eval.target_fpr);
      if (!cmp_out.empty()) {
        std::ofstream out(cmp_out);
        write_feature_table(out, results, cfg.eval.target_fpr);
        std::ofstream csv(sibling(cmp_out, ".csv"));
        write_feature_trials_csv(csv, results);
      }
    }
  } catch (const ManifestError& e) {
    std::cerr << "error: " << e.what();
    if (e.line() > 0) std::cerr << " (line " << e.line() << ')';
    std::cerr << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
