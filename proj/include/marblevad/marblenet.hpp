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

// MarbleNet-BxRxC: time-channel separable 1-D convolutional VAD classifier.
//
//   prologue   sep-conv(k=11) 128ch -> BN -> ReLU
//   B blocks   R sub-blocks of depthwise(k_b) -> pointwise(C) -> BN -> ReLU
//              -> dropout; the last sub-block adds a pointwise+BN projection
//              of the block input before its ReLU
//   epilogue1  sep-conv(k=29, dilation 2) 128ch -> BN -> ReLU
//   epilogue2  pointwise 128ch -> BN -> ReLU
//   head       mean over time -> linear(128 -> 2)
//
// Convolutions carry no bias (BN's beta absorbs it); kernels of size 1 are
// plain pointwise convolutions. Because the head pools over time the model
// accepts any number of input frames.

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "marblevad/features.hpp"
#include "marblevad/nn/ops.hpp"
#include "marblevad/nn/optim.hpp"
#include "marblevad/rng.hpp"

namespace marblevad {

struct ConvSpec {
  std::size_t kernel = 1;
  std::size_t channels = 128;
  std::size_t dilation = 1;
};

struct MarbleNetConfig {
  std::size_t n_blocks = 3;
  std::size_t n_subblocks = 2;
  std::size_t channels = 64;
  std::size_t input_features = 64;
  std::vector<std::size_t> block_kernels{13, 15, 17};
  ConvSpec prologue{11, 128, 1};
  ConvSpec epilogue1{29, 128, 2};
  ConvSpec epilogue2{1, 128, 1};
  std::size_t n_classes = 2;
  double dropout_p = 0.1;

  void validate() const {
    auto odd = [](std::size_t k) { return k % 2 == 1; };
    if (block_kernels.size() != n_blocks) {
      throw std::invalid_argument("block_kernels must list one kernel per block (" +
                                  std::to_string(n_blocks) + ")");
    }
    for (auto k : block_kernels) {
      if (!odd(k)) throw std::invalid_argument("block kernels must be odd");
    }
    for (const auto* s : {&prologue, &epilogue1, &epilogue2}) {
      if (!odd(s->kernel)) throw std::invalid_argument("kernel sizes must be odd");
      if (s->channels == 0) throw std::invalid_argument("channels must be > 0");
      if (s->dilation == 0) throw std::invalid_argument("dilation must be >= 1");
    }
    if (channels == 0 || input_features == 0 || n_classes < 2) {
      throw std::invalid_argument("channels, input_features must be > 0, n_classes >= 2");
    }
    if (n_blocks > 0 && n_subblocks == 0) {
      throw std::invalid_argument("blocks need at least one sub-block");
    }
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
      throw std::invalid_argument("dropout_p must be in [0, 1)");
    }
  }

  std::string name() const {
    return "MarbleNet-" + std::to_string(n_blocks) + "x" + std::to_string(n_subblocks) +
           "x" + std::to_string(channels);
  }
};

inline nlohmann::json to_json(const ConvSpec& s) {
  return {{"kernel", s.kernel}, {"channels", s.channels}, {"dilation", s.dilation}};
}

inline ConvSpec conv_spec_from_json(const nlohmann::json& j) {
  return {j.at("kernel").get<std::size_t>(), j.at("channels").get<std::size_t>(),
          j.value("dilation", std::size_t{1})};
}

inline nlohmann::json to_json(const MarbleNetConfig& c) {
  return {{"n_blocks", c.n_blocks},       {"n_subblocks", c.n_subblocks},
          {"channels", c.channels},       {"input_features", c.input_features},
          {"block_kernels", c.block_kernels}, {"prologue", to_json(c.prologue)},
          {"epilogue1", to_json(c.epilogue1)}, {"epilogue2", to_json(c.epilogue2)},
          {"n_classes", c.n_classes},     {"dropout_p", c.dropout_p}};
}

inline MarbleNetConfig config_from_json(const nlohmann::json& j) {
  MarbleNetConfig c;
  c.n_blocks = j.at("n_blocks").get<std::size_t>();
  c.n_subblocks = j.at("n_subblocks").get<std::size_t>();
  c.channels = j.at("channels").get<std::size_t>();
  c.input_features = j.at("input_features").get<std::size_t>();
  c.block_kernels = j.at("block_kernels").get<std::vector<std::size_t>>();
  c.prologue = conv_spec_from_json(j.at("prologue"));
  c.epilogue1 = conv_spec_from_json(j.at("epilogue1"));
  c.epilogue2 = conv_spec_from_json(j.at("epilogue2"));
  c.n_classes = j.at("n_classes").get<std::size_t>();
  c.dropout_p = j.at("dropout_p").get<double>();
  c.validate();
  return c;
}

// Closed-form parameter count of the topology above. Independent of the
// tensors a built model actually allocates.
inline std::size_t expected_param_count(const MarbleNetConfig& c) {
  auto sep = [](std::size_t k, std::size_t in, std::size_t out) {
    return (k > 1 ? k * in : 0) + in * out + 2 * out;
  };
  std::size_t total = sep(c.prologue.kernel, c.input_features, c.prologue.channels);
  std::size_t in = c.prologue.channels;
  for (std::size_t b = 0; b < c.n_blocks; ++b) {
    std::size_t sub_in = in;
    for (std::size_t r = 0; r < c.n_subblocks; ++r) {
      total += sep(c.block_kernels[b], sub_in, c.channels);
      sub_in = c.channels;
    }
    total += in * c.channels + 2 * c.channels;  // residual projection + BN
    in = c.channels;
  }
  total += sep(c.epilogue1.kernel, in, c.epilogue1.channels);
  total += sep(c.epilogue2.kernel, c.epilogue1.channels, c.epilogue2.channels);
  total += c.epilogue2.channels * c.n_classes + c.n_classes;
  return total;
}

struct LayerCount {
  std::string name;
  nn::Shape shape;
  std::size_t count = 0;
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kBadHeader, kShapeMismatch, kTruncated };
  CheckpointError(Kind k, const std::string& what) : std::runtime_error(what), kind_(k) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr char kCheckpointMagic[] = "MBVAD1";
inline constexpr std::size_t kCheckpointMagicLen = 6;

template <typename T>
class MarbleNet {
 public:
  using Tensor = nn::Tensor<T>;

  explicit MarbleNet(MarbleNetConfig cfg, std::uint64_t seed = 0)
      : cfg_(std::move(cfg)), dropout_rng_(derive_seed(seed, "dropout")) {
    cfg_.validate();
    Rng init = make_rng(derive_seed(seed, "init"));
    build(init);
  }

  MarbleNet(MarbleNet&&) noexcept = default;
  MarbleNet& operator=(MarbleNet&&) noexcept = default;
  MarbleNet(const MarbleNet&) = delete;
  MarbleNet& operator=(const MarbleNet&) = delete;

  // Deep copy (parameters, running statistics, dropout RNG state).
  MarbleNet clone() const {
    MarbleNet m(cfg_, 0);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m.params_[i].tensor.vec() = params_[i].tensor.vec();
      m.params_[i].momentum_buffer = params_[i].momentum_buffer;
    }
    for (std::size_t i = 0; i < bns_.size(); ++i) {
      m.bns_[i].running_mean = bns_[i].running_mean;
      m.bns_[i].running_var = bns_[i].running_var;
      m.bns_[i].stats_initialized = bns_[i].stats_initialized;
    }
    m.dropout_rng_ = dropout_rng_;
    m.feature_kind_ = feature_kind_;
    return m;
  }

  const MarbleNetConfig& config() const { return cfg_; }
  // Front end the model was trained on; stored in checkpoints.
  FeatureKind feature_kind() const { return feature_kind_; }
  void set_feature_kind(FeatureKind k) { feature_kind_ = k; }
  std::vector<nn::Parameter<T>>& parameters() { return params_; }
  const std::vector<nn::Parameter<T>>& parameters() const { return params_; }
  std::vector<nn::BatchNormState<T>>& batchnorms() { return bns_; }
  const std::vector<nn::BatchNormState<T>>& batchnorms() const { return bns_; }
  void seed_dropout(std::uint64_t seed) { dropout_rng_.seed(seed); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

  std::vector<LayerCount> param_breakdown() const {
    std::vector<LayerCount> out;
    for (const auto& p : params_) out.push_back({p.name, p.tensor.shape(), p.tensor.numel()});
    return out;
  }

  // x: (batch, input_features, frames) -> logits (batch, n_classes).
  Tensor forward(const Tensor& x, nn::Mode mode) {
    if (x.rank() != 3 || x.dim(1) != cfg_.input_features) {
      throw std::invalid_argument("MarbleNet: expected input (batch, " +
                                  std::to_string(cfg_.input_features) + ", frames), got " +
                                  nn::shape_string(x.shape()));
    }
    if (x.dim(2) == 0) throw std::invalid_argument("MarbleNet: need at least one frame");

    Tensor h = nn::relu(unit(prologue_, x, mode));
    for (const auto& blk : blocks_) {
      const Tensor block_in = h;
      for (std::size_t r = 0; r < blk.subs.size(); ++r) {
        Tensor z = unit(blk.subs[r], h, mode);
        if (r + 1 == blk.subs.size()) {
          z = nn::residual_add(z, unit(blk.residual, block_in, mode));
        }
        h = nn::dropout(nn::relu(z), cfg_.dropout_p, dropout_rng_, mode);
      }
    }
    h = nn::relu(unit(epilogue1_, h, mode));
    h = nn::relu(unit(epilogue2_, h, mode));
    return nn::linear(nn::global_avg_pool_time(h), params_[head_w_].tensor,
                      params_[head_b_].tensor);
  }

  // Output of block `index` (after its final ReLU, before dropout) and of
  // its residual branch alone (after ReLU), for the same input.
  std::pair<Tensor, Tensor> block_probe(std::size_t index, const Tensor& block_in,
                                        nn::Mode mode) {
    const auto& blk = blocks_.at(index);
    Tensor h = block_in;
    Tensor z;
    for (std::size_t r = 0; r < blk.subs.size(); ++r) {
      z = unit(blk.subs[r], h, mode);
      if (r + 1 < blk.subs.size()) h = nn::relu(z);
    }
    Tensor res = unit(blk.residual, block_in, mode);
    return {nn::relu(nn::residual_add(z, res)), nn::relu(res)};
  }

  // Input to block `index` for a model input (eval path, no dropout).
  Tensor block_input(std::size_t index, const Tensor& x, nn::Mode mode) {
    Tensor h = nn::relu(unit(prologue_, x, mode));
    for (std::size_t b = 0; b < index; ++b) {
      const auto& blk = blocks_[b];
      const Tensor block_in = h;
      for (std::size_t r = 0; r < blk.subs.size(); ++r) {
        Tensor z = unit(blk.subs[r], h, mode);
        if (r + 1 == blk.subs.size()) z = nn::residual_add(z, unit(blk.residual, block_in, mode));
        h = nn::relu(z);
      }
    }
    return h;
  }

  // Names of the parameters that belong to the non-residual path of a block.
  std::vector<std::string> block_branch_parameters(std::size_t index) const {
    std::vector<std::string> names;
    const std::string prefix = "block" + std::to_string(index) + ".sub";
    for (const auto& p : params_) {
      if (p.name.rfind(prefix, 0) == 0) names.push_back(p.name);
    }
    return names;
  }

  nn::Parameter<T>& parameter(const std::string& name) {
    for (auto& p : params_) {
      if (p.name == name) return p;
    }
    throw std::out_of_range("no parameter named " + name);
  }

  // Speech-class probability per batch row, eval mode, no graph.
  std::vector<double> predict_speech(const Tensor& x) {
    nn::NoGradGuard guard;
    const auto p = nn::softmax_rows(forward(x, nn::Mode::kEval));
    std::vector<double> out(x.dim(0));
    for (std::size_t b = 0; b < out.size(); ++b) {
      out[b] = static_cast<double>(p[b * cfg_.n_classes + 1]);
    }
    return out;
  }

  // -------------------------------------------------------------------------
  // Checkpoints: "MBVAD1", u32 header length, JSON header (config + tensor
  // manifest), then little-endian float32 payload in manifest order.

  void save(std::ostream& out) const {
    nlohmann::json header;
    header["config"] = to_json(cfg_);
    header["feature_kind"] = std::string(to_string(feature_kind_));
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& e : state_entries()) {
      tensors.push_back({{"name", e.name}, {"shape", e.shape}});
    }
    header["tensors"] = tensors;
    nlohmann::json stats = nlohmann::json::array();
    for (const auto& bn : bns_) stats.push_back(bn.stats_initialized);
    header["bn_stats_initialized"] = stats;
    const std::string text = header.dump();

    out.write(kCheckpointMagic, kCheckpointMagicLen);
    write_u32(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& e : state_entries()) {
      for (T v : *e.values) write_f32(out, static_cast<float>(v));
    }
    if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "checkpoint write failed");
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
      throw CheckpointError(CheckpointError::Kind::kIo, path.string() + ": cannot open");
    }
    save(out);
  }

  static MarbleNet load(std::istream& in) {
    using Kind = CheckpointError::Kind;
    char magic[kCheckpointMagicLen];
    if (!in.read(magic, kCheckpointMagicLen)) {
      throw CheckpointError(Kind::kTruncated, "checkpoint truncated before magic");
    }
    if (std::memcmp(magic, kCheckpointMagic, kCheckpointMagicLen) != 0) {
      throw CheckpointError(Kind::kBadMagic, "checkpoint magic mismatch: expected '" +
                                                 std::string(kCheckpointMagic) + "'");
    }
    std::uint32_t len = 0;
    if (!read_u32(in, len)) throw CheckpointError(Kind::kTruncated, "checkpoint truncated in header");
    std::string text(len, '\0');
    if (!in.read(text.data(), len)) {
      throw CheckpointError(Kind::kTruncated, "checkpoint truncated in header");
    }
    nlohmann::json header;
    MarbleNetConfig cfg;
    try {
      header = nlohmann::json::parse(text);
      cfg = config_from_json(header.at("config"));
    } catch (const std::exception& ex) {
      throw CheckpointError(Kind::kBadHeader, std::string("checkpoint header: ") + ex.what());
    }

    MarbleNet m(cfg, 0);
    auto entries = m.state_entries();
    const auto& manifest = header.at("tensors");
    if (manifest.size() != entries.size()) {
      throw CheckpointError(Kind::kShapeMismatch,
                            "checkpoint lists " + std::to_string(manifest.size()) +
                                " tensors, config implies " + std::to_string(entries.size()));
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto name = manifest[i].at("name").get<std::string>();
      const auto shape = manifest[i].at("shape").get<nn::Shape>();
      if (name != entries[i].name || shape != entries[i].shape) {
        throw CheckpointError(Kind::kShapeMismatch,
                              "checkpoint tensor " + std::to_string(i) + " is " + name +
                                  nn::shape_string(shape) + ", expected " + entries[i].name +
                                  nn::shape_string(entries[i].shape));
      }
    }
    for (auto& e : entries) {
      for (T& v : *e.values) {
        float f;
        if (!read_f32(in, f)) {
          throw CheckpointError(Kind::kTruncated,
                                "checkpoint payload truncated in tensor " + e.name);
        }
        v = static_cast<T>(f);
      }
    }
    if (header.contains("feature_kind")) {
      m.feature_kind_ = parse_feature_kind(header["feature_kind"].get<std::string>());
    }
    if (header.contains("bn_stats_initialized")) {
      const auto& flags = header["bn_stats_initialized"];
      for (std::size_t i = 0; i < m.bns_.size() && i < flags.size(); ++i) {
        m.bns_[i].stats_initialized = flags[i].get<bool>();
      }
    }
    return m;
  }

  static MarbleNet load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      throw CheckpointError(CheckpointError::Kind::kIo, path.string() + ": cannot open");
    }
    return load(in);
  }

 private:
  struct Unit {
    std::optional<std::size_t> depthwise;  // parameter index
    std::size_t pointwise = 0;
    std::size_t bn = 0;
    std::size_t dilation = 1;
  };
  struct Block {
    std::vector<Unit> subs;
    Unit residual;
  };
  struct StateEntry {
    std::string name;
    nn::Shape shape;
    std::vector<T>* values;
  };

  Tensor unit(const Unit& u, const Tensor& x, nn::Mode mode) {
    Tensor h = x;
    if (u.depthwise) h = nn::conv1d_depthwise(h, params_[*u.depthwise].tensor, u.dilation);
    h = nn::conv1d_pointwise(h, params_[u.pointwise].tensor);
    return nn::batchnorm1d(h, bns_[u.bn], mode);
  }

  // Kaiming-uniform over fan-in with negative slope sqrt(5):
  // gain sqrt(2 / (1 + 5)) times sqrt(3 / fan_in) = 1 / sqrt(fan_in).
  static double kaiming_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

  std::size_t add_param(const std::string& name, nn::Shape shape, double bound, Rng& rng) {
    std::vector<T> v(nn::numel_of(shape));
    for (T& x : v) x = static_cast<T>(uniform_real(rng, -bound, bound));
    params_.emplace_back(name, Tensor(std::move(shape), std::move(v), true));
    return params_.size() - 1;
  }

  Unit make_unit(const std::string& name, std::size_t kernel, std::size_t dilation,
                 std::size_t in, std::size_t out, Rng& rng) {
    Unit u;
    u.dilation = dilation;
    if (kernel > 1) {
      u.depthwise = add_param(name + ".dw", {in, kernel}, kaiming_bound(kernel), rng);
    }
    u.pointwise = add_param(name + ".pw", {out, in}, kaiming_bound(in), rng);
    bns_.emplace_back(out);
    u.bn = bns_.size() - 1;
    params_.emplace_back(name + ".bn.gamma", bns_.back().gamma);
    params_.emplace_back(name + ".bn.beta", bns_.back().beta);
    return u;
  }

  void build(Rng& rng) {
    params_.reserve(64);
    prologue_ = make_unit("prologue", cfg_.prologue.kernel, cfg_.prologue.dilation,
                          cfg_.input_features, cfg_.prologue.channels, rng);
    std::size_t in = cfg_.prologue.channels;
    for (std::size_t b = 0; b < cfg_.n_blocks; ++b) {
      Block blk;
      const std::string bname = "block" + std::to_string(b);
      std::size_t sub_in = in;
      for (std::size_t r = 0; r < cfg_.n_subblocks; ++r) {
        blk.subs.push_back(make_unit(bname + ".sub" + std::to_string(r),
                                     cfg_.block_kernels[b], 1, sub_in, cfg_.channels, rng));
        sub_in = cfg_.channels;
      }
      blk.residual = make_unit(bname + ".res", 1, 1, in, cfg_.channels, rng);
      blocks_.push_back(std::move(blk));
      in = cfg_.channels;
    }
    epilogue1_ = make_unit("epilogue1", cfg_.epilogue1.kernel, cfg_.epilogue1.dilation, in,
                           cfg_.epilogue1.channels, rng);
    epilogue2_ = make_unit("epilogue2", cfg_.epilogue2.kernel, cfg_.epilogue2.dilation,
                           cfg_.epilogue1.channels, cfg_.epilogue2.channels, rng);
    const std::size_t head_in = cfg_.epilogue2.channels;
    head_w_ = add_param("classifier.weight", {cfg_.n_classes, head_in},
                        kaiming_bound(head_in), rng);
    params_.emplace_back("classifier.bias", Tensor::zeros({cfg_.n_classes}, true));
    head_b_ = params_.size() - 1;
  }

  std::vector<StateEntry> state_entries() const {
    auto* self = const_cast<MarbleNet*>(this);
    std::vector<StateEntry> out;
    for (auto& p : self->params_) out.push_back({p.name, p.tensor.shape(), &p.tensor.vec()});
    for (std::size_t i = 0; i < self->bns_.size(); ++i) {
      auto& bn = self->bns_[i];
      const std::string n = "bn" + std::to_string(i);
      out.push_back({n + ".running_mean", {bn.channels()}, &bn.running_mean});
      out.push_back({n + ".running_var", {bn.channels()}, &bn.running_var});
    }
    return out;
  }

  static void write_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
  static bool read_u32(std::istream& in, std::uint32_t& v) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
    v = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
  }
  static void write_f32(std::ostream& out, float f) {
    write_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  static bool read_f32(std::istream& in, float& f) {
    std::uint32_t u;
    if (!read_u32(in, u)) return false;
    f = std::bit_cast<float>(u);
    return true;
  }

  MarbleNetConfig cfg_;
  FeatureKind feature_kind_ = FeatureKind::kMfcc;
  Rng dropout_rng_;
  std::vector<nn::Parameter<T>> params_;
  std::vector<nn::BatchNormState<T>> bns_;
  Unit prologue_, epilogue1_, epilogue2_;
  std::vector<Block> blocks_;
  std::size_t head_w_ = 0, head_b_ = 0;
};

using Model = MarbleNet<float>;

// Stacks equally long feature matrices into a (batch, features, frames) tensor.
template <typename T>
nn::Tensor<T> stack_features(std::span<const FeatureMatrix> batch) {
  if (batch.empty()) throw std::invalid_argument("stack_features: empty batch");
  const std::size_t F = batch[0].n_features, L = batch[0].n_frames;
  std::vector<T> data;
  data.reserve(batch.size() * F * L);
  for (const auto& fm : batch) {
    if (fm.n_features != F || fm.n_frames != L) {
      throw std::invalid_argument("stack_features: feature matrices differ in shape");
    }
    for (double v : fm.values) data.push_back(static_cast<T>(v));
  }
  return nn::Tensor<T>({batch.size(), F, L}, std::move(data));
}

inline void write_breakdown(std::ostream& out, const std::vector<LayerCount>& rows) {
  std::size_t total = 0;
  out << std::left << std::setw(28) << "layer" << std::setw(14) << "shape" << "params\n";
  for (const auto& r : rows) {
    out << std::left << std::setw(28) << r.name << std::setw(14) << nn::shape_string(r.shape)
        << r.count << '\n';
    total += r.count;
  }
  out << std::left << std::setw(42) << "total" << total << '\n';
}

}  // namespace marblevad
