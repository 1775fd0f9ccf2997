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

// Differentiable ops for 1-D separable convolutional networks.
// Activations are (batch, channels, time), row-major.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "marblevad/log.hpp"
#include "marblevad/nn/tensor.hpp"

namespace marblevad::nn {

enum class Mode { kTrain, kEval };

namespace detail {

template <typename T>
void require_rank(const Tensor<T>& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " +
                                std::to_string(rank) + ", got " + shape_string(x.shape()));
  }
}

}  // namespace detail

// Per-channel cross-correlation with "same" zero padding:
//   y[b,c,t] = sum_j w[c,j] * x[b,c, t + dilation*(j - (k-1)/2)]
template <typename T>
Tensor<T> conv1d_depthwise(const Tensor<T>& x, const Tensor<T>& w, std::size_t dilation = 1) {
  detail::require_rank(x, 3, "conv1d_depthwise");
  detail::require_rank(w, 2, "conv1d_depthwise weights");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2), K = w.dim(1);
  if (w.dim(0) != C) {
    throw std::invalid_argument("conv1d_depthwise: weight channels " +
                                std::to_string(w.dim(0)) + " != input channels " +
                                std::to_string(C));
  }
  if (K % 2 == 0) throw std::invalid_argument("conv1d_depthwise: kernel size must be odd");
  if (dilation == 0) throw std::invalid_argument("conv1d_depthwise: dilation must be >= 1");
  const long long half = static_cast<long long>((K - 1) / 2);
  const long long len = static_cast<long long>(L);

  // Valid output range [t_lo, t_hi) for tap j, input index t + off.
  auto tap = [dilation, half, len](std::size_t j, long long& off, long long& t_lo,
                                   long long& t_hi) {
    off = static_cast<long long>(dilation) * (static_cast<long long>(j) - half);
    t_lo = std::max(0LL, -off);
    t_hi = std::min(len, len - off);
  };

  std::vector<T> y(B * C * L, T(0));
  const auto& xd = x.vec();
  const auto& wd = w.vec();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const T* xr = &xd[(b * C + c) * L];
      T* yr = &y[(b * C + c) * L];
      for (std::size_t j = 0; j < K; ++j) {
        long long off, lo, hi;
        tap(j, off, lo, hi);
        const T wv = wd[c * K + j];
        for (long long t = lo; t < hi; ++t) yr[t] += wv * xr[t + off];
      }
    }
  }

  return Tensor<T>::from_op(
      x.shape(), std::move(y), {x.node(), w.node()},
      [B, C, L, K, tap](Node<T>& out) {
        auto& xn = *out.parents[0];
        auto& wn = *out.parents[1];
        const auto& gy = out.grad;
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t c = 0; c < C; ++c) {
            const T* gr = &gy[(b * C + c) * L];
            const T* xr = &xn.data[(b * C + c) * L];
            for (std::size_t j = 0; j < K; ++j) {
              long long off, lo, hi;
              tap(j, off, lo, hi);
              if (xn.requires_grad) {
                T* gx = &xn.ensure_grad()[(b * C + c) * L];
                const T wv = wn.data[c * K + j];
                for (long long t = lo; t < hi; ++t) gx[t + off] += wv * gr[t];
              }
              if (wn.requires_grad) {
                T acc = T(0);
                for (long long t = lo; t < hi; ++t) acc += gr[t] * xr[t + off];
                wn.ensure_grad()[c * K + j] += acc;
              }
            }
          }
        }
      });
}

// 1x1 convolution, no bias: y[b,o,t] = sum_i w[o,i] * x[b,i,t].
template <typename T>
Tensor<T> conv1d_pointwise(const Tensor<T>& x, const Tensor<T>& w) {
  detail::require_rank(x, 3, "conv1d_pointwise");
  detail::require_rank(w, 2, "conv1d_pointwise weights");
  const std::size_t B = x.dim(0), Ci = x.dim(1), L = x.dim(2), Co = w.dim(0);
  if (w.dim(1) != Ci) {
    throw std::invalid_argument("conv1d_pointwise: weights " + shape_string(w.shape()) +
                                " do not match input channels " + std::to_string(Ci));
  }
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat>;
  using MMap = Eigen::Map<Mat>;
  std::vector<T> y(B * Co * L, T(0));
  const CMap wm(w.vec().data(), Co, Ci);
  for (std::size_t b = 0; b < B; ++b) {
    MMap(&y[b * Co * L], Co, L).noalias() = wm * CMap(&x.vec()[b * Ci * L], Ci, L);
  }
  return Tensor<T>::from_op(
      {B, Co, L}, std::move(y), {x.node(), w.node()}, [B, Ci, Co, L](Node<T>& out) {
        auto& xn = *out.parents[0];
        auto& wn = *out.parents[1];
        const CMap wm(wn.data.data(), Co, Ci);
        for (std::size_t b = 0; b < B; ++b) {
          const CMap gy(&out.grad[b * Co * L], Co, L);
          if (wn.requires_grad) {
            MMap(wn.ensure_grad().data(), Co, Ci).noalias() +=
                gy * CMap(&xn.data[b * Ci * L], Ci, L).transpose();
          }
          if (xn.requires_grad) {
            MMap(&xn.ensure_grad()[b * Ci * L], Ci, L).noalias() += wm.transpose() * gy;
          }
        }
      });
}

template <typename T>
struct BatchNormState {
  Tensor<T> gamma;
  Tensor<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T eps = T(1e-5);
  T stats_momentum = T(0.1);
  bool stats_initialized = false;

  explicit BatchNormState(std::size_t channels = 0)
      : gamma(Tensor<T>::full({channels}, T(1), true)),
        beta(Tensor<T>::zeros({channels}, true)),
        running_mean(channels, T(0)),
        running_var(channels, T(1)) {}

  std::size_t channels() const { return running_mean.size(); }
};

// Train: normalize per channel over (batch, time) with the biased variance
// and update running stats (unbiased variance). Eval: use running stats.
template <typename T>
Tensor<T> batchnorm1d(const Tensor<T>& x, BatchNormState<T>& bn, Mode mode) {
  detail::require_rank(x, 3, "batchnorm1d");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  if (bn.channels() != C) {
    throw std::invalid_argument("batchnorm1d: state has " + std::to_string(bn.channels()) +
                                " channels, input has " + std::to_string(C));
  }
  const std::size_t n = B * L;
  const auto& xd = x.vec();
  const auto& g = bn.gamma.vec();
  const auto& be = bn.beta.vec();
  std::vector<T> y(xd.size());
  std::vector<T> inv_std(C);
  std::vector<T> xhat(xd.size());

  if (mode == Mode::kTrain) {
    if (n < 2) throw std::invalid_argument("batchnorm1d: train mode needs batch*time >= 2");
    for (std::size_t c = 0; c < C; ++c) {
      double mean = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* r = &xd[(b * C + c) * L];
        for (std::size_t t = 0; t < L; ++t) mean += r[t];
      }
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* r = &xd[(b * C + c) * L];
        for (std::size_t t = 0; t < L; ++t) {
          const double d = r[t] - mean;
          var += d * d;
        }
      }
      var /= static_cast<double>(n);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(bn.eps)));
      const T m = static_cast<T>(mean);
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t base = (b * C + c) * L;
        for (std::size_t t = 0; t < L; ++t) {
          xhat[base + t] = (xd[base + t] - m) * inv_std[c];
          y[base + t] = g[c] * xhat[base + t] + be[c];
        }
      }
      const T mom = bn.stats_momentum;
      const double unbiased = var * static_cast<double>(n) / static_cast<double>(n - 1);
      bn.running_mean[c] = (T(1) - mom) * bn.running_mean[c] + mom * m;
      bn.running_var[c] = (T(1) - mom) * bn.running_var[c] + mom * static_cast<T>(unbiased);
    }
    bn.stats_initialized = true;
  } else {
    if (!bn.stats_initialized) {
      log_warning("batchnorm1d: eval before any statistics update; using mean 0, var 1");
      bn.stats_initialized = true;  // warn once per layer
    }
    for (std::size_t c = 0; c < C; ++c) {
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(bn.running_var[c]) +
                                                  static_cast<double>(bn.eps)));
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t base = (b * C + c) * L;
        for (std::size_t t = 0; t < L; ++t) {
          xhat[base + t] = (xd[base + t] - bn.running_mean[c]) * inv_std[c];
          y[base + t] = g[c] * xhat[base + t] + be[c];
        }
      }
    }
  }

  const bool train = mode == Mode::kTrain;
  return Tensor<T>::from_op(
      x.shape(), std::move(y), {x.node(), bn.gamma.node(), bn.beta.node()},
      [B, C, L, n, train, inv_std = std::move(inv_std),
       xhat = std::move(xhat)](Node<T>& out) {
        auto& xn = *out.parents[0];
        auto& gn = *out.parents[1];
        auto& bnn = *out.parents[2];
        const auto& gy = out.grad;
        for (std::size_t c = 0; c < C; ++c) {
          T sum_g = T(0), sum_gx = T(0);
          for (std::size_t b = 0; b < B; ++b) {
            const std::size_t base = (b * C + c) * L;
            for (std::size_t t = 0; t < L; ++t) {
              sum_g += gy[base + t];
              sum_gx += gy[base + t] * xhat[base + t];
            }
          }
          if (gn.requires_grad) gn.ensure_grad()[c] += sum_gx;
          if (bnn.requires_grad) bnn.ensure_grad()[c] += sum_g;
          if (!xn.requires_grad) continue;
          auto& gx = xn.ensure_grad();
          const T scale = gn.data[c] * inv_std[c];
          const T inv_n = T(1) / static_cast<T>(n);
          for (std::size_t b = 0; b < B; ++b) {
            const std::size_t base = (b * C + c) * L;
            for (std::size_t t = 0; t < L; ++t) {
              if (train) {
                gx[base + t] +=
                    scale * (gy[base + t] - inv_n * sum_g - xhat[base + t] * inv_n * sum_gx);
              } else {
                gx[base + t] += scale * gy[base + t];
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> y(x.vec());
  for (T& v : y) v = v > T(0) ? v : T(0);
  return Tensor<T>::from_op(x.shape(), std::move(y), {x.node()}, [](Node<T>& out) {
    auto& xn = *out.parents[0];
    auto& gx = xn.ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xn.data[i] > T(0)) gx[i] += out.grad[i];
    }
  });
}

// Inverted dropout: survivors scaled by 1/(1-p) in train mode.
template <typename T, typename Rng>
Tensor<T> dropout(const Tensor<T>& x, double p, Rng& rng, Mode mode) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must be in [0, 1)");
  if (mode == Mode::kEval || p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  for (T& m : mask) m = keep(rng) ? scale : T(0);
  std::vector<T> y(x.vec());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
  return Tensor<T>::from_op(x.shape(), std::move(y), {x.node()},
                            [mask = std::move(mask)](Node<T>& out) {
                              auto& gx = out.parents[0]->ensure_grad();
                              for (std::size_t i = 0; i < gx.size(); ++i) {
                                gx[i] += out.grad[i] * mask[i];
                              }
                            });
}

template <typename T>
Tensor<T> residual_add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("residual_add: shape mismatch " + shape_string(a.shape()) +
                                " vs " + shape_string(b.shape()));
  }
  std::vector<T> y(a.vec());
  const auto& bd = b.vec();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bd[i];
  return Tensor<T>::from_op(a.shape(), std::move(y), {a.node(), b.node()},
                            [](Node<T>& out) {
                              for (int k = 0; k < 2; ++k) {
                                auto& p = *out.parents[k];
                                if (!p.requires_grad) continue;
                                auto& g = p.ensure_grad();
                                for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
                              }
                            });
}

// Mean over time: (B, C, L) -> (B, C).
template <typename T>
Tensor<T> global_avg_pool_time(const Tensor<T>& x) {
  detail::require_rank(x, 3, "global_avg_pool_time");
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  if (L == 0) throw std::invalid_argument("global_avg_pool_time: empty time axis");
  std::vector<T> y(B * C, T(0));
  const auto& xd = x.vec();
  for (std::size_t r = 0; r < B * C; ++r) {
    T acc = T(0);
    for (std::size_t t = 0; t < L; ++t) acc += xd[r * L + t];
    y[r] = acc / static_cast<T>(L);
  }
  return Tensor<T>::from_op({B, C}, std::move(y), {x.node()}, [B, C, L](Node<T>& out) {
    auto& gx = out.parents[0]->ensure_grad();
    const T inv = T(1) / static_cast<T>(L);
    for (std::size_t r = 0; r < B * C; ++r) {
      const T g = out.grad[r] * inv;
      for (std::size_t t = 0; t < L; ++t) gx[r * L + t] += g;
    }
  });
}

// y[b,o] = sum_i w[o,i] x[b,i] + bias[o]; the 1x1 classifier on pooled features.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  detail::require_rank(x, 2, "linear");
  const std::size_t B = x.dim(0), Ci = x.dim(1), Co = w.dim(0);
  if (w.dim(1) != Ci || bias.numel() != Co) {
    throw std::invalid_argument("linear: shape mismatch");
  }
  std::vector<T> y(B * Co);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < Co; ++o) {
      T acc = bias.vec()[o];
      for (std::size_t i = 0; i < Ci; ++i) acc += w.vec()[o * Ci + i] * x.vec()[b * Ci + i];
      y[b * Co + o] = acc;
    }
  }
  return Tensor<T>::from_op(
      {B, Co}, std::move(y), {x.node(), w.node(), bias.node()}, [B, Ci, Co](Node<T>& out) {
        auto& xn = *out.parents[0];
        auto& wn = *out.parents[1];
        auto& bn = *out.parents[2];
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t o = 0; o < Co; ++o) {
            const T g = out.grad[b * Co + o];
            if (bn.requires_grad) bn.ensure_grad()[o] += g;
            for (std::size_t i = 0; i < Ci; ++i) {
              if (wn.requires_grad) wn.ensure_grad()[o * Ci + i] += g * xn.data[b * Ci + i];
              if (xn.requires_grad) xn.ensure_grad()[b * Ci + i] += g * wn.data[o * Ci + i];
            }
          }
        }
      });
}

// Mean negative log-likelihood of integer labels under softmax(logits).
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  detail::require_rank(logits, 2, "softmax_cross_entropy");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  if (labels.size() != B) throw std::invalid_argument("softmax_cross_entropy: label count");
  const auto& z = logits.vec();
  for (T v : z) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw std::domain_error("softmax_cross_entropy: non-finite logits");
    }
  }
  std::vector<T> probs(B * K);
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const int lab = labels[b];
    if (lab < 0 || static_cast<std::size_t>(lab) >= K) {
      throw std::invalid_argument("softmax_cross_entropy: label out of range");
    }
    const T* zr = &z[b * K];
    const double mx = *std::max_element(zr, zr + K);
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(zr[k] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t k = 0; k < K; ++k) {
      probs[b * K + k] = static_cast<T>(std::exp(zr[k] - lse));
    }
    loss += lse - zr[lab];
  }
  loss /= static_cast<double>(B);
  std::vector<int> lab(labels.begin(), labels.end());
  return Tensor<T>::from_op(
      {1}, {static_cast<T>(loss)}, {logits.node()},
      [B, K, probs = std::move(probs), lab = std::move(lab)](Node<T>& out) {
        auto& gz = out.parents[0]->ensure_grad();
        const T g = out.grad[0] / static_cast<T>(B);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t k = 0; k < K; ++k) {
            const T onehot = static_cast<int>(k) == lab[b] ? T(1) : T(0);
            gz[b * K + k] += g * (probs[b * K + k] - onehot);
          }
        }
      });
}

// Row-wise softmax (no gradient).
template <typename T>
std::vector<T> softmax_rows(const Tensor<T>& logits) {
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  std::vector<T> p(B * K);
  for (std::size_t b = 0; b < B; ++b) {
    const T* zr = &logits.vec()[b * K];
    const double mx = *std::max_element(zr, zr + K);
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(zr[k] - mx);
    for (std::size_t k = 0; k < K; ++k) p[b * K + k] = static_cast<T>(std::exp(zr[k] - mx) / sum);
  }
  return p;
}

}  // namespace marblevad::nn
