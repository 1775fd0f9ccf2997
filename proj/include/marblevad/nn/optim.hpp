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

#pragma once

#include <span>
#include <string>
#include <vector>

#include "marblevad/nn/tensor.hpp"

namespace marblevad::nn {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  std::vector<T> momentum_buffer;

  Parameter(std::string n, Tensor<T> t)
      : name(std::move(n)), tensor(std::move(t)), momentum_buffer(tensor.numel(), T(0)) {
    tensor.set_requires_grad(true);
  }
};

struct SgdOptions {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.001;
};

// Classic momentum with coupled L2:
//   g = grad + wd * theta;  v = momentum * v + g;  theta -= lr * v
// Parameters without a gradient this step are treated as grad = 0.
template <typename T>
void sgd_step(std::span<Parameter<T>> params, const SgdOptions& opt) {
  const T lr = static_cast<T>(opt.lr);
  const T mom = static_cast<T>(opt.momentum);
  const T wd = static_cast<T>(opt.weight_decay);
  for (auto& p : params) {
    auto theta = p.tensor.data();
    const bool has = p.tensor.has_grad();
    const auto grad = p.tensor.grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const T g = (has ? grad[i] : T(0)) + wd * theta[i];
      p.momentum_buffer[i] = mom * p.momentum_buffer[i] + g;
      theta[i] -= lr * p.momentum_buffer[i];
    }
  }
}

template <typename T>
void zero_grad(std::span<Parameter<T>> params) {
  for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace marblevad::nn
