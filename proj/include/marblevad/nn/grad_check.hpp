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

// Central-difference verification of registered backward rules.
//
// For inputs x (all requiring grad) and a fixed random cotangent v, the
// scalar f(x) = <v, op(x)> is differentiated by backprop once. Each probe
// draws a random direction u and compares <grad f, u> against
// (f(x + eps*u) - f(x - eps*u)) / (2*eps).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "marblevad/nn/tensor.hpp"

namespace marblevad::nn {

struct GradCheckOptions {
  double eps = 1e-5;
  int probes = 10;
  std::uint64_t seed = 1;
  // Inputs are redrawn until |x| > min_abs, keeping probes off kinks.
  double min_abs = 0.0;
};

using GradOp = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

inline double grad_check(const GradOp& op, const std::vector<Shape>& input_shapes,
                         const GradCheckOptions& opt = {}) {
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<std::vector<double>> base;
  for (const auto& s : input_shapes) {
    std::vector<double> v(numel_of(s));
    for (double& x : v) {
      do {
        x = gauss(rng);
      } while (std::abs(x) <= opt.min_abs);
    }
    base.push_back(std::move(v));
  }

  auto make_inputs = [&](const std::vector<std::vector<double>>& values, bool grad) {
    std::vector<Tensor<double>> in;
    for (std::size_t i = 0; i < values.size(); ++i) {
      in.emplace_back(input_shapes[i], values[i], grad);
    }
    return in;
  };

  std::vector<double> cotangent;
  auto inner = [&](const Tensor<double>& y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) acc += cotangent[i] * y.data()[i];
    return acc;
  };

  auto inputs = make_inputs(base, true);
  Tensor<double> y = op(inputs);
  cotangent.resize(y.numel());
  for (double& c : cotangent) c = gauss(rng);
  y.backward(cotangent);

  double worst = 0.0;
  for (int p = 0; p < opt.probes; ++p) {
    std::vector<std::vector<double>> dir;
    double analytic = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
      std::vector<double> u(base[i].size());
      for (double& x : u) x = gauss(rng);
      const auto g = inputs[i].grad();
      for (std::size_t k = 0; k < u.size(); ++k) {
        analytic += (inputs[i].has_grad() ? g[k] : 0.0) * u[k];
      }
      dir.push_back(std::move(u));
    }
    auto shifted = [&](double sign) {
      auto v = base;
      for (std::size_t i = 0; i < v.size(); ++i) {
        for (std::size_t k = 0; k < v[i].size(); ++k) v[i][k] += sign * opt.eps * dir[i][k];
      }
      NoGradGuard guard;
      return inner(op(make_inputs(v, false)));
    };
    const double numeric = (shifted(1.0) - shifted(-1.0)) / (2.0 * opt.eps);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic - numeric) / scale);
  }
  return worst;
}

}  // namespace marblevad::nn
