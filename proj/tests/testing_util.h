// Copyright 2026 The ast Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Shared helpers for tests: the finite-difference gradient oracle and a few
// naive reference computations. These stay independent of the library's
// backward implementations on purpose.

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ast/tensor.h"

namespace ast::testing {

// Builds a graph from leaf inputs and returns its (non-scalar) output.
using GraphFn = std::function<TensorPtr(const std::vector<TensorPtr>&)>;

struct GradCheckResult {
  float max_rel_err = 0.f;
  bool ok = true;
};

// Compares tape gradients of loss = sum(out * probe) against central finite
// differences with step eps. Error is measured relative to the largest
// finite-difference gradient magnitude, so zero entries do not blow up the
// ratio while real sign/scale bugs still register as O(1).
inline GradCheckResult grad_check(const GraphFn& fn,
                                  std::vector<TensorPtr> inputs,
                                  uint64_t probe_seed, float eps = 1e-3f,
                                  float tol = 1e-3f) {
  // Fixed probe so the scalarized loss mixes all output components.
  auto scalarize = [&](const TensorPtr& out) {
    Rng prng(probe_seed);
    double s = 0.0;
    for (float v : out->data) s += static_cast<double>(v) * prng.uniform(-1.f, 1.f);
    return static_cast<float>(s);
  };

  // Analytic pass.
  for (auto& in : inputs) {
    in->ensure_grad();
    in->zero_grad();
  }
  Tape tape;
  {
    TapeScope scope(tape);
    auto out = fn(inputs);
    // loss = sum(out .* probe), built from ops so the tape sees it
    Rng prng(probe_seed);
    auto probe = Tensor::zeros(out->shape);
    for (auto& v : probe->data) v = prng.uniform(-1.f, 1.f);
    auto loss = sum(mul(out, probe));
    tape.backward(loss);
  }
  std::vector<std::vector<float>> analytic;
  for (auto& in : inputs) analytic.push_back(in->grad);

  // Finite differences, forward passes only.
  GradCheckResult res;
  float fd_scale = 0.f;
  std::vector<std::vector<float>> fd(inputs.size());
  for (size_t t = 0; t < inputs.size(); ++t) {
    if (!inputs[t]->requires_grad) continue;
    fd[t].assign(inputs[t]->data.size(), 0.f);
    for (size_t i = 0; i < inputs[t]->data.size(); ++i) {
      const float saved = inputs[t]->data[i];
      inputs[t]->data[i] = saved + eps;
      const float up = scalarize(fn(inputs));
      inputs[t]->data[i] = saved - eps;
      const float dn = scalarize(fn(inputs));
      inputs[t]->data[i] = saved;
      fd[t][i] = (up - dn) / (2.f * eps);
      fd_scale = std::max(fd_scale, std::fabs(fd[t][i]));
    }
  }
  const float denom = std::max(fd_scale, 1e-3f);
  for (size_t t = 0; t < inputs.size(); ++t) {
    if (!inputs[t]->requires_grad) continue;
    for (size_t i = 0; i < fd[t].size(); ++i) {
      const float err = std::fabs(analytic[t][i] - fd[t][i]) / denom;
      res.max_rel_err = std::max(res.max_rel_err, err);
    }
  }
  res.ok = res.max_rel_err < tol;
  return res;
}

// Naive triple-loop matrix product oracle.
inline std::vector<float> naive_matmul(const std::vector<float>& a,
                                       const std::vector<float>& b, int m,
                                       int k, int n) {
  std::vector<float> out(static_cast<size_t>(m) * n, 0.f);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      float s = 0.f;
      for (int l = 0; l < k; ++l)
        s += a[static_cast<size_t>(i) * k + l] * b[static_cast<size_t>(l) * n + j];
      out[static_cast<size_t>(i) * n + j] = s;
    }
  return out;
}

// Naive direct conv2d oracle (single image, NCHW slices).
inline std::vector<float> naive_conv2d(const std::vector<float>& x,
                                       const std::vector<float>& w,
                                       const std::vector<float>& b, int n,
                                       int ci, int h, int wd, int co, int kh,
                                       int kw, int sh, int sw, int ph, int pw) {
  const int ho = (h + 2 * ph - kh) / sh + 1;
  const int wo = (wd + 2 * pw - kw) / sw + 1;
  std::vector<float> out(static_cast<size_t>(n) * co * ho * wo, 0.f);
  for (int ni = 0; ni < n; ++ni)
    for (int c = 0; c < co; ++c)
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          float s = b.empty() ? 0.f : b[static_cast<size_t>(c)];
          for (int ic = 0; ic < ci; ++ic)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * sh - ph + ky;
                const int ix = ox * sw - pw + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                s += x[((static_cast<size_t>(ni) * ci + ic) * h + iy) * wd + ix] *
                     w[((static_cast<size_t>(c) * ci + ic) * kh + ky) * kw + kx];
              }
          out[((static_cast<size_t>(ni) * co + c) * ho + oy) * wo + ox] = s;
        }
  return out;
}

}  // namespace ast::testing
