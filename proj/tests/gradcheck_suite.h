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
// Finite-difference sweep over every differentiable op, shared between the
// unit tests and the acceptance suite.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "ast/tensor.h"
#include "testing_util.h"

namespace ast::testing {

struct OpGradReport {
  std::string op;
  int shapes = 0;
  float max_rel_err = 0.f;
  bool ok = true;
};

// Runs `shapes_per_op` random small configurations per op. tol is the spec
// gate (max relative error < 1e-3 against central differences, eps 1e-3).
inline std::vector<OpGradReport> run_gradcheck_suite(uint64_t seed,
                                                     int shapes_per_op = 20,
                                                     float tol = 1e-3f) {
  std::vector<OpGradReport> reports;
  std::map<std::string, size_t> index;
  Rng rng(seed);

  auto record = [&](const std::string& op, const GraphFn& fn,
                    std::vector<TensorPtr> inputs) {
    auto it = index.find(op);
    if (it == index.end()) {
      it = index.emplace(op, reports.size()).first;
      reports.push_back({op, 0, 0.f, true});
    }
    auto res = grad_check(fn, std::move(inputs), rng.next_u64(), 1e-3f, tol);
    auto& r = reports[it->second];
    r.shapes += 1;
    r.max_rel_err = std::max(r.max_rel_err, res.max_rel_err);
    r.ok = r.ok && res.ok;
  };

  auto rand_rc = [&](int lo, int hi) {
    return static_cast<int>(rng.randint(hi - lo + 1)) + lo;
  };
  auto tens = [&](Shape s, float lo = -1.f, float hi = 1.f) {
    return Tensor::uniform(std::move(s), rng, lo, hi, true);
  };

  for (int it = 0; it < shapes_per_op; ++it) {
    const int r = rand_rc(1, 5), c = rand_rc(1, 6);
    record("add", [](const auto& in) { return add(in[0], in[1]); },
           {tens({r, c}), tens({r, c})});
  }
  for (int it = 0; it < shapes_per_op; ++it) {
    const int r = rand_rc(1, 5), c = rand_rc(1, 6);
    record("sub", [](const auto& in) { return sub(in[0], in[1]); },
           {tens({r, c}), tens({r, c})});
  }
  for (int it = 0; it < shapes_per_op; ++it) {
    const int r = rand_rc(1, 5), c = rand_rc(1, 6);
    record("mul", [](const auto& in) { return mul(in[0], in[1]); },
           {tens({r, c}), tens({r, c})});
  }
  for (int it = 0; it < shapes_per_op; ++it) {
    const int n = rand_rc(2, 24);
    record("scale", [](const auto& in) { return scale(in[0], 1.7f); },
           {tens({n})});
    record("add_scalar", [](const auto& in) { return add_scalar(in[0], 0.3f); },
           {tens({n})});
    record("exp", [](const auto& in) { return ast::exp(in[0]); }, {tens({n})});
    record("log", [](const auto& in) { return ast::log(in[0]); },
           {tens({n}, 0.5f, 2.f)});
    record("sqrt", [](const auto& in) { return ast::sqrt(in[0]); },
           {tens({n}, 0.5f, 2.f)});
    record("sigmoid", [](const auto& in) { return sigmoid(in[0]); },
           {tens({n}, -3.f, 3.f)});
    record("tanh", [](const auto& in) { return ast::tanh(in[0]); },
           {tens({n}, -3.f, 3.f)});
    record("gelu", [](const auto& in) { return gelu(in[0]); },
           {tens({n}, -3.f, 3.f)});
    // keep samples away from the clamp kink where FD is one-sided
    record("clamp_min", [](const auto& in) { return clamp_min(in[0], 0.f); },
           {tens({n}, 0.1f, 2.f)});
    record("clamp_min_below",
           [](const auto& in) { return clamp_min(in[0], 3.f); },
           {tens({n}, 0.1f, 2.f)});
  }
  for (int it = 0; it < shapes_per_op; ++it) {
    const int m = rand_rc(1, 5), k = rand_rc(1, 6), n = rand_rc(1, 5);
    record("matmul", [](const auto& in) { return matmul(in[0], in[1]); },
           {tens({m, k}), tens({k, n})});
  }
  for (int it = 0; it < shapes_per_op; ++it) {
    const int r = rand_rc(1, 5), c = rand_rc(1, 6);
    record("transpose", [](const auto& in) { return transpose(in[0]); },
           {tens({r, c})});
    record("reshape",
           [r, c](const auto& in) { return reshape(in[0], {c * r}); },
           {tens({r, c})});
  }
  for (int it = 0; it < shapes_per_op; ++it) {
    const int r = rand_rc(2, 5), c = rand_rc(2, 6);
    const int axis = static_cast<int>(rng.randint(2));
    const int dim = axis == 0 ? r : c;
    const int len = rand_rc(1, dim);
    const int start = static_cast<int>(rng.randint(dim - len + 1));
    record("narrow",
           [axis, start, len](const auto& in) {
             return narrow(in[0], axis, start, len);
           },
           {tens({r, c})});
  }
  for (int it = 0; it < shapes_per_op; ++it) {
    const int c = rand_rc(1, 5);
    const int r1 = rand_rc(1, 4), r2 = rand_rc(1, 4);
    record("concat",
           [](const auto& in) {
             return concat({in[0], in[1]}, 0);
           },
           {tens({r1, c}), tens({r2, c})});
  }
  for (int it = 0; it < shapes_per_op; ++it) {
    const int r = rand_rc(1, 5), c = rand_rc(1, 6);
    record("add_rowvec",
           [](const auto& in) { return add_rowvec(in[0], in[1]); },
           {tens({r, c}), tens({c})});
    record("sum", [](const auto& in) { return sum(in[0]); }, {tens({r, c})});
    record("mean", [](const auto& in) { return mean(in[0]); }, {tens({r, c})});
    record("mean_axis0", [](const auto& in) { return mean_axis0(in[0]); },
           {tens({r, c})});
    record("mse_loss", [](const auto& in) { return mse_loss(in[0], in[1]); },
           {tens({r, c}), tens({r, c})});
    record("softmax_rows", [](const auto& in) { return softmax_rows(in[0]); },
           {tens({r, c}, -2.f, 2.f)});
    record("l2_normalize_rows",
           [](const auto& in) { return l2_normalize_rows(in[0]); },
           {tens({r, c}, 0.3f, 1.5f)});
  }
  for (int it = 0; it < shapes_per_op; ++it) {
    const int n = rand_rc(2, 5), k = rand_rc(2, 6);
    std::vector<int> labels;
    for (int i = 0; i < n; ++i)
      labels.push_back(static_cast<int>(rng.randint(k)));
    record("cross_entropy_logits",
           [labels](const auto& in) {
             return cross_entropy_logits(in[0], labels);
           },
           {tens({n, k}, -2.f, 2.f)});
  }
  // Norm ops get low-amplitude noise plus a deterministic ramp so the
  // per-group variance stays bounded away from zero; near-zero variance makes
  // 1/sqrt(var+eps) too curved for a valid finite-difference comparison.
  auto ramp_rows = [&](int r, int c) {
    auto t = tens({r, c}, -0.4f, 0.4f);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        t->data[static_cast<size_t>(i) * c + j] += 1.5f * static_cast<float>(j);
    return t;
  };
  for (int it = 0; it < shapes_per_op; ++it) {
    const int r = rand_rc(2, 5), c = rand_rc(2, 6);
    record("layer_norm_rows",
           [](const auto& in) {
             return layer_norm_rows(in[0], in[1], in[2]);
           },
           {ramp_rows(r, c), tens({c}, 0.5f, 1.5f), tens({c})});
  }
  for (int it = 0; it < shapes_per_op; ++it) {
    const int heads = 1 + static_cast<int>(rng.randint(2));  // 1 or 2
    const int dh = rand_rc(1, 3);
    const int d = heads * dh * 2;
    const int tq = rand_rc(1, 4), tk = rand_rc(1, 4);
    record("attention_heads",
           [heads](const auto& in) {
             return attention_heads(in[0], in[1], in[2], heads);
           },
           {tens({tq, d}), tens({tk, d}), tens({tk, d})});
  }
  for (int it = 0; it < shapes_per_op; ++it) {
    const int v = rand_rc(3, 8), d = rand_rc(2, 5), n = rand_rc(1, 6);
    std::vector<int> ids;
    for (int i = 0; i < n; ++i) ids.push_back(static_cast<int>(rng.randint(v)));
    record("embedding_lookup",
           [ids](const auto& in) { return embedding_lookup(in[0], ids); },
           {tens({v, d})});
  }
  for (int it = 0; it < shapes_per_op; ++it) {
    const int n = rand_rc(1, 2), ci = rand_rc(1, 3), co = rand_rc(1, 3);
    const int h = rand_rc(3, 6), w = rand_rc(3, 6);
    const int k = rand_rc(1, 3);
    const int s = rand_rc(1, 2), p = static_cast<int>(rng.randint(k));
    record("conv2d",
           [s, p](const auto& in) {
             return conv2d(in[0], in[1], in[2], s, s, p, p);
           },
           {tens({n, ci, h, w}), tens({co, ci, k, k}), tens({co})});
    record("conv_transpose2d",
           [s, k, p](const auto& in) {
             const int pt = std::min(p, k - 1);
             return conv_transpose2d(in[0], in[1], in[2], s, s, pt, pt);
           },
           {tens({n, ci, h, w}), tens({ci, co, k, k}), tens({co})});
  }
  auto ramp_chw = [&](int n, int c, int h, int w) {
    auto t = tens({n, c, h, w}, -0.4f, 0.4f);
    const int hw = h * w;
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch)
        for (int p = 0; p < hw; ++p)
          t->data[(static_cast<size_t>(i) * c + ch) * hw + p] +=
              1.5f * static_cast<float>(ch);
    return t;
  };
  for (int it = 0; it < shapes_per_op; ++it) {
    const int n = rand_rc(1, 2), c = rand_rc(2, 4);
    const int h = rand_rc(2, 4), w = rand_rc(2, 4);
    record("channel_norm",
           [](const auto& in) { return channel_norm(in[0], in[1], in[2]); },
           {ramp_chw(n, c, h, w), tens({c}, 0.5f, 1.5f), tens({c})});
    record("add_channel_bias",
           [](const auto& in) { return add_channel_bias(in[0], in[1]); },
           {tens({n, c, h, w}), tens({n, c})});
    record("broadcast_to_chw",
           [h, w](const auto& in) { return broadcast_to_chw(in[0], h, w); },
           {tens({n, c})});
    record("global_avg_pool",
           [](const auto& in) { return global_avg_pool(in[0]); },
           {tens({n, c, h, w})});
    record("upsample_nearest2x",
           [](const auto& in) { return upsample_nearest2x(in[0]); },
           {tens({n, c, h, w})});
  }
  return reports;
}

}  // namespace ast::testing
