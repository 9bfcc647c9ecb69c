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

#include "ast/tensor.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ast {

using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;
using EStride = Eigen::OuterStride<>;

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// ---------------------------------------------------------------- Tensor

TensorPtr Tensor::zeros(Shape shape, bool requires_grad) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data.assign(static_cast<size_t>(shape_numel(t->shape)), 0.f);
  t->requires_grad = requires_grad;
  return t;
}

TensorPtr Tensor::full(Shape shape, float value, bool requires_grad) {
  auto t = zeros(std::move(shape), requires_grad);
  std::fill(t->data.begin(), t->data.end(), value);
  return t;
}

TensorPtr Tensor::from(Shape shape, std::vector<float> values,
                       bool requires_grad) {
  require(shape_numel(shape) == static_cast<int64_t>(values.size()),
          ErrorCategory::kDimension,
          "tensor data length does not match shape " + shape_str(shape));
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data = std::move(values);
  t->requires_grad = requires_grad;
  return t;
}

TensorPtr Tensor::scalar(float value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

TensorPtr Tensor::randn(Shape shape, Rng& rng, float stddev,
                        bool requires_grad) {
  auto t = zeros(std::move(shape), requires_grad);
  for (auto& x : t->data) x = rng.normal() * stddev;
  return t;
}

TensorPtr Tensor::uniform(Shape shape, Rng& rng, float lo, float hi,
                          bool requires_grad) {
  auto t = zeros(std::move(shape), requires_grad);
  for (auto& x : t->data) x = rng.uniform(lo, hi);
  return t;
}

float Tensor::value() const {
  require(is_scalar(), ErrorCategory::kUsage, "value() needs a scalar tensor");
  return data[0];
}

void Tensor::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.f);
}

void Tensor::zero_grad() {
  std::fill(grad.begin(), grad.end(), 0.f);
}

bool Tensor::all_finite() const {
  for (float x : data)
    if (!std::isfinite(x)) return false;
  return true;
}

void Tensor::check_finite(const std::string& what) const {
  if (!all_finite())
    fail(ErrorCategory::kNumeric, "non-finite values in " + what);
}

// ------------------------------------------------------------------ Tape

namespace {
thread_local Tape* g_active_tape = nullptr;

// Returns out->grad data, or nullptr when no gradient ever reached out.
const float* upstream(const TensorPtr& out) {
  return out->grad.empty() ? nullptr : out->grad.data();
}

bool wants_grad(const TensorPtr& t) { return t && t->requires_grad; }

void mark_output(const TensorPtr& out) { out->requires_grad = true; }
}  // namespace

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = previous_; }

void Tape::record(std::vector<TensorPtr> outputs, std::function<void()> backward) {
  nodes_.push_back({std::move(outputs), std::move(backward)});
}

void Tape::backward(const TensorPtr& loss) {
  require(loss != nullptr && loss->is_scalar(), ErrorCategory::kUsage,
          "backward() needs a scalar loss");
  loss->check_finite("loss");
  // Op outputs restart from zero each pass; leaves keep accumulating.
  for (auto& node : nodes_)
    for (auto& out : node.outputs) out->zero_grad();
  loss->ensure_grad();
  loss->grad[0] += 1.f;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
    if (it->fn) it->fn();
}

void Tape::clear() { nodes_.clear(); }

// ------------------------------------------------------ elementwise ops

namespace {

void check_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
  require(a->shape == b->shape, ErrorCategory::kDimension,
          std::string(op) + ": shape mismatch " + shape_str(a->shape) + " vs " +
              shape_str(b->shape));
}

// Unary op with pointwise derivative computed from (x, y).
template <class Fwd, class Dfn>
TensorPtr unary_op(const TensorPtr& a, Fwd fwd, Dfn dfn) {
  auto out = Tensor::zeros(a->shape);
  const size_t n = a->data.size();
  for (size_t i = 0; i < n; ++i) out->data[i] = fwd(a->data[i]);
  if (Tape* t = active_tape(); t && wants_grad(a)) {
    mark_output(out);
    t->record({out}, [a, out, dfn] {
      const float* g = upstream(out);
      if (!g) return;
      a->ensure_grad();
      for (size_t i = 0; i < a->data.size(); ++i)
        a->grad[i] += g[i] * dfn(a->data[i], out->data[i]);
    });
  }
  return out;
}

}  // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(a, b, "add");
  auto out = Tensor::zeros(a->shape);
  for (size_t i = 0; i < out->data.size(); ++i)
    out->data[i] = a->data[i] + b->data[i];
  if (Tape* t = active_tape(); t && (wants_grad(a) || wants_grad(b))) {
    mark_output(out);
    t->record({out}, [a, b, out] {
      const float* g = upstream(out);
      if (!g) return;
      if (a->requires_grad) {
        a->ensure_grad();
        for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += g[i];
      }
    });
  }
  return out;
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(a, b, "sub");
  auto out = Tensor::zeros(a->shape);
  for (size_t i = 0; i < out->data.size(); ++i)
    out->data[i] = a->data[i] - b->data[i];
  if (Tape* t = active_tape(); t && (wants_grad(a) || wants_grad(b))) {
    mark_output(out);
    t->record({out}, [a, b, out] {
      const float* g = upstream(out);
      if (!g) return;
      if (a->requires_grad) {
        a->ensure_grad();
        for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (size_t i = 0; i < b->grad.size(); ++i) b->grad[i] -= g[i];
      }
    });
  }
  return out;
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(a, b, "mul");
  auto out = Tensor::zeros(a->shape);
  for (size_t i = 0; i < out->data.size(); ++i)
    out->data[i] = a->data[i] * b->data[i];
  if (Tape* t = active_tape(); t && (wants_grad(a) || wants_grad(b))) {
    mark_output(out);
    t->record({out}, [a, b, out] {
      const float* g = upstream(out);
      if (!g) return;
      if (a->requires_grad) {
        a->ensure_grad();
        for (size_t i = 0; i < a->grad.size(); ++i)
          a->grad[i] += g[i] * b->data[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (size_t i = 0; i < b->grad.size(); ++i)
          b->grad[i] += g[i] * a->data[i];
      }
    });
  }
  return out;
}

TensorPtr scale(const TensorPtr& a, float s) {
  return unary_op(
      a, [s](float x) { return x * s; },
      [s](float, float) { return s; });
}

TensorPtr add_scalar(const TensorPtr& a, float s) {
  return unary_op(
      a, [s](float x) { return x + s; },
      [](float, float) { return 1.f; });
}

TensorPtr exp(const TensorPtr& a) {
  return unary_op(
      a, [](float x) { return std::exp(x); },
      [](float, float y) { return y; });
}

TensorPtr log(const TensorPtr& a) {
  return unary_op(
      a, [](float x) { return std::log(x); },
      [](float x, float) { return 1.f / x; });
}

TensorPtr sqrt(const TensorPtr& a) {
  return unary_op(
      a, [](float x) { return std::sqrt(x); },
      [](float, float y) { return 0.5f / y; });
}

TensorPtr sigmoid(const TensorPtr& a) {
  return unary_op(
      a, [](float x) { return 1.f / (1.f + std::exp(-x)); },
      [](float, float y) { return y * (1.f - y); });
}

TensorPtr tanh(const TensorPtr& a) {
  return unary_op(
      a, [](float x) { return std::tanh(x); },
      [](float, float y) { return 1.f - y * y; });
}

TensorPtr gelu(const TensorPtr& a) {
  constexpr float kInvSqrt2 = 0.7071067811865476f;
  constexpr float kInvSqrt2Pi = 0.3989422804014327f;
  return unary_op(
      a,
      [](float x) { return 0.5f * x * (1.f + std::erf(x * kInvSqrt2)); },
      [](float x, float) {
        float cdf = 0.5f * (1.f + std::erf(x * kInvSqrt2));
        float pdf = kInvSqrt2Pi * std::exp(-0.5f * x * x);
        return cdf + x * pdf;
      });
}

TensorPtr clamp_min(const TensorPtr& a, float floor) {
  return unary_op(
      a, [floor](float x) { return x < floor ? floor : x; },
      [floor](float x, float) { return x > floor ? 1.f : 0.f; });
}

TensorPtr clamp(const TensorPtr& a, float lo, float hi) {
  return unary_op(
      a, [lo, hi](float x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](float x, float) { return (x > lo && x < hi) ? 1.f : 0.f; });
}

// --------------------------------------------------------------- matmul

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
  require(a->rank() == 2 && b->rank() == 2, ErrorCategory::kDimension,
          "matmul: operands must be 2-D");
  require(a->dim(1) == b->dim(0), ErrorCategory::kDimension,
          "matmul: inner dims disagree " + shape_str(a->shape) + " x " +
              shape_str(b->shape));
  const int m = a->dim(0), k = a->dim(1), n = b->dim(1);
  auto out = Tensor::zeros({m, n});
  EMap(out->data.data(), m, n).noalias() =
      ECMap(a->data.data(), m, k) * ECMap(b->data.data(), k, n);
  if (Tape* t = active_tape(); t && (wants_grad(a) || wants_grad(b))) {
    mark_output(out);
    t->record({out}, [a, b, out, m, k, n] {
      const float* g = upstream(out);
      if (!g) return;
      ECMap og(g, m, n);
      if (a->requires_grad) {
        a->ensure_grad();
        EMap(a->grad.data(), m, k).noalias() +=
            og * ECMap(b->data.data(), k, n).transpose();
      }
      if (b->requires_grad) {
        b->ensure_grad();
        EMap(b->grad.data(), k, n).noalias() +=
            ECMap(a->data.data(), m, k).transpose() * og;
      }
    });
  }
  return out;
}

TensorPtr transpose(const TensorPtr& a) {
  require(a->rank() == 2, ErrorCategory::kDimension, "transpose: need 2-D");
  const int r = a->dim(0), c = a->dim(1);
  auto out = Tensor::zeros({c, r});
  EMap(out->data.data(), c, r) = ECMap(a->data.data(), r, c).transpose();
  if (Tape* t = active_tape(); t && wants_grad(a)) {
    mark_output(out);
    t->record({out}, [a, out, r, c] {
      const float* g = upstream(out);
      if (!g) return;
      a->ensure_grad();
      EMap(a->grad.data(), r, c) += ECMap(g, c, r).transpose();
    });
  }
  return out;
}

TensorPtr reshape(const TensorPtr& a, Shape shape) {
  require(shape_numel(shape) == a->numel(), ErrorCategory::kDimension,
          "reshape: element count mismatch");
  auto out = Tensor::zeros(shape);
  out->data = a->data;
  if (Tape* t = active_tape(); t && wants_grad(a)) {
    mark_output(out);
    t->record({out}, [a, out] {
      const float* g = upstream(out);
      if (!g) return;
      a->ensure_grad();
      for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g[i];
    });
  }
  return out;
}

// ------------------------------------------------------ narrow / concat

namespace {
// Collapses shape around `axis` into [outer, axis, inner].
void collapse(const Shape& s, int axis, int64_t* outer, int64_t* inner) {
  *outer = 1;
  *inner = 1;
  for (int i = 0; i < axis; ++i) *outer *= s[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i)
    *inner *= s[i];
}
}  // namespace

TensorPtr narrow(const TensorPtr& a, int axis, int start, int len) {
  require(axis >= 0 && axis < a->rank(), ErrorCategory::kDimension,
          "narrow: bad axis");
  require(start >= 0 && len > 0 && start + len <= a->dim(axis),
          ErrorCategory::kDimension, "narrow: range out of bounds");
  Shape os = a->shape;
  os[static_cast<size_t>(axis)] = len;
  auto out = Tensor::zeros(os);
  int64_t outer, inner;
  collapse(a->shape, axis, &outer, &inner);
  const int64_t in_dim = a->dim(axis);
  for (int64_t o = 0; o < outer; ++o) {
    const float* src = a->data.data() + (o * in_dim + start) * inner;
    float* dst = out->data.data() + o * len * inner;
    std::copy(src, src + len * inner, dst);
  }
  if (Tape* t = active_tape(); t && wants_grad(a)) {
    mark_output(out);
    t->record({out}, [a, out, axis, start, len] {
      const float* g = upstream(out);
      if (!g) return;
      a->ensure_grad();
      int64_t outer, inner;
      collapse(a->shape, axis, &outer, &inner);
      const int64_t in_dim = a->dim(axis);
      for (int64_t o = 0; o < outer; ++o) {
        float* dst = a->grad.data() + (o * in_dim + start) * inner;
        const float* src = g + o * len * inner;
        for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

TensorPtr concat(const std::vector<TensorPtr>& parts, int axis) {
  require(!parts.empty(), ErrorCategory::kUsage, "concat: empty input");
  Shape os = parts[0]->shape;
  require(axis >= 0 && axis < static_cast<int>(os.size()),
          ErrorCategory::kDimension, "concat: bad axis");
  int total = 0;
  for (const auto& p : parts) {
    Shape s = p->shape;
    s[static_cast<size_t>(axis)] = 0;
    Shape ref = os;
    ref[static_cast<size_t>(axis)] = 0;
    require(s == ref, ErrorCategory::kDimension,
            "concat: incompatible part shapes");
    total += p->dim(axis);
  }
  os[static_cast<size_t>(axis)] = total;
  auto out = Tensor::zeros(os);
  int64_t outer, inner;
  collapse(os, axis, &outer, &inner);
  int offset = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    const int len = p->dim(axis);
    for (int64_t o = 0; o < outer; ++o) {
      const float* src = p->data.data() + o * len * inner;
      float* dst = out->data.data() + (o * total + offset) * inner;
      std::copy(src, src + len * inner, dst);
    }
    offset += len;
    any_grad = any_grad || wants_grad(p);
  }
  if (Tape* t = active_tape(); t && any_grad) {
    mark_output(out);
    auto held = parts;
    t->record({out}, [held, out, axis, total] {
      const float* g = upstream(out);
      if (!g) return;
      int64_t outer, inner;
      collapse(out->shape, axis, &outer, &inner);
      int offset = 0;
      for (const auto& p : held) {
        const int len = p->dim(axis);
        if (p->requires_grad) {
          p->ensure_grad();
          for (int64_t o = 0; o < outer; ++o) {
            const float* src = g + (o * total + offset) * inner;
            float* dst = p->grad.data() + o * len * inner;
            for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
          }
        }
        offset += len;
      }
    });
  }
  return out;
}

TensorPtr add_rowvec(const TensorPtr& a, const TensorPtr& v) {
  require(a->rank() == 2 && v->rank() == 1 && a->dim(1) == v->dim(0),
          ErrorCategory::kDimension, "add_rowvec: need [R,C] + [C]");
  const int r = a->dim(0), c = a->dim(1);
  auto out = Tensor::zeros(a->shape);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out->data[static_cast<size_t>(i * c + j)] =
          a->data[static_cast<size_t>(i * c + j)] + v->data[static_cast<size_t>(j)];
  if (Tape* t = active_tape(); t && (wants_grad(a) || wants_grad(v))) {
    mark_output(out);
    t->record({out}, [a, v, out, r, c] {
      const float* g = upstream(out);
      if (!g) return;
      if (a->requires_grad) {
        a->ensure_grad();
        for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g[i];
      }
      if (v->requires_grad) {
        v->ensure_grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) v->grad[static_cast<size_t>(j)] += g[i * c + j];
      }
    });
  }
  return out;
}

// ----------------------------------------------------------- reductions

TensorPtr sum(const TensorPtr& a) {
  float s = 0.f;
  for (float x : a->data) s += x;
  auto out = Tensor::scalar(s);
  if (Tape* t = active_tape(); t && wants_grad(a)) {
    mark_output(out);
    t->record({out}, [a, out] {
      const float* g = upstream(out);
      if (!g) return;
      a->ensure_grad();
      for (auto& gi : a->grad) gi += g[0];
    });
  }
  return out;
}

TensorPtr mean(const TensorPtr& a) {
  require(a->numel() > 0, ErrorCategory::kUsage, "mean: empty tensor");
  float s = 0.f;
  for (float x : a->data) s += x;
  const float inv = 1.f / static_cast<float>(a->numel());
  auto out = Tensor::scalar(s * inv);
  if (Tape* t = active_tape(); t && wants_grad(a)) {
    mark_output(out);
    t->record({out}, [a, out, inv] {
      const float* g = upstream(out);
      if (!g) return;
      a->ensure_grad();
      for (auto& gi : a->grad) gi += g[0] * inv;
    });
  }
  return out;
}

TensorPtr mean_axis0(const TensorPtr& a) {
  require(a->rank() == 2, ErrorCategory::kDimension, "mean_axis0: need 2-D");
  const int r = a->dim(0), c = a->dim(1);
  auto out = Tensor::zeros({c});
  const float inv = 1.f / static_cast<float>(r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out->data[static_cast<size_t>(j)] += a->data[static_cast<size_t>(i * c + j)];
  for (auto& x : out->data) x *= inv;
  if (Tape* t = active_tape(); t && wants_grad(a)) {
    mark_output(out);
    t->record({out}, [a, out, r, c, inv] {
      const float* g = upstream(out);
      if (!g) return;
      a->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          a->grad[static_cast<size_t>(i * c + j)] += g[j] * inv;
    });
  }
  return out;
}

TensorPtr mse_loss(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(a, b, "mse_loss");
  const size_t n = a->data.size();
  float s = 0.f;
  for (size_t i = 0; i < n; ++i) {
    const float d = a->data[i] - b->data[i];
    s += d * d;
  }
  const float inv = 1.f / static_cast<float>(n);
  auto out = Tensor::scalar(s * inv);
  if (Tape* t = active_tape(); t && (wants_grad(a) || wants_grad(b))) {
    mark_output(out);
    t->record({out}, [a, b, out, inv] {
      const float* g = upstream(out);
      if (!g) return;
      const float k = 2.f * inv * g[0];
      if (a->requires_grad) {
        a->ensure_grad();
        for (size_t i = 0; i < a->grad.size(); ++i)
          a->grad[i] += k * (a->data[i] - b->data[i]);
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (size_t i = 0; i < b->grad.size(); ++i)
          b->grad[i] -= k * (a->data[i] - b->data[i]);
      }
    });
  }
  return out;
}

TensorPtr cross_entropy_logits(const TensorPtr& logits,
                               const std::vector<int>& labels) {
  require(logits->rank() == 2, ErrorCategory::kDimension,
          "cross_entropy: logits must be [N,K]");
  const int n = logits->dim(0), k = logits->dim(1);
  require(static_cast<int>(labels.size()) == n, ErrorCategory::kDimension,
          "cross_entropy: label count mismatch");
  for (int lbl : labels)
    require(lbl >= 0 && lbl < k, ErrorCategory::kInput,
            "cross_entropy: label out of range");
  // Stable log-softmax; softmax rows kept for backward.
  auto probs = std::make_shared<std::vector<float>>(static_cast<size_t>(n) * k);
  float loss = 0.f;
  for (int i = 0; i < n; ++i) {
    const float* row = logits->data.data() + static_cast<size_t>(i) * k;
    float mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    float z = 0.f;
    for (int j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const float lse = mx + std::log(z);
    loss += lse - row[labels[static_cast<size_t>(i)]];
    float* prow = probs->data() + static_cast<size_t>(i) * k;
    for (int j = 0; j < k; ++j) prow[j] = std::exp(row[j] - lse);
  }
  auto out = Tensor::scalar(loss / static_cast<float>(n));
  if (Tape* t = active_tape(); t && wants_grad(logits)) {
    mark_output(out);
    auto lbl = labels;
    t->record({out}, [logits, out, probs, lbl, n, k] {
      const float* g = upstream(out);
      if (!g) return;
      logits->ensure_grad();
      const float scale = g[0] / static_cast<float>(n);
      for (int i = 0; i < n; ++i) {
        const float* prow = probs->data() + static_cast<size_t>(i) * k;
        float* grow = logits->grad.data() + static_cast<size_t>(i) * k;
        for (int j = 0; j < k; ++j) grow[j] += scale * prow[j];
        grow[lbl[static_cast<size_t>(i)]] -= scale;
      }
    });
  }
  return out;
}

// -------------------------------------------------------------- row ops

TensorPtr softmax_rows(const TensorPtr& a) {
  require(a->rank() == 2, ErrorCategory::kDimension, "softmax_rows: need 2-D");
  const int r = a->dim(0), c = a->dim(1);
  auto out = Tensor::zeros(a->shape);
  for (int i = 0; i < r; ++i) {
    const float* row = a->data.data() + static_cast<size_t>(i) * c;
    float* orow = out->data.data() + static_cast<size_t>(i) * c;
    float mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    float z = 0.f;
    for (int j = 0; j < c; ++j) {
      orow[j] = std::exp(row[j] - mx);
      z += orow[j];
    }
    const float inv = 1.f / z;
    for (int j = 0; j < c; ++j) orow[j] *= inv;
  }
  if (Tape* t = active_tape(); t && wants_grad(a)) {
    mark_output(out);
    t->record({out}, [a, out, r, c] {
      const float* g = upstream(out);
      if (!g) return;
      a->ensure_grad();
      for (int i = 0; i < r; ++i) {
        const float* y = out->data.data() + static_cast<size_t>(i) * c;
        const float* gy = g + static_cast<size_t>(i) * c;
        float dot = 0.f;
        for (int j = 0; j < c; ++j) dot += gy[j] * y[j];
        float* ga = a->grad.data() + static_cast<size_t>(i) * c;
        for (int j = 0; j < c; ++j) ga[j] += (gy[j] - dot) * y[j];
      }
    });
  }
  return out;
}

TensorPtr l2_normalize_rows(const TensorPtr& a, float eps) {
  require(a->rank() == 2, ErrorCategory::kDimension,
          "l2_normalize_rows: need 2-D");
  const int r = a->dim(0), c = a->dim(1);
  auto out = Tensor::zeros(a->shape);
  auto inv_norms = std::make_shared<std::vector<float>>(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    const float* row = a->data.data() + static_cast<size_t>(i) * c;
    float s = 0.f;
    for (int j = 0; j < c; ++j) s += row[j] * row[j];
    const float inv = 1.f / std::max(std::sqrt(s), eps);
    (*inv_norms)[static_cast<size_t>(i)] = inv;
    float* orow = out->data.data() + static_cast<size_t>(i) * c;
    for (int j = 0; j < c; ++j) orow[j] = row[j] * inv;
  }
  if (Tape* t = active_tape(); t && wants_grad(a)) {
    mark_output(out);
    t->record({out}, [a, out, inv_norms, r, c] {
      const float* g = upstream(out);
      if (!g) return;
      a->ensure_grad();
      for (int i = 0; i < r; ++i) {
        const float* y = out->data.data() + static_cast<size_t>(i) * c;
        const float* gy = g + static_cast<size_t>(i) * c;
        const float inv = (*inv_norms)[static_cast<size_t>(i)];
        float dot = 0.f;
        for (int j = 0; j < c; ++j) dot += gy[j] * y[j];
        float* ga = a->grad.data() + static_cast<size_t>(i) * c;
        for (int j = 0; j < c; ++j) ga[j] += (gy[j] - dot * y[j]) * inv;
      }
    });
  }
  return out;
}

TensorPtr layer_norm_rows(const TensorPtr& a, const TensorPtr& gamma,
                          const TensorPtr& beta, float eps) {
  require(a->rank() == 2, ErrorCategory::kDimension, "layer_norm: need 2-D");
  const int r = a->dim(0), c = a->dim(1);
  require(gamma->numel() == c && beta->numel() == c, ErrorCategory::kDimension,
          "layer_norm: gamma/beta must be [C]");
  auto out = Tensor::zeros(a->shape);
  auto xhat = std::make_shared<std::vector<float>>(a->data.size());
  auto inv_std = std::make_shared<std::vector<float>>(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    const float* row = a->data.data() + static_cast<size_t>(i) * c;
    float m = 0.f;
    for (int j = 0; j < c; ++j) m += row[j];
    m /= static_cast<float>(c);
    float v = 0.f;
    for (int j = 0; j < c; ++j) v += (row[j] - m) * (row[j] - m);
    v /= static_cast<float>(c);
    const float is = 1.f / std::sqrt(v + eps);
    (*inv_std)[static_cast<size_t>(i)] = is;
    float* xrow = xhat->data() + static_cast<size_t>(i) * c;
    float* orow = out->data.data() + static_cast<size_t>(i) * c;
    for (int j = 0; j < c; ++j) {
      xrow[j] = (row[j] - m) * is;
      orow[j] = xrow[j] * gamma->data[static_cast<size_t>(j)] +
                beta->data[static_cast<size_t>(j)];
    }
  }
  if (Tape* t = active_tape();
      t && (wants_grad(a) || wants_grad(gamma) || wants_grad(beta))) {
    mark_output(out);
    t->record({out}, [a, gamma, beta, out, xhat, inv_std, r, c] {
      const float* g = upstream(out);
      if (!g) return;
      for (int i = 0; i < r; ++i) {
        const float* gy = g + static_cast<size_t>(i) * c;
        const float* xrow = xhat->data() + static_cast<size_t>(i) * c;
        if (gamma->requires_grad) {
          gamma->ensure_grad();
          for (int j = 0; j < c; ++j)
            gamma->grad[static_cast<size_t>(j)] += gy[j] * xrow[j];
        }
        if (beta->requires_grad) {
          beta->ensure_grad();
          for (int j = 0; j < c; ++j) beta->grad[static_cast<size_t>(j)] += gy[j];
        }
        if (a->requires_grad) {
          a->ensure_grad();
          const float is = (*inv_std)[static_cast<size_t>(i)];
          float sum_t = 0.f, sum_tx = 0.f;
          for (int j = 0; j < c; ++j) {
            const float tj = gy[j] * gamma->data[static_cast<size_t>(j)];
            sum_t += tj;
            sum_tx += tj * xrow[j];
          }
          const float invc = 1.f / static_cast<float>(c);
          float* ga = a->grad.data() + static_cast<size_t>(i) * c;
          for (int j = 0; j < c; ++j) {
            const float tj = gy[j] * gamma->data[static_cast<size_t>(j)];
            ga[j] += is * (tj - invc * sum_t - xrow[j] * invc * sum_tx);
          }
        }
      }
    });
  }
  return out;
}

// ------------------------------------------------------------ attention

TensorPtr attention_heads(const TensorPtr& q, const TensorPtr& k,
                          const TensorPtr& v, int heads, const TensorPtr& mask,
                          TensorPtr* weights_out) {
  require(q->rank() == 2 && k->rank() == 2 && v->rank() == 2,
          ErrorCategory::kDimension, "attention: q,k,v must be 2-D");
  const int tq = q->dim(0), d = q->dim(1), tk = k->dim(0);
  require(k->dim(1) == d && v->dim(1) == d && v->dim(0) == tk,
          ErrorCategory::kDimension, "attention: q,k,v dims disagree");
  require(heads > 0 && d % heads == 0, ErrorCategory::kConfig,
          "attention: width must be divisible by heads");
  if (mask)
    require(mask->rank() == 2 && mask->dim(0) == tq && mask->dim(1) == tk,
            ErrorCategory::kDimension, "attention: mask must be [Tq,Tk]");
  const int dh = d / heads;
  const float scl = 1.f / std::sqrt(static_cast<float>(dh));

  auto out = Tensor::zeros({tq, d});
  // Softmax matrices are kept for backward: heads x [tq, tk].
  auto probs = std::make_shared<std::vector<EMat>>(static_cast<size_t>(heads));
  ECMap qm(q->data.data(), tq, d), km(k->data.data(), tk, d),
      vm(v->data.data(), tk, d);
  EMap om(out->data.data(), tq, d);
  for (int h = 0; h < heads; ++h) {
    auto qh = qm.middleCols(h * dh, dh);
    auto kh = km.middleCols(h * dh, dh);
    auto vh = vm.middleCols(h * dh, dh);
    EMat s = (qh * kh.transpose()) * scl;
    if (mask) s += ECMap(mask->data.data(), tq, tk);
    // Row-wise stable softmax.
    for (int i = 0; i < tq; ++i) {
      float mx = s.row(i).maxCoeff();
      s.row(i) = (s.row(i).array() - mx).exp();
      s.row(i) /= s.row(i).sum();
    }
    (*probs)[static_cast<size_t>(h)] = s;
    om.middleCols(h * dh, dh).noalias() = s * vh;
  }
  if (weights_out) {
    auto w = Tensor::zeros({heads * tq, tk});
    for (int h = 0; h < heads; ++h)
      EMap(w->data.data() + static_cast<size_t>(h) * tq * tk, tq, tk) =
          (*probs)[static_cast<size_t>(h)];
    *weights_out = w;
  }
  if (Tape* t = active_tape();
      t && (wants_grad(q) || wants_grad(k) || wants_grad(v))) {
    mark_output(out);
    t->record({out}, [q, k, v, out, probs, heads, dh, scl, tq, tk, d] {
      const float* g = upstream(out);
      if (!g) return;
      ECMap og(g, tq, d);
      ECMap qm(q->data.data(), tq, d), km(k->data.data(), tk, d),
          vm(v->data.data(), tk, d);
      if (q->requires_grad) q->ensure_grad();
      if (k->requires_grad) k->ensure_grad();
      if (v->requires_grad) v->ensure_grad();
      for (int h = 0; h < heads; ++h) {
        const EMat& p = (*probs)[static_cast<size_t>(h)];
        auto goh = og.middleCols(h * dh, dh);
        auto vh = vm.middleCols(h * dh, dh);
        if (v->requires_grad)
          EMap(v->grad.data(), tk, d).middleCols(h * dh, dh).noalias() +=
              p.transpose() * goh;
        if (!q->requires_grad && !k->requires_grad) continue;
        EMat dp = goh * vh.transpose();           // [tq, tk]
        // softmax backward, rows
        EMat ds(tq, tk);
        for (int i = 0; i < tq; ++i) {
          const float dot = dp.row(i).cwiseProduct(p.row(i)).sum();
          ds.row(i) = (dp.row(i).array() - dot) * p.row(i).array();
        }
        if (q->requires_grad)
          EMap(q->grad.data(), tq, d).middleCols(h * dh, dh).noalias() +=
              ds * km.middleCols(h * dh, dh) * scl;
        if (k->requires_grad)
          EMap(k->grad.data(), tk, d).middleCols(h * dh, dh).noalias() +=
              ds.transpose() * qm.middleCols(h * dh, dh) * scl;
      }
    });
  }
  return out;
}

TensorPtr embedding_lookup(const TensorPtr& table, const std::vector<int>& ids) {
  require(table->rank() == 2, ErrorCategory::kDimension,
          "embedding: table must be [V,D]");
  const int vocab = table->dim(0), d = table->dim(1);
  for (int id : ids)
    require(id >= 0 && id < vocab, ErrorCategory::kInput,
            "embedding: id out of range");
  const int n = static_cast<int>(ids.size());
  auto out = Tensor::zeros({n, d});
  for (int i = 0; i < n; ++i)
    std::copy_n(table->data.data() + static_cast<size_t>(ids[static_cast<size_t>(i)]) * d,
                d, out->data.data() + static_cast<size_t>(i) * d);
  if (Tape* t = active_tape(); t && wants_grad(table)) {
    mark_output(out);
    auto held = ids;
    t->record({out}, [table, out, held, n, d] {
      const float* g = upstream(out);
      if (!g) return;
      table->ensure_grad();
      for (int i = 0; i < n; ++i) {
        float* dst = table->grad.data() + static_cast<size_t>(held[static_cast<size_t>(i)]) * d;
        const float* src = g + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

}  // namespace ast
