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
// Dense f32 tensors with tape-based reverse-mode autodiff. Ops record a
// backward closure on the active tape (if any); with no active tape they are
// plain forward computations. One tape per graph, single-threaded.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ast/error.h"
#include "ast/rng.h"

namespace ast {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

class Tensor {
 public:
  Shape shape;
  std::vector<float> data;  // row-major
  std::vector<float> grad;  // empty until ensure_grad()
  bool requires_grad = false;

  static TensorPtr zeros(Shape shape, bool requires_grad = false);
  static TensorPtr full(Shape shape, float value, bool requires_grad = false);
  static TensorPtr from(Shape shape, std::vector<float> values,
                        bool requires_grad = false);
  static TensorPtr scalar(float value, bool requires_grad = false);
  static TensorPtr randn(Shape shape, Rng& rng, float stddev = 1.f,
                         bool requires_grad = false);
  static TensorPtr uniform(Shape shape, Rng& rng, float lo, float hi,
                           bool requires_grad = false);

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  bool is_scalar() const { return numel() == 1; }
  float value() const;

  void ensure_grad();
  void zero_grad();
  bool all_finite() const;
  void check_finite(const std::string& what) const;
};

// Records ops in execution order; backward() replays them reversed.
// Gradients of op outputs are reset at the start of each backward() pass,
// leaf gradients accumulate across passes.
class Tape {
 public:
  void record(std::vector<TensorPtr> outputs, std::function<void()> backward);
  void backward(const TensorPtr& loss);
  void clear();
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<TensorPtr> outputs;
    std::function<void()> fn;
  };
  std::vector<Node> nodes_;
};

Tape* active_tape();

// RAII: makes a tape current for ops executed in scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// ---- elementwise / scalar ----
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, float s);
TensorPtr add_scalar(const TensorPtr& a, float s);
TensorPtr exp(const TensorPtr& a);
TensorPtr log(const TensorPtr& a);
TensorPtr sqrt(const TensorPtr& a);
TensorPtr sigmoid(const TensorPtr& a);
TensorPtr tanh(const TensorPtr& a);
TensorPtr gelu(const TensorPtr& a);
TensorPtr clamp_min(const TensorPtr& a, float floor);
TensorPtr clamp(const TensorPtr& a, float lo, float hi);

// ---- linear algebra / structure ----
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);  // [m,k]x[k,n]
TensorPtr transpose(const TensorPtr& a);                   // 2-D
TensorPtr reshape(const TensorPtr& a, Shape shape);
TensorPtr narrow(const TensorPtr& a, int axis, int start, int len);
TensorPtr concat(const std::vector<TensorPtr>& parts, int axis);
TensorPtr add_rowvec(const TensorPtr& a, const TensorPtr& v);  // [R,C]+[C]

// ---- reductions / losses ----
TensorPtr sum(const TensorPtr& a);
TensorPtr mean(const TensorPtr& a);
TensorPtr mean_axis0(const TensorPtr& a);  // [R,C] -> [C]
TensorPtr mse_loss(const TensorPtr& a, const TensorPtr& b);
TensorPtr cross_entropy_logits(const TensorPtr& logits,
                               const std::vector<int>& labels);

// ---- rows-as-vectors ops ----
TensorPtr softmax_rows(const TensorPtr& a);
TensorPtr l2_normalize_rows(const TensorPtr& a, float eps = 1e-12f);
TensorPtr layer_norm_rows(const TensorPtr& a, const TensorPtr& gamma,
                          const TensorPtr& beta, float eps = 1e-5f);

// Scaled dot-product attention over pre-projected q,k,v, heads concatenated.
// mask, when given, is additive on the [Tq,Tk] logits. weights_out, when
// non-null, receives the [heads*Tq, Tk] softmax rows (forward value only).
TensorPtr attention_heads(const TensorPtr& q, const TensorPtr& k,
                          const TensorPtr& v, int heads,
                          const TensorPtr& mask = nullptr,
                          TensorPtr* weights_out = nullptr);

TensorPtr embedding_lookup(const TensorPtr& table, const std::vector<int>& ids);

// ---- conv / spatial (NCHW) ----
TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b,
                 int stride_h, int stride_w, int pad_h, int pad_w);
TensorPtr conv_transpose2d(const TensorPtr& x, const TensorPtr& w,
                           const TensorPtr& b, int stride_h, int stride_w,
                           int pad_h, int pad_w);
TensorPtr channel_norm(const TensorPtr& x, const TensorPtr& gamma,
                       const TensorPtr& beta, float eps = 1e-5f);
TensorPtr add_channel_bias(const TensorPtr& x, const TensorPtr& v);  // v [N,C]
TensorPtr broadcast_to_chw(const TensorPtr& v, int h, int w);        // [N,C]
TensorPtr global_avg_pool(const TensorPtr& x);                       // ->[N,C]
TensorPtr upsample_nearest2x(const TensorPtr& x);

}  // namespace ast
