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

#pragma once

#include <vector>

#include "ast/nn.h"
#include "ast/tensor.h"

namespace ast {

struct AdamHp {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Bias-corrected Adam state for one parameter tensor.
struct AdamState {
  std::vector<float> first_moment;
  std::vector<float> second_moment;
  int64_t step_count = 0;
  AdamHp hp;
};

// One update of `param` in place from `grad`; increments state.step_count.
void adam_step(std::vector<float>& param, const std::vector<float>& grad,
               AdamState& state);

// Optimizer over a parameter list; uses each tensor's .grad buffer.
class Adam {
 public:
  explicit Adam(std::vector<NamedParam> params, AdamHp hp = {});
  void step();
  void zero_grad();
  int64_t step_count() const { return step_count_; }

 private:
  struct Slot {
    TensorPtr tensor;
    AdamState state;
  };
  std::vector<Slot> slots_;
  AdamHp hp_;
  int64_t step_count_ = 0;
};

}  // namespace ast
