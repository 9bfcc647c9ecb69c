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

#include "ast/adam.h"

#include <cmath>

#include "ast/error.h"

namespace ast {

void adam_step(std::vector<float>& param, const std::vector<float>& grad,
               AdamState& state) {
  require(param.size() == grad.size(), ErrorCategory::kDimension,
          "adam_step: param/grad size mismatch");
  if (state.first_moment.empty()) {
    state.first_moment.assign(param.size(), 0.f);
    state.second_moment.assign(param.size(), 0.f);
  }
  require(state.first_moment.size() == param.size(), ErrorCategory::kDimension,
          "adam_step: state size mismatch");
  state.step_count += 1;
  const AdamHp& hp = state.hp;
  const float bc1 =
      1.f - std::pow(hp.beta1, static_cast<float>(state.step_count));
  const float bc2 =
      1.f - std::pow(hp.beta2, static_cast<float>(state.step_count));
  for (size_t i = 0; i < param.size(); ++i) {
    const float g = grad[i];
    if (!std::isfinite(g))
      fail(ErrorCategory::kNumeric, "adam_step: non-finite gradient");
    float& m = state.first_moment[i];
    float& v = state.second_moment[i];
    m = hp.beta1 * m + (1.f - hp.beta1) * g;
    v = hp.beta2 * v + (1.f - hp.beta2) * g * g;
    const float mhat = m / bc1;
    const float vhat = v / bc2;
    param[i] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
  }
}

Adam::Adam(std::vector<NamedParam> params, AdamHp hp) : hp_(hp) {
  slots_.reserve(params.size());
  for (auto& p : params) {
    Slot s;
    s.tensor = p.tensor;
    s.state.hp = hp;
    slots_.push_back(std::move(s));
  }
}

void Adam::step() {
  step_count_ += 1;
  for (auto& s : slots_) {
    if (s.tensor->grad.empty()) s.tensor->ensure_grad();
    adam_step(s.tensor->data, s.tensor->grad, s.state);
  }
}

void Adam::zero_grad() {
  for (auto& s : slots_) s.tensor->zero_grad();
}

}  // namespace ast
