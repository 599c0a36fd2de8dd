/* Copyright 2026 The SLT Baseline Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "slt/optim.hpp"

#include <cmath>
#include <numbers>

namespace slt::num {

Adam::Adam(std::vector<ParamGroup> groups, Options options) : options_(options) {
  for (auto& g : groups) {
    Group group{{}, g.lr};
    for (auto& p : g.params) {
      group.slots.push_back({p, std::vector<double>(p.size(), 0.0), std::vector<double>(p.size(), 0.0)});
    }
    groups_.push_back(std::move(group));
  }
}

void Adam::step(double lr_factor) {
  ++step_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (auto& group : groups_) {
    const double lr = group.lr * lr_factor;
    for (auto& slot : group.slots) {
      if (!slot.param.requires_grad()) continue;
      auto w = slot.param.mutable_values();
      auto g = slot.param.grad();
      const double decay = 1.0 - lr * options_.weight_decay;
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g.empty() ? 0.0 : g[i];
        slot.m[i] = options_.beta1 * slot.m[i] + (1.0 - options_.beta1) * gi;
        slot.v[i] = options_.beta2 * slot.v[i] + (1.0 - options_.beta2) * gi * gi;
        const double mhat = slot.m[i] / bc1, vhat = slot.v[i] / bc2;
        w[i] = w[i] * decay - lr * mhat / (std::sqrt(vhat) + options_.eps);
      }
    }
  }
}

void Adam::zero_grad() {
  for (auto& group : groups_)
    for (auto& slot : group.slots) slot.param.zero_grad();
}

double cosine_lr(double base, std::size_t step, std::size_t total_steps) {
  if (total_steps <= 1) return base;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps - 1);
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

}  // namespace slt::num
