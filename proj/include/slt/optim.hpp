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

#pragma once

#include <cstddef>
#include <vector>

#include "slt/tensor.hpp"

namespace slt::num {

struct ParamGroup {
  std::vector<Tensor> params;
  double lr = 1e-3;
};

/// Adam with decoupled weight decay. Parameters whose tensors do not require
/// a gradient (frozen) are skipped entirely.
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-3;
  };

  Adam(std::vector<ParamGroup> groups, Options options);

  /// Applies one update with every group's lr multiplied by `lr_factor`.
  void step(double lr_factor = 1.0);
  void zero_grad();
  std::size_t steps_taken() const { return step_; }

 private:
  struct Slot {
    Tensor param;
    std::vector<double> m, v;
  };
  struct Group {
    std::vector<Slot> slots;
    double lr;
  };
  std::vector<Group> groups_;
  Options options_;
  std::size_t step_ = 0;
};

/// Cosine annealing from `base` at step 0 down to 0 at `total_steps - 1`.
double cosine_lr(double base, std::size_t step, std::size_t total_steps);

}  // namespace slt::num
