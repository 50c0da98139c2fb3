/* Copyright 2026 The MSSV Authors. All Rights Reserved.

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

#ifndef MSSV_OPTIM_H_
#define MSSV_OPTIM_H_

#include <span>
#include <vector>

#include "mssv/nn.h"

namespace mssv {

// Step decay: initial * decay^floor(epoch / period_epochs).
struct LrSchedule {
  double initial = 0.001;
  double decay = 0.95;
  int period_epochs = 10;
};

void ValidateLrSchedule(const LrSchedule& schedule);
double LrAtEpoch(const LrSchedule& schedule, int epoch);

// theta -= lr * (g + weight_decay * theta), then gradients are zeroed.
void SgdStep(ParameterSet& params, double lr, double weight_decay);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // L2 penalty folded into the gradient before the moment updates.
  double weight_decay = 0.0;
};

// First and second moments for every parameter, in ParameterSet order.
class AdamState {
 public:
  AdamState() = default;
  AdamState(const ParameterSet& params, AdamConfig config = {});

  const AdamConfig& config() const { return config_; }
  long step_count() const { return step_count_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  friend void AdamStep(ParameterSet& params, AdamState& state, double lr);

  AdamConfig config_;
  long step_count_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

// Bias-corrected Adam update; gradients are zeroed afterwards. Throws
// kStateShapeMismatch if the state was built for a different parameter set.
void AdamStep(ParameterSet& params, AdamState& state, double lr);

// True iff the first minimum of `history` lies more than `patience` entries
// before the last one.
bool EarlyStop(std::span<const double> history, int patience);

}  // namespace mssv

#endif  // MSSV_OPTIM_H_
