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

#include "mssv/optim.h"

#include <algorithm>
#include <cmath>

#include "mssv/error.h"

namespace mssv {

void ValidateLrSchedule(const LrSchedule& schedule) {
  if (!(schedule.initial > 0.0) || !(schedule.decay > 0.0 && schedule.decay <= 1.0) ||
      schedule.period_epochs < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "learning-rate schedule needs initial > 0, 0 < decay <= 1, "
                "period >= 1");
  }
}

double LrAtEpoch(const LrSchedule& schedule, int epoch) {
  ValidateLrSchedule(schedule);
  if (epoch < 0) throw Error(ErrorCode::kInvalidArgument, "epoch must be >= 0");
  return schedule.initial * std::pow(schedule.decay, epoch / schedule.period_epochs);
}

void SgdStep(ParameterSet& params, double lr, double weight_decay) {
  for (auto& entry : params) {
    Parameter& p = *entry.param;
    for (size_t i = 0; i < p.value.size(); ++i) {
      p.value[i] -= lr * (p.grad[i] + weight_decay * p.value[i]);
    }
    p.grad.Fill(0.0);
  }
}

AdamState::AdamState(const ParameterSet& params, AdamConfig config)
    : config_(config) {
  for (const auto& entry : params) {
    m_.emplace_back(entry.param->value.dims(), 0.0);
    v_.emplace_back(entry.param->value.dims(), 0.0);
  }
}

void AdamStep(ParameterSet& params, AdamState& state, double lr) {
  if (state.m_.size() != params.size()) {
    throw Error(ErrorCode::kStateShapeMismatch,
                "Adam state tracks " + std::to_string(state.m_.size()) +
                    " parameters, set has " + std::to_string(params.size()));
  }
  size_t idx = 0;
  for (const auto& entry : params) {
    if (state.m_[idx].dims() != entry.param->value.dims()) {
      throw Error(ErrorCode::kStateShapeMismatch,
                  "Adam moments for " + entry.name + " are " +
                      DimsToString(state.m_[idx].dims()) + ", parameter is " +
                      DimsToString(entry.param->value.dims()));
    }
    ++idx;
  }

  const AdamConfig& c = state.config_;
  ++state.step_count_;
  const auto t = static_cast<double>(state.step_count_);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  idx = 0;
  for (auto& entry : params) {
    Parameter& p = *entry.param;
    Tensor& m = state.m_[idx];
    Tensor& v = state.v_[idx];
    for (size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i] + c.weight_decay * p.value[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p.value[i] -= lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
    p.grad.Fill(0.0);
    ++idx;
  }
}

bool EarlyStop(std::span<const double> history, int patience) {
  if (patience < 1) throw Error(ErrorCode::kInvalidArgument, "patience must be >= 1");
  if (history.empty()) return false;
  const auto best = std::min_element(history.begin(), history.end());
  const auto since_best = static_cast<long>(history.end() - best) - 1;
  return since_best > patience;
}

}  // namespace mssv
