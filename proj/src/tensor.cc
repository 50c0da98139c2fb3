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

#include "mssv/tensor.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "mssv/error.h"

namespace mssv {

size_t NumElements(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), size_t{1},
                         std::multiplies<>());
}

std::string DimsToString(const Dims& dims) {
  std::string s = "[";
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

namespace {

void CheckDims(const Dims& dims) {
  if (dims.empty() || std::find(dims.begin(), dims.end(), 0) != dims.end()) {
    throw Error(ErrorCode::kShapeMismatch,
                "tensor dims must be non-empty and positive, got " +
                    DimsToString(dims));
  }
}

}  // namespace

Tensor::Tensor(Dims dims, double fill) : dims_(std::move(dims)) {
  CheckDims(dims_);
  data_.assign(NumElements(dims_), fill);
}

Tensor::Tensor(Dims dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  CheckDims(dims_);
  if (data_.size() != NumElements(dims_)) {
    throw Error(ErrorCode::kShapeMismatch,
                "dims " + DimsToString(dims_) + " need " +
                    std::to_string(NumElements(dims_)) + " values, got " +
                    std::to_string(data_.size()));
  }
}

void Tensor::Fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

Tensor Tensor::Reshaped(Dims dims) const { return Tensor(std::move(dims), data_); }

}  // namespace mssv
