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

#ifndef MSSV_TENSOR_H_
#define MSSV_TENSOR_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mssv {

using Dims = std::vector<size_t>;

size_t NumElements(const Dims& dims);
std::string DimsToString(const Dims& dims);

// Dense row-major array of doubles. Dims are non-empty and strictly positive.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Dims dims, double fill = 0.0);
  Tensor(Dims dims, std::vector<double> data);

  const Dims& dims() const { return dims_; }
  size_t rank() const { return dims_.size(); }
  size_t dim(size_t axis) const { return dims_.at(axis); }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& vector() const { return data_; }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  void Fill(double v);
  bool AllFinite() const;
  // Same data under new dims with an equal element count.
  Tensor Reshaped(Dims dims) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Dims dims_;
  std::vector<double> data_;
};

}  // namespace mssv

#endif  // MSSV_TENSOR_H_
