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

#ifndef MSSV_NN_H_
#define MSSV_NN_H_

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mssv/audio.h"
#include "mssv/tensor.h"

namespace mssv {

struct Parameter {
  Tensor value;
  Tensor grad;  // same dims as value
};

// Named parameters in insertion order. Addresses returned by Add() stay valid
// for the lifetime of the set, including across moves.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    std::unique_ptr<Parameter> param;
  };

  Parameter& Add(const std::string& name, Tensor value);
  Parameter& Get(const std::string& name);
  const Parameter& Get(const std::string& name) const;
  bool Contains(const std::string& name) const;

  size_t size() const { return entries_.size(); }
  size_t NumScalars() const;
  std::vector<Entry>::iterator begin() { return entries_.begin(); }
  std::vector<Entry>::iterator end() { return entries_.end(); }
  std::vector<Entry>::const_iterator begin() const { return entries_.begin(); }
  std::vector<Entry>::const_iterator end() const { return entries_.end(); }

  void ZeroGrad();

 private:
  std::vector<Entry> entries_;
};

Tensor InitConstant(const Dims& dims, double c);
// Normal(0, 2 / fan_in).
Tensor InitKaimingNormal(const Dims& dims, size_t fan_in, Rng& rng);
// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor InitXavierUniform(const Dims& dims, size_t fan_in, size_t fan_out,
                         Rng& rng);

enum class LayerKind { kConv2d, kLinear, kRelu, kTemporalMeanPool, kFrameFlatten };

// A layer maps one tensor to another. Forward() caches its input for the
// following Backward(); Apply() is the cache-free path used for inference and
// finite differences.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual std::string name() const = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }

  // Throws kShapeMismatch naming expected vs actual dims.
  virtual Dims OutputDims(const Dims& input) const = 0;

  Tensor Apply(const Tensor& input) const;
  Tensor Forward(const Tensor& input);
  // Returns dL/d(input) and adds parameter gradients into their Parameter.
  Tensor Backward(const Tensor& grad_out);

  bool has_cached_input() const { return cached_input_.has_value(); }
  void ClearCache() { cached_input_.reset(); }

 protected:
  virtual Tensor ComputeForward(const Tensor& input) const = 0;
  virtual Tensor ComputeBackward(const Tensor& input, const Tensor& grad_out) = 0;

 private:
  std::optional<Tensor> cached_input_;
};

// Valid cross-correlation over [N, C, H, W] (or [C, H, W]) with square
// kernels and equal stride on both spatial axes.
class Conv2d : public Layer {
 public:
  Conv2d(Parameter* weight, Parameter* bias, size_t stride);

  LayerKind kind() const override { return LayerKind::kConv2d; }
  std::string name() const override { return "conv2d"; }
  std::vector<Parameter*> parameters() override { return {weight_, bias_}; }
  Dims OutputDims(const Dims& input) const override;

  size_t in_channels() const { return weight_->value.dim(1); }
  size_t out_channels() const { return weight_->value.dim(0); }
  size_t kernel() const { return weight_->value.dim(2); }
  size_t stride() const { return stride_; }

 protected:
  Tensor ComputeForward(const Tensor& input) const override;
  Tensor ComputeBackward(const Tensor& input, const Tensor& grad_out) override;

 private:
  Parameter* weight_;  // [out_c, in_c, k, k]
  Parameter* bias_;    // [out_c]
  size_t stride_;
};

// y = x W + b over the last axis; any leading dims are treated as rows.
class Linear : public Layer {
 public:
  Linear(Parameter* weight, Parameter* bias);

  LayerKind kind() const override { return LayerKind::kLinear; }
  std::string name() const override { return "linear"; }
  std::vector<Parameter*> parameters() override { return {weight_, bias_}; }
  Dims OutputDims(const Dims& input) const override;

  size_t in_features() const { return weight_->value.dim(0); }
  size_t out_features() const { return weight_->value.dim(1); }

 protected:
  Tensor ComputeForward(const Tensor& input) const override;
  Tensor ComputeBackward(const Tensor& input, const Tensor& grad_out) override;

 private:
  Parameter* weight_;  // [in, out]
  Parameter* bias_;    // [out]
};

class Relu : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::kRelu; }
  std::string name() const override { return "relu"; }
  Dims OutputDims(const Dims& input) const override { return input; }

 protected:
  Tensor ComputeForward(const Tensor& input) const override;
  Tensor ComputeBackward(const Tensor& input, const Tensor& grad_out) override;
};

// Mean over the time axis: [N, T, D] -> [N, D], or [T, D] -> [D].
class TemporalMeanPool : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::kTemporalMeanPool; }
  std::string name() const override { return "temporal_mean_pool"; }
  Dims OutputDims(const Dims& input) const override;

 protected:
  Tensor ComputeForward(const Tensor& input) const override;
  Tensor ComputeBackward(const Tensor& input, const Tensor& grad_out) override;
};

// Per-frame flatten of conv feature maps: [N, C, T, F] -> [N, T, C*F] with
// out[n, t, c*F + f] = in[n, c, t, f].
class FrameFlatten : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::kFrameFlatten; }
  std::string name() const override { return "frame_flatten"; }
  Dims OutputDims(const Dims& input) const override;

 protected:
  Tensor ComputeForward(const Tensor& input) const override;
  Tensor ComputeBackward(const Tensor& input, const Tensor& grad_out) override;
};

class Sequential {
 public:
  void Append(std::unique_ptr<Layer> layer);

  Tensor Apply(const Tensor& input) const;
  Tensor Forward(const Tensor& input);
  Tensor Backward(const Tensor& grad_out);
  Dims OutputDims(const Dims& input) const;

  size_t size() const { return layers_.size(); }
  const Layer& layer(size_t i) const { return *layers_.at(i); }
  Layer& layer(size_t i) { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps near-zero
// gradients from turning rounding noise into large ratios.
inline constexpr double kRelativeErrorFloor = 1e-3;
double RelativeError(double analytic, double numeric);

// Central differences (f(x + eps) - f(x - eps)) / (2 eps) for every element.
Tensor NumericGradient(const std::function<double(const Tensor&)>& f,
                       const Tensor& x, double eps);

// Worst RelativeError over elementwise pairs; dims must match.
double MaxRelativeError(const Tensor& analytic, const Tensor& numeric);

// Compares Backward() against central differences for every input element
// and parameter under the loss sum(r * layer(x)) with a random projection r.
// Parameter gradients are restored afterwards. eps must lie in (0, 1e-2].
double GradCheck(Layer& layer, const Tensor& input, double eps, Rng& rng);

}  // namespace mssv

#endif  // MSSV_NN_H_
