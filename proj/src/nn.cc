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

#include "mssv/nn.h"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "mssv/error.h"

namespace mssv {
namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

[[noreturn]] void ShapeError(const std::string& layer, const std::string& expected,
                             const Dims& actual) {
  throw Error(ErrorCode::kShapeMismatch, layer + " expects input " + expected +
                                             ", got " + DimsToString(actual));
}

struct ConvGeometry {
  size_t batch, channels, height, width, out_h, out_w;
  bool batched;
};

}  // namespace

Parameter& ParameterSet::Add(const std::string& name, Tensor value) {
  if (Contains(name)) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate parameter name " + name);
  }
  auto param = std::make_unique<Parameter>();
  param->grad = Tensor(value.dims(), 0.0);
  param->value = std::move(value);
  entries_.push_back({name, std::move(param)});
  return *entries_.back().param;
}

Parameter& ParameterSet::Get(const std::string& name) {
  return const_cast<Parameter&>(std::as_const(*this).Get(name));
}

const Parameter& ParameterSet::Get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return *e.param;
  }
  throw Error(ErrorCode::kInvalidArgument, "no parameter named " + name);
}

bool ParameterSet::Contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.name == name; });
}

size_t ParameterSet::NumScalars() const {
  size_t n = 0;
  for (const auto& e : entries_) n += e.param->value.size();
  return n;
}

void ParameterSet::ZeroGrad() {
  for (auto& e : entries_) e.param->grad.Fill(0.0);
}

Tensor InitConstant(const Dims& dims, double c) { return Tensor(dims, c); }

Tensor InitKaimingNormal(const Dims& dims, size_t fan_in, Rng& rng) {
  if (fan_in < 1) throw Error(ErrorCode::kInvalidArgument, "fan_in must be >= 1");
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  Tensor t(dims);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Tensor InitXavierUniform(const Dims& dims, size_t fan_in, size_t fan_out,
                         Rng& rng) {
  if (fan_in < 1 || fan_out < 1) {
    throw Error(ErrorCode::kInvalidArgument, "fan_in and fan_out must be >= 1");
  }
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  Tensor t(dims);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Tensor Layer::Apply(const Tensor& input) const {
  OutputDims(input.dims());
  return ComputeForward(input);
}

Tensor Layer::Forward(const Tensor& input) {
  Tensor out = Apply(input);
  cached_input_ = input;
  return out;
}

Tensor Layer::Backward(const Tensor& grad_out) {
  if (!cached_input_) {
    throw Error(ErrorCode::kBackwardBeforeForward,
                name() + " backward called without a preceding forward");
  }
  const Dims expected = OutputDims(cached_input_->dims());
  if (grad_out.dims() != expected) {
    throw Error(ErrorCode::kShapeMismatch,
                name() + " backward expects gradient " + DimsToString(expected) +
                    ", got " + DimsToString(grad_out.dims()));
  }
  return ComputeBackward(*cached_input_, grad_out);
}

Conv2d::Conv2d(Parameter* weight, Parameter* bias, size_t stride)
    : weight_(weight), bias_(bias), stride_(stride) {
  const Dims& w = weight_->value.dims();
  if (w.size() != 4 || w[2] != w[3] || stride_ < 1 ||
      bias_->value.dims() != Dims{w[0]}) {
    throw Error(ErrorCode::kShapeMismatch,
                "conv2d needs weight [out, in, k, k], bias [out] and stride >= 1");
  }
}

Dims Conv2d::OutputDims(const Dims& input) const {
  const std::string expected =
      "[N, " + std::to_string(in_channels()) + ", H>=" +
      std::to_string(kernel()) + ", W>=" + std::to_string(kernel()) + "]";
  if (input.size() != 3 && input.size() != 4) ShapeError(name(), expected, input);
  const size_t off = input.size() - 3;
  const size_t c = input[off], h = input[off + 1], w = input[off + 2];
  if (c != in_channels() || h < kernel() || w < kernel()) {
    ShapeError(name(), expected, input);
  }
  Dims out(input.begin(), input.begin() + static_cast<long>(off));
  out.push_back(out_channels());
  out.push_back((h - kernel()) / stride_ + 1);
  out.push_back((w - kernel()) / stride_ + 1);
  return out;
}

namespace {

ConvGeometry Geometry(const Dims& in, size_t kernel, size_t stride) {
  const bool batched = in.size() == 4;
  const size_t off = batched ? 1 : 0;
  ConvGeometry g{batched ? in[0] : 1, in[off], in[off + 1], in[off + 2], 0, 0,
                 batched};
  g.out_h = (g.height - kernel) / stride + 1;
  g.out_w = (g.width - kernel) / stride + 1;
  return g;
}

// cols(r, p) with r = (c * k + kh) * k + kw and p = oh * out_w + ow.
void Im2Col(const double* in, const ConvGeometry& g, size_t k, size_t stride,
            RowMat& cols) {
  const size_t patches = g.out_h * g.out_w;
  cols.resize(static_cast<Eigen::Index>(g.channels * k * k),
              static_cast<Eigen::Index>(patches));
  for (size_t c = 0; c < g.channels; ++c) {
    const double* plane = in + c * g.height * g.width;
    for (size_t kh = 0; kh < k; ++kh) {
      for (size_t kw = 0; kw < k; ++kw) {
        double* dst = cols.data() + ((c * k + kh) * k + kw) * patches;
        for (size_t oh = 0; oh < g.out_h; ++oh) {
          const double* src = plane + (oh * stride + kh) * g.width + kw;
          for (size_t ow = 0; ow < g.out_w; ++ow) dst[oh * g.out_w + ow] = src[ow * stride];
        }
      }
    }
  }
}

void Col2ImAdd(const RowMat& cols, const ConvGeometry& g, size_t k,
               size_t stride, double* grad_in) {
  const size_t patches = g.out_h * g.out_w;
  for (size_t c = 0; c < g.channels; ++c) {
    double* plane = grad_in + c * g.height * g.width;
    for (size_t kh = 0; kh < k; ++kh) {
      for (size_t kw = 0; kw < k; ++kw) {
        const double* src = cols.data() + ((c * k + kh) * k + kw) * patches;
        for (size_t oh = 0; oh < g.out_h; ++oh) {
          double* dst = plane + (oh * stride + kh) * g.width + kw;
          for (size_t ow = 0; ow < g.out_w; ++ow) dst[ow * stride] += src[oh * g.out_w + ow];
        }
      }
    }
  }
}

}  // namespace

Tensor Conv2d::ComputeForward(const Tensor& input) const {
  const size_t k = kernel();
  const ConvGeometry g = Geometry(input.dims(), k, stride_);
  const size_t oc = out_channels();
  const size_t patches = g.out_h * g.out_w;
  const ConstMatMap w(weight_->value.data(), static_cast<Eigen::Index>(oc),
                      static_cast<Eigen::Index>(g.channels * k * k));
  const Eigen::Map<const Eigen::VectorXd> b(bias_->value.data(),
                                            static_cast<Eigen::Index>(oc));
  Tensor out(OutputDims(input.dims()));
  RowMat cols;
  for (size_t n = 0; n < g.batch; ++n) {
    Im2Col(input.data() + n * g.channels * g.height * g.width, g, k, stride_, cols);
    MatMap y(out.data() + n * oc * patches, static_cast<Eigen::Index>(oc),
             static_cast<Eigen::Index>(patches));
    y.noalias() = w * cols;
    y.colwise() += b;
  }
  return out;
}

Tensor Conv2d::ComputeBackward(const Tensor& input, const Tensor& grad_out) {
  const size_t k = kernel();
  const ConvGeometry g = Geometry(input.dims(), k, stride_);
  const size_t oc = out_channels();
  const size_t patches = g.out_h * g.out_w;
  const auto ckk = static_cast<Eigen::Index>(g.channels * k * k);
  const ConstMatMap w(weight_->value.data(), static_cast<Eigen::Index>(oc), ckk);
  MatMap dw(weight_->grad.data(), static_cast<Eigen::Index>(oc), ckk);
  Eigen::Map<Eigen::VectorXd> db(bias_->grad.data(), static_cast<Eigen::Index>(oc));

  Tensor grad_in(input.dims(), 0.0);
  RowMat cols;
  RowMat dcols;
  for (size_t n = 0; n < g.batch; ++n) {
    const size_t in_off = n * g.channels * g.height * g.width;
    Im2Col(input.data() + in_off, g, k, stride_, cols);
    const ConstMatMap gy(grad_out.data() + n * oc * patches,
                         static_cast<Eigen::Index>(oc),
                         static_cast<Eigen::Index>(patches));
    dw.noalias() += gy * cols.transpose();
    db += gy.rowwise().sum();
    dcols.noalias() = w.transpose() * gy;
    Col2ImAdd(dcols, g, k, stride_, grad_in.data() + in_off);
  }
  return grad_in;
}

Linear::Linear(Parameter* weight, Parameter* bias) : weight_(weight), bias_(bias) {
  const Dims& w = weight_->value.dims();
  if (w.size() != 2 || bias_->value.dims() != Dims{w[1]}) {
    throw Error(ErrorCode::kShapeMismatch, "linear needs weight [in, out], bias [out]");
  }
}

Dims Linear::OutputDims(const Dims& input) const {
  if (input.empty() || input.back() != in_features()) {
    ShapeError(name(), "[..., " + std::to_string(in_features()) + "]", input);
  }
  Dims out = input;
  out.back() = out_features();
  return out;
}

Tensor Linear::ComputeForward(const Tensor& input) const {
  const auto in = static_cast<Eigen::Index>(in_features());
  const auto outf = static_cast<Eigen::Index>(out_features());
  const auto rows = static_cast<Eigen::Index>(input.size()) / in;
  const ConstMatMap x(input.data(), rows, in);
  const ConstMatMap w(weight_->value.data(), in, outf);
  const Eigen::Map<const Eigen::RowVectorXd> b(bias_->value.data(), outf);
  Tensor out(OutputDims(input.dims()));
  MatMap y(out.data(), rows, outf);
  y.noalias() = x * w;
  y.rowwise() += b;
  return out;
}

Tensor Linear::ComputeBackward(const Tensor& input, const Tensor& grad_out) {
  const auto in = static_cast<Eigen::Index>(in_features());
  const auto outf = static_cast<Eigen::Index>(out_features());
  const auto rows = static_cast<Eigen::Index>(input.size()) / in;
  const ConstMatMap x(input.data(), rows, in);
  const ConstMatMap w(weight_->value.data(), in, outf);
  const ConstMatMap gy(grad_out.data(), rows, outf);
  MatMap dw(weight_->grad.data(), in, outf);
  Eigen::Map<Eigen::RowVectorXd> db(bias_->grad.data(), outf);
  dw.noalias() += x.transpose() * gy;
  db += gy.colwise().sum();
  Tensor grad_in(input.dims());
  MatMap gx(grad_in.data(), rows, in);
  gx.noalias() = gy * w.transpose();
  return grad_in;
}

Tensor Relu::ComputeForward(const Tensor& input) const {
  Tensor out = input;
  for (double& v : out.values()) v = std::max(v, 0.0);
  return out;
}

Tensor Relu::ComputeBackward(const Tensor& input, const Tensor& grad_out) {
  Tensor grad_in = grad_out;
  for (size_t i = 0; i < grad_in.size(); ++i) {
    if (input[i] <= 0.0) grad_in[i] = 0.0;
  }
  return grad_in;
}

Dims TemporalMeanPool::OutputDims(const Dims& input) const {
  if (input.size() != 2 && input.size() != 3) {
    ShapeError(name(), "[N, T, D] or [T, D]", input);
  }
  Dims out = input;
  out.erase(out.end() - 2);
  return out;
}

Tensor TemporalMeanPool::ComputeForward(const Tensor& input) const {
  const Dims& d = input.dims();
  const size_t frames = d[d.size() - 2];
  const size_t width = d.back();
  const size_t batch = input.size() / (frames * width);
  Tensor out(OutputDims(d), 0.0);
  for (size_t n = 0; n < batch; ++n) {
    double* dst = out.data() + n * width;
    for (size_t t = 0; t < frames; ++t) {
      const double* src = input.data() + (n * frames + t) * width;
      for (size_t j = 0; j < width; ++j) dst[j] += src[j];
    }
    for (size_t j = 0; j < width; ++j) dst[j] /= static_cast<double>(frames);
  }
  return out;
}

Tensor TemporalMeanPool::ComputeBackward(const Tensor& input,
                                         const Tensor& grad_out) {
  const Dims& d = input.dims();
  const size_t frames = d[d.size() - 2];
  const size_t width = d.back();
  const size_t batch = input.size() / (frames * width);
  Tensor grad_in(d);
  const double scale = 1.0 / static_cast<double>(frames);
  for (size_t n = 0; n < batch; ++n) {
    const double* src = grad_out.data() + n * width;
    for (size_t t = 0; t < frames; ++t) {
      double* dst = grad_in.data() + (n * frames + t) * width;
      for (size_t j = 0; j < width; ++j) dst[j] = src[j] * scale;
    }
  }
  return grad_in;
}

Dims FrameFlatten::OutputDims(const Dims& input) const {
  if (input.size() != 4) ShapeError(name(), "[N, C, T, F]", input);
  return {input[0], input[2], input[1] * input[3]};
}

Tensor FrameFlatten::ComputeForward(const Tensor& input) const {
  const Dims& d = input.dims();
  const size_t batch = d[0], channels = d[1], frames = d[2], freq = d[3];
  Tensor out(OutputDims(d));
  for (size_t n = 0; n < batch; ++n) {
    for (size_t c = 0; c < channels; ++c) {
      for (size_t t = 0; t < frames; ++t) {
        const double* src = input.data() + ((n * channels + c) * frames + t) * freq;
        double* dst = out.data() + (n * frames + t) * channels * freq + c * freq;
        std::copy(src, src + freq, dst);
      }
    }
  }
  return out;
}

Tensor FrameFlatten::ComputeBackward(const Tensor& input, const Tensor& grad_out) {
  const Dims& d = input.dims();
  const size_t batch = d[0], channels = d[1], frames = d[2], freq = d[3];
  Tensor grad_in(d);
  for (size_t n = 0; n < batch; ++n) {
    for (size_t c = 0; c < channels; ++c) {
      for (size_t t = 0; t < frames; ++t) {
        const double* src =
            grad_out.data() + (n * frames + t) * channels * freq + c * freq;
        double* dst = grad_in.data() + ((n * channels + c) * frames + t) * freq;
        std::copy(src, src + freq, dst);
      }
    }
  }
  return grad_in;
}

void Sequential::Append(std::unique_ptr<Layer> layer) {
  layers_.push_back(std::move(layer));
}

Tensor Sequential::Apply(const Tensor& input) const {
  Tensor x = input;
  for (const auto& layer : layers_) x = layer->Apply(x);
  return x;
}

Tensor Sequential::Forward(const Tensor& input) {
  Tensor x = input;
  for (auto& layer : layers_) x = layer->Forward(x);
  return x;
}

Tensor Sequential::Backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    g = (*it)->Backward(g);
  }
  return g;
}

Dims Sequential::OutputDims(const Dims& input) const {
  Dims d = input;
  for (const auto& layer : layers_) d = layer->OutputDims(d);
  return d;
}

double RelativeError(double analytic, double numeric) {
  const double scale =
      std::max({std::abs(analytic), std::abs(numeric), kRelativeErrorFloor});
  return std::abs(analytic - numeric) / scale;
}

Tensor NumericGradient(const std::function<double(const Tensor&)>& f,
                       const Tensor& x, double eps) {
  Tensor grad(x.dims());
  Tensor probe = x;
  for (size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double plus = f(probe);
    probe[i] = x[i] - eps;
    const double minus = f(probe);
    probe[i] = x[i];
    grad[i] = (plus - minus) / (2.0 * eps);
  }
  return grad;
}

double MaxRelativeError(const Tensor& analytic, const Tensor& numeric) {
  if (analytic.dims() != numeric.dims()) {
    throw Error(ErrorCode::kShapeMismatch,
                "gradient dims " + DimsToString(analytic.dims()) + " vs " +
                    DimsToString(numeric.dims()));
  }
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, RelativeError(analytic[i], numeric[i]));
  }
  return worst;
}

double GradCheck(Layer& layer, const Tensor& input, double eps, Rng& rng) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw Error(ErrorCode::kInvalidArgument, "eps must lie in (0, 1e-2]");
  }
  const Dims out_dims = layer.OutputDims(input.dims());
  Tensor projection(out_dims);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : projection.values()) v = normal(rng);
  auto projected = [&](const Tensor& y) {
    double s = 0.0;
    for (size_t i = 0; i < y.size(); ++i) s += projection[i] * y[i];
    return s;
  };

  std::vector<Parameter*> params = layer.parameters();
  std::vector<Tensor> saved_grads;
  for (Parameter* p : params) {
    saved_grads.push_back(p->grad);
    p->grad.Fill(0.0);
  }

  layer.Forward(input);
  const Tensor grad_input = layer.Backward(projection);
  layer.ClearCache();

  double worst = MaxRelativeError(
      grad_input,
      NumericGradient([&](const Tensor& x) { return projected(layer.Apply(x)); },
                      input, eps));

  for (Parameter* p : params) {
    const Tensor original = p->value;
    const Tensor numeric = NumericGradient(
        [&](const Tensor& v) {
          p->value = v;
          return projected(layer.Apply(input));
        },
        original, eps);
    p->value = original;
    worst = std::max(worst, MaxRelativeError(p->grad, numeric));
  }

  for (size_t i = 0; i < params.size(); ++i) params[i]->grad = saved_grads[i];
  return worst;
}

}  // namespace mssv
