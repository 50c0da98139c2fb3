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

#include "mssv/losses.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "mssv/error.h"

namespace mssv {
namespace {

// Replaces row with softmax(row) and returns -ln softmax(row)[label]. The
// partition function is accumulated as 1 + rest around the largest logit so
// that log1p keeps tiny losses exact.
double SoftmaxInPlace(std::span<double> row, size_t label) {
  const auto top = std::max_element(row.begin(), row.end());
  const double max = *top;
  const double target = row[label] - max;
  double rest = 0.0;
  for (auto it = row.begin(); it != row.end(); ++it) {
    *it = std::exp(*it - max);
    if (it != top) rest += *it;
  }
  const double total = 1.0 + rest;
  for (double& v : row) v /= total;
  return std::log1p(rest) - target;
}

struct Normalized {
  std::vector<double> unit;  // rows * dim
  std::vector<double> norm;  // rows
};

Normalized NormalizeRows(const double* data, size_t rows, size_t dim,
                         ErrorCode code, const char* what) {
  Normalized out{std::vector<double>(rows * dim), std::vector<double>(rows)};
  for (size_t i = 0; i < rows; ++i) {
    double sq = 0.0;
    for (size_t d = 0; d < dim; ++d) sq += data[i * dim + d] * data[i * dim + d];
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw Error(code, std::string(what) + " row " + std::to_string(i) +
                            " has zero or non-finite norm");
    }
    out.norm[i] = norm;
    for (size_t d = 0; d < dim; ++d) out.unit[i * dim + d] = data[i * dim + d] / norm;
  }
  return out;
}

// Gradient through x -> x / |x| given dL/d(unit) in g.
void NormalizeBackward(const double* g, const double* unit, double norm,
                       size_t dim, double* out) {
  double dot = 0.0;
  for (size_t d = 0; d < dim; ++d) dot += g[d] * unit[d];
  for (size_t d = 0; d < dim; ++d) out[d] = (g[d] - dot * unit[d]) / norm;
}

void CheckLabels(std::span<const size_t> labels, size_t rows, size_t classes) {
  if (labels.size() != rows) {
    throw Error(ErrorCode::kShapeMismatch,
                std::to_string(labels.size()) + " labels for " +
                    std::to_string(rows) + " rows");
  }
  for (size_t i = 0; i < rows; ++i) {
    if (labels[i] >= classes) {
      throw Error(ErrorCode::kLabelOutOfRange,
                  "label " + std::to_string(labels[i]) + " at row " +
                      std::to_string(i) + " outside [0, " +
                      std::to_string(classes) + ")");
    }
  }
}

enum class MarginKind { kAdditiveCosine, kAdditiveAngle };

MarginSoftmaxOutput MarginSoftmax(const Tensor& embeddings,
                                  const Tensor& class_weights,
                                  std::span<const size_t> labels, double margin,
                                  double scale, MarginKind kind) {
  if (embeddings.rank() != 2 || class_weights.rank() != 2 ||
      embeddings.dim(1) != class_weights.dim(1)) {
    throw Error(ErrorCode::kShapeMismatch,
                "margin softmax needs embeddings [N, D] and class weights [C, D], got " +
                    DimsToString(embeddings.dims()) + " and " +
                    DimsToString(class_weights.dims()));
  }
  if (!(margin >= 0.0) || !(scale > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "margin must be >= 0 and scale > 0");
  }
  const size_t n = embeddings.dim(0);
  const size_t classes = class_weights.dim(0);
  const size_t dim = embeddings.dim(1);
  CheckLabels(labels, n, classes);

  const Normalized x = NormalizeRows(embeddings.data(), n, dim,
                                     ErrorCode::kZeroNormRow, "embedding");
  const Normalized w = NormalizeRows(class_weights.data(), classes, dim,
                                     ErrorCode::kZeroNormRow, "class weight");

  MarginSoftmaxOutput out;
  // dL/dcos for every (row, class).
  std::vector<double> dcos(n * classes);
  std::vector<double> row(classes);
  for (size_t i = 0; i < n; ++i) {
    const size_t y = labels[i];
    double target_slope = 1.0;
    for (size_t c = 0; c < classes; ++c) {
      double cos = 0.0;
      for (size_t d = 0; d < dim; ++d) cos += x.unit[i * dim + d] * w.unit[c * dim + d];
      cos = std::clamp(cos, -1.0, 1.0);
      if (c != y) {
        row[c] = scale * cos;
      } else if (kind == MarginKind::kAdditiveCosine) {
        row[c] = scale * (cos - margin);
      } else {
        const double theta = std::acos(cos);
        const double shifted = theta + margin;
        if (shifted >= std::numbers::pi) {
          row[c] = -scale;
          target_slope = 0.0;
        } else {
          row[c] = scale * std::cos(shifted);
          // d cos(theta + m) / d cos(theta) = sin(theta + m) / sin(theta).
          const double sin_theta = std::sin(theta);
          target_slope = margin == 0.0
                             ? 1.0
                             : std::sin(shifted) / std::max(sin_theta, 1e-12);
        }
      }
    }
    out.value += SoftmaxInPlace(row, y);
    for (size_t c = 0; c < classes; ++c) {
      const double dz = (row[c] - (c == y ? 1.0 : 0.0)) / static_cast<double>(n);
      dcos[i * classes + c] = dz * scale * (c == y ? target_slope : 1.0);
    }
  }
  out.value /= static_cast<double>(n);

  out.grad = Tensor(embeddings.dims(), 0.0);
  out.class_weights_grad = Tensor(class_weights.dims(), 0.0);
  std::vector<double> g(dim);
  for (size_t i = 0; i < n; ++i) {
    std::fill(g.begin(), g.end(), 0.0);
    for (size_t c = 0; c < classes; ++c) {
      const double s = dcos[i * classes + c];
      for (size_t d = 0; d < dim; ++d) g[d] += s * w.unit[c * dim + d];
    }
    NormalizeBackward(g.data(), &x.unit[i * dim], x.norm[i], dim,
                      out.grad.data() + i * dim);
  }
  for (size_t c = 0; c < classes; ++c) {
    std::fill(g.begin(), g.end(), 0.0);
    for (size_t i = 0; i < n; ++i) {
      const double s = dcos[i * classes + c];
      for (size_t d = 0; d < dim; ++d) g[d] += s * x.unit[i * dim + d];
    }
    NormalizeBackward(g.data(), &w.unit[c * dim], w.norm[c], dim,
                      out.class_weights_grad.data() + c * dim);
  }
  return out;
}

}  // namespace

LossOutput SoftmaxCrossEntropy(const Tensor& logits, std::span<const size_t> labels) {
  if (logits.rank() != 2) {
    throw Error(ErrorCode::kShapeMismatch,
                "logits must be [N, C], got " + DimsToString(logits.dims()));
  }
  const size_t n = logits.dim(0);
  const size_t classes = logits.dim(1);
  CheckLabels(labels, n, classes);
  LossOutput out;
  out.grad = logits;
  for (size_t i = 0; i < n; ++i) {
    std::span<double> row(out.grad.data() + i * classes, classes);
    out.value += SoftmaxInPlace(row, labels[i]);
    row[labels[i]] -= 1.0;
    for (double& v : row) v /= static_cast<double>(n);
  }
  out.value /= static_cast<double>(n);
  return out;
}

MarginSoftmaxOutput AmSoftmax(const Tensor& embeddings, const Tensor& class_weights,
                              std::span<const size_t> labels, double margin,
                              double scale) {
  return MarginSoftmax(embeddings, class_weights, labels, margin, scale,
                       MarginKind::kAdditiveCosine);
}

MarginSoftmaxOutput AamSoftmax(const Tensor& embeddings, const Tensor& class_weights,
                               std::span<const size_t> labels, double margin,
                               double scale) {
  return MarginSoftmax(embeddings, class_weights, labels, margin, scale,
                       MarginKind::kAdditiveAngle);
}

PrototypicalOutput AngularPrototypical(const MetricBatch& batch, double w, double b) {
  const Tensor& e = batch.embeddings;
  if (e.rank() != 3) {
    throw Error(ErrorCode::kDegenerateBatch,
                "metric batch must be [N, M, D], got " + DimsToString(e.dims()));
  }
  const size_t n = batch.num_speakers();
  const size_t m = batch.utts_per_speaker();
  const size_t dim = batch.dim();
  if (m < 2) {
    throw Error(ErrorCode::kDegenerateBatch,
                "need at least 2 utterances per speaker, got " + std::to_string(m));
  }
  const size_t support = m - 1;

  std::vector<double> queries(n * dim);
  std::vector<double> protos(n * dim, 0.0);
  for (size_t j = 0; j < n; ++j) {
    const double* spk = e.data() + j * m * dim;
    std::copy(spk + support * dim, spk + m * dim, queries.begin() + j * dim);
    for (size_t u = 0; u < support; ++u) {
      for (size_t d = 0; d < dim; ++d) protos[j * dim + d] += spk[u * dim + d];
    }
    for (size_t d = 0; d < dim; ++d) protos[j * dim + d] /= static_cast<double>(support);
  }
  const Normalized q = NormalizeRows(queries.data(), n, dim,
                                     ErrorCode::kDegenerateBatch, "query");
  const Normalized c = NormalizeRows(protos.data(), n, dim,
                                     ErrorCode::kDegenerateBatch, "prototype");

  PrototypicalOutput out;
  std::vector<double> cos(n * n);
  std::vector<double> dsim(n * n);
  std::vector<double> row(n);
  for (size_t j = 0; j < n; ++j) {
    for (size_t k = 0; k < n; ++k) {
      double dot = 0.0;
      for (size_t d = 0; d < dim; ++d) dot += q.unit[j * dim + d] * c.unit[k * dim + d];
      cos[j * n + k] = dot;
      row[k] = w * dot + b;
    }
    out.value += SoftmaxInPlace(row, j);
    for (size_t k = 0; k < n; ++k) {
      dsim[j * n + k] = (row[k] - (k == j ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  out.value /= static_cast<double>(n);

  for (size_t i = 0; i < n * n; ++i) {
    out.scale_grad += dsim[i] * cos[i];
    out.bias_grad += dsim[i];
  }

  out.grad = Tensor(e.dims(), 0.0);
  std::vector<double> g(dim);
  std::vector<double> grad_vec(dim);
  for (size_t j = 0; j < n; ++j) {
    std::fill(g.begin(), g.end(), 0.0);
    for (size_t k = 0; k < n; ++k) {
      const double s = w * dsim[j * n + k];
      for (size_t d = 0; d < dim; ++d) g[d] += s * c.unit[k * dim + d];
    }
    NormalizeBackward(g.data(), &q.unit[j * dim], q.norm[j], dim, grad_vec.data());
    double* dst = out.grad.data() + (j * m + support) * dim;
    for (size_t d = 0; d < dim; ++d) dst[d] += grad_vec[d];
  }
  for (size_t k = 0; k < n; ++k) {
    std::fill(g.begin(), g.end(), 0.0);
    for (size_t j = 0; j < n; ++j) {
      const double s = w * dsim[j * n + k];
      for (size_t d = 0; d < dim; ++d) g[d] += s * q.unit[j * dim + d];
    }
    NormalizeBackward(g.data(), &c.unit[k * dim], c.norm[k], dim, grad_vec.data());
    for (size_t u = 0; u < support; ++u) {
      double* dst = out.grad.data() + (k * m + u) * dim;
      for (size_t d = 0; d < dim; ++d) dst[d] += grad_vec[d] / static_cast<double>(support);
    }
  }
  return out;
}

CombinedLossOutput CombinedLoss(const Tensor& logits, std::span<const size_t> labels,
                                const MetricBatch& batch, double w, double b,
                                const CombinedLossWeights& weights) {
  LossOutput ce = SoftmaxCrossEntropy(logits, labels);
  PrototypicalOutput ap = AngularPrototypical(batch, w, b);

  CombinedLossOutput out;
  out.softmax_value = ce.value;
  out.prototypical_value = ap.value;
  out.value = weights.softmax * ce.value + weights.prototypical * ap.value;
  out.logits_grad = std::move(ce.grad);
  for (double& v : out.logits_grad.values()) v *= weights.softmax;
  out.embeddings_grad = std::move(ap.grad);
  for (double& v : out.embeddings_grad.values()) v *= weights.prototypical;
  out.scale_grad = weights.prototypical * ap.scale_grad;
  out.bias_grad = weights.prototypical * ap.bias_grad;
  return out;
}

}  // namespace mssv
