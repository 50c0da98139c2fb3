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

#ifndef MSSV_LOSSES_H_
#define MSSV_LOSSES_H_

#include <span>

#include "mssv/tensor.h"

namespace mssv {

struct LossOutput {
  double value = 0.0;
  Tensor grad;  // w.r.t. the loss input, same dims
};

// Mean over rows of -ln softmax(logits)[label], with grad (softmax - onehot)/N.
// logits: [N, C].
LossOutput SoftmaxCrossEntropy(const Tensor& logits, std::span<const size_t> labels);

struct MarginSoftmaxOutput {
  double value = 0.0;
  Tensor grad;                // w.r.t. embeddings [N, D]
  Tensor class_weights_grad;  // w.r.t. class weights [C, D]
};

// Additive cosine margin: logits s * cos(theta_c), with s * m subtracted from
// the target logit. Rows and class weights are L2-normalized.
MarginSoftmaxOutput AmSoftmax(const Tensor& embeddings, const Tensor& class_weights,
                              std::span<const size_t> labels, double margin,
                              double scale);

// Additive angular margin: the target logit becomes s * cos(min(theta_y + m, pi)).
MarginSoftmaxOutput AamSoftmax(const Tensor& embeddings, const Tensor& class_weights,
                               std::span<const size_t> labels, double margin,
                               double scale);

// embeddings: [N speakers, M utterances, D]; utterance M-1 of each speaker is
// its query and utterances 0..M-2 form its prototype.
struct MetricBatch {
  Tensor embeddings;

  size_t num_speakers() const { return embeddings.dim(0); }
  size_t utts_per_speaker() const { return embeddings.dim(1); }
  size_t dim() const { return embeddings.dim(2); }
};

struct PrototypicalOutput {
  double value = 0.0;
  Tensor grad;  // w.r.t. embeddings, same dims as the batch
  double scale_grad = 0.0;
  double bias_grad = 0.0;
};

// Softmax over S[j, k] = w * cos(query_j, prototype_k) + b with target k = j,
// averaged over speakers.
PrototypicalOutput AngularPrototypical(const MetricBatch& batch, double w, double b);

struct CombinedLossWeights {
  double softmax = 1.0;
  double prototypical = 1.0;
};

struct CombinedLossOutput {
  double value = 0.0;
  double softmax_value = 0.0;
  double prototypical_value = 0.0;
  Tensor logits_grad;
  Tensor embeddings_grad;  // prototypical part only, same dims as the batch
  double scale_grad = 0.0;
  double bias_grad = 0.0;
};

// weights.softmax * CE(logits) + weights.prototypical * AP(batch). The logits
// are normally computed from the same embeddings; the caller chains
// logits_grad back through its classifier and adds it to embeddings_grad.
CombinedLossOutput CombinedLoss(const Tensor& logits, std::span<const size_t> labels,
                                const MetricBatch& batch, double w, double b,
                                const CombinedLossWeights& weights = {});

}  // namespace mssv

#endif  // MSSV_LOSSES_H_
