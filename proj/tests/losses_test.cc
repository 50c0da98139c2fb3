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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.h"
#include "test_util.h"

namespace mssv {
namespace {

Tensor Random(const Dims& dims, Rng& rng, double sd = 1.0) {
  Tensor t(dims);
  std::normal_distribution<double> n(0.0, sd);
  for (double& v : t.values()) v = n(rng);
  return t;
}

// -ln softmax in long double, straight from the definition.
long double NaiveCe(const Tensor& logits, const std::vector<size_t>& labels) {
  const size_t n = logits.dim(0), c = logits.dim(1);
  long double total = 0;
  for (size_t i = 0; i < n; ++i) {
    long double z = 0;
    for (size_t j = 0; j < c; ++j) z += std::exp(static_cast<long double>(logits[i * c + j]));
    total += -std::log(std::exp(static_cast<long double>(logits[i * c + labels[i]])) / z);
  }
  return total / n;
}

TEST(SoftmaxCeTest, UniformLogits) {
  const std::vector<size_t> labels = {2};
  EXPECT_NEAR(SoftmaxCrossEntropy(Tensor({1, 4}, {0.3, 0.3, 0.3, 0.3}), labels).value,
              std::log(4.0), 1e-12);
  EXPECT_NEAR(std::log(4.0), 1.38629, 1e-5);
}

TEST(SoftmaxCeTest, Saturation) {
  const std::vector<size_t> labels = {1};
  const auto out = SoftmaxCrossEntropy(Tensor({1, 3}, {0, 1000, 0}), labels);
  EXPECT_LT(out.value, 1e-6);
  EXPECT_GE(out.value, 0.0);
}

TEST(SoftmaxCeTest, MatchesNaiveOracle) {
  Rng rng(1);
  const Tensor logits = Random({3, 5}, rng, 2.0);
  const std::vector<size_t> labels = {4, 0, 2};
  EXPECT_NEAR(SoftmaxCrossEntropy(logits, labels).value,
              static_cast<double>(NaiveCe(logits, labels)), 1e-10);
}

TEST(SoftmaxCeTest, Errors) {
  const std::vector<size_t> bad = {3};
  EXPECT_MSSV_ERROR(SoftmaxCrossEntropy(Tensor({1, 3}), bad), ErrorCode::kLabelOutOfRange);
  const std::vector<size_t> two = {0, 1};
  EXPECT_MSSV_ERROR(SoftmaxCrossEntropy(Tensor({1, 3}), two), ErrorCode::kShapeMismatch);
}

TEST(MarginSoftmaxTest, ZeroMarginReducesToScaledCosineCe) {
  Rng rng(2);
  const Tensor e = Random({4, 5}, rng);
  const Tensor w = Random({3, 5}, rng);
  const std::vector<size_t> labels = {0, 2, 1, 2};
  const double s = 7.5;
  Tensor logits({4, 3});
  for (size_t i = 0; i < 4; ++i) {
    for (size_t c = 0; c < 3; ++c) {
      double dot = 0, ne = 0, nw = 0;
      for (size_t k = 0; k < 5; ++k) {
        dot += e[i * 5 + k] * w[c * 5 + k];
        ne += e[i * 5 + k] * e[i * 5 + k];
        nw += w[c * 5 + k] * w[c * 5 + k];
      }
      logits[i * 3 + c] = s * dot / std::sqrt(ne * nw);
    }
  }
  const double ce = SoftmaxCrossEntropy(logits, labels).value;
  EXPECT_NEAR(AmSoftmax(e, w, labels, 0.0, s).value, ce, 1e-12);
  EXPECT_NEAR(AamSoftmax(e, w, labels, 0.0, s).value, AmSoftmax(e, w, labels, 0.0, s).value,
              1e-12);
}

TEST(MarginSoftmaxTest, ParallelEmbeddingClosedForm) {
  const Tensor e({1, 2}, {2.0, 0.0});
  const Tensor w({2, 2}, {1.0, 0.0, 0.0, 3.0});
  const std::vector<size_t> labels = {0};
  const double want = -std::log(std::exp(24.0) / (std::exp(24.0) + 1.0));
  const double got = AmSoftmax(e, w, labels, 0.2, 30.0).value;
  EXPECT_NEAR(got, want, 1e-6 * want);
  EXPECT_NEAR(got, 3.8e-11, 0.1e-11);
}

TEST(MarginSoftmaxTest, AngularMarginTargetLogit) {
  // theta_y = 0 and the other class orthogonal: logits are (s cos 0.5, 0).
  const Tensor e({1, 2}, {1.0, 0.0});
  const Tensor w({2, 2}, {1.0, 0.0, 0.0, 1.0});
  const std::vector<size_t> labels = {0};
  const double s = 4.0;
  const double z = s * std::cos(0.5);
  EXPECT_NEAR(AamSoftmax(e, w, labels, 0.5, s).value, std::log1p(std::exp(-z)), 1e-12);
}

TEST(MarginSoftmaxTest, InvariantToRowRescaling) {
  Rng rng(3);
  Tensor e = Random({3, 4}, rng);
  const Tensor w = Random({5, 4}, rng);
  const std::vector<size_t> labels = {4, 1, 0};
  const double am = AmSoftmax(e, w, labels, 0.3, 20.0).value;
  const double aam = AamSoftmax(e, w, labels, 0.3, 20.0).value;
  for (size_t k = 0; k < 4; ++k) e[4 + k] *= 37.0;
  EXPECT_NEAR(AmSoftmax(e, w, labels, 0.3, 20.0).value, am, 1e-12);
  EXPECT_NEAR(AamSoftmax(e, w, labels, 0.3, 20.0).value, aam, 1e-12);
}

TEST(MarginSoftmaxTest, ZeroNormRow) {
  const Tensor e({1, 2}, {0.0, 0.0});
  const Tensor w({2, 2}, {1.0, 0.0, 0.0, 1.0});
  const std::vector<size_t> labels = {0};
  EXPECT_MSSV_ERROR(AmSoftmax(e, w, labels, 0.2, 30.0), ErrorCode::kZeroNormRow);
}

TEST(PrototypicalTest, OrthogonalCentroidsClosedForm) {
  // Speaker j: both utterances equal c_j, so query == prototype == c_j.
  const Tensor e({2, 2, 2}, {1, 0, 1, 0, 0, 2, 0, 2});
  const double want = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  EXPECT_NEAR(AngularPrototypical({e}, 1.0, 0.0).value, want, 1e-12);
  EXPECT_NEAR(want, 0.31326, 1e-5);
}

TEST(PrototypicalTest, IdenticalEmbeddingsGiveLnN) {
  const Tensor e = InitConstant({2, 2, 3}, 0.7);
  EXPECT_NEAR(AngularPrototypical({e}, 10.0, -5.0).value, std::log(2.0), 1e-12);
}

TEST(PrototypicalTest, BiasShiftInvariance) {
  Rng rng(4);
  const Tensor e = Random({4, 3, 5}, rng);
  const auto a = AngularPrototypical({e}, 10.0, -5.0);
  const auto b = AngularPrototypical({e}, 10.0, 12.5);
  EXPECT_NEAR(a.value, b.value, 1e-12);
  EXPECT_NEAR(a.bias_grad, 0.0, 1e-12);
}

TEST(PrototypicalTest, MovingQueryTowardPrototypeLowersLoss) {
  // Speaker 0 lives in span(e0, e1): prototype e0, query rotating from e1
  // toward e0. The other speakers live in span(e2..e5), so every similarity
  // except S[0, 0] stays fixed while the query moves.
  Rng rng(5);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor e({3, 2, 6});
    e[0] = 1.0;
    for (size_t s = 1; s < 3; ++s) {
      for (size_t u = 0; u < 2; ++u) {
        for (size_t k = 2; k < 6; ++k) e[(s * 2 + u) * 6 + k] = n(rng);
      }
    }
    double prev = INFINITY;
    for (double theta = 0.5 * std::numbers::pi; theta >= 0.0; theta -= 0.1) {
      e[6 + 0] = std::cos(theta);
      e[6 + 1] = std::sin(theta);
      const double cur = AngularPrototypical({e}, 10.0, -5.0).value;
      EXPECT_LT(cur, prev) << "theta " << theta;
      prev = cur;
    }
  }
}

TEST(PrototypicalTest, DegenerateBatches) {
  EXPECT_MSSV_ERROR(AngularPrototypical({Tensor({3, 1, 2}, 1.0)}, 10.0, -5.0),
                    ErrorCode::kDegenerateBatch);
  Tensor zero = InitConstant({2, 2, 2}, 1.0);
  zero[0] = zero[1] = 0.0;
  zero[2] = 0.0;
  zero[3] = 0.0;
  EXPECT_MSSV_ERROR(AngularPrototypical({zero}, 10.0, -5.0), ErrorCode::kDegenerateBatch);
}

TEST(LossPropertyTest, NonnegativeOnRandomInputs) {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor logits = Random({4, 3}, rng, 3.0);
    const std::vector<size_t> labels = {0, 1, 2, 1};
    const Tensor e = Random({2, 2, 3}, rng);
    EXPECT_GE(SoftmaxCrossEntropy(logits, labels).value, 0.0);
    EXPECT_GE(AmSoftmax(Random({4, 3}, rng), Random({3, 3}, rng), labels, 0.2, 30.0).value, 0.0);
    EXPECT_GE(AamSoftmax(Random({4, 3}, rng), Random({3, 3}, rng), labels, 0.2, 30.0).value, 0.0);
    EXPECT_GE(AngularPrototypical({e}, 10.0, -5.0).value, 0.0);
    EXPECT_GE(CombinedLoss(logits, labels, {e}, 10.0, -5.0).value, 0.0);
  }
}

TEST(CombinedLossTest, WeightedSumOfTerms) {
  Rng rng(7);
  const Tensor logits = Random({6, 4}, rng);
  const std::vector<size_t> labels = {0, 0, 1, 1, 3, 3};
  const Tensor e = Random({3, 2, 5}, rng);
  const CombinedLossWeights lw{0.25, 2.0};
  const auto out = CombinedLoss(logits, labels, {e}, 10.0, -5.0, lw);
  const double ce = SoftmaxCrossEntropy(logits, labels).value;
  const double ap = AngularPrototypical({e}, 10.0, -5.0).value;
  EXPECT_DOUBLE_EQ(out.softmax_value, ce);
  EXPECT_DOUBLE_EQ(out.prototypical_value, ap);
  EXPECT_NEAR(out.value, 0.25 * ce + 2.0 * ap, 1e-12);
}

TEST(LossGradientTest, AllLossesOverRandomShapes) {
  for (const auto& e : oracle::RunGradientSuite(43, 100)) {
    if (e.name == "softmax_ce" || e.name == "am_softmax" || e.name == "aam_softmax" ||
        e.name == "angular_prototypical" || e.name == "combined") {
      EXPECT_EQ(e.cases, 100u);
      EXPECT_LT(e.max_error, 1e-4) << e.name;
    }
  }
}

}  // namespace
}  // namespace mssv
