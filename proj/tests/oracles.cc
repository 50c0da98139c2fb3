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

#include "oracles.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "mssv/losses.h"
#include "mssv/nn.h"

namespace mssv::oracle {

std::vector<std::complex<long double>> NaiveDft(const std::vector<std::complex<double>>& x) {
  const size_t n = x.size();
  std::vector<std::complex<long double>> out(n);
  for (size_t k = 0; k < n; ++k) {
    std::complex<long double> acc = 0;
    for (size_t t = 0; t < n; ++t) {
      const long double ang = -2.0L * std::numbers::pi_v<long double> *
                              static_cast<long double>((k * t) % n) / static_cast<long double>(n);
      acc += std::complex<long double>(x[t].real(), x[t].imag()) *
             std::complex<long double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

std::array<double, kNumOctaveBands> OctaveBandEnergies(const Waveform& w, size_t n) {
  std::vector<std::complex<double>> x(n);
  for (size_t i = 0; i < n; ++i) x[i] = w.samples.at(i);
  const auto spec = NaiveDft(x);
  std::array<double, kNumOctaveBands> e{};
  for (size_t k = 1; k < n / 2; ++k) {
    const double f = static_cast<double>(k) * w.sample_rate_hz / static_cast<double>(n);
    // Octave band b covers [8000 / 2^(8-b), 8000 / 2^(7-b)); band 0 starts at 0.
    int band = 0;
    while (band + 1 < kNumOctaveBands && f >= 8000.0 / std::pow(2.0, kNumOctaveBands - 1 - band)) {
      ++band;
    }
    e[band] += static_cast<double>(std::norm(spec[k]));
  }
  return e;
}

namespace {

struct Counts {
  int64_t misses;
  int64_t false_alarms;
};

std::vector<Counts> CountsAtAllThresholds(const std::vector<double>& tg,
                                          const std::vector<double>& nt) {
  std::set<double> distinct(tg.begin(), tg.end());
  distinct.insert(nt.begin(), nt.end());
  const std::vector<double> s(distinct.begin(), distinct.end());
  std::vector<double> thresholds = {-INFINITY};
  for (size_t i = 0; i + 1 < s.size(); ++i) thresholds.push_back(0.5 * (s[i] + s[i + 1]));
  thresholds.push_back(INFINITY);
  std::vector<Counts> out;
  for (double t : thresholds) {
    Counts c{0, 0};
    for (double x : tg) c.misses += (x < t);
    for (double x : nt) c.false_alarms += (x >= t);
    out.push_back(c);
  }
  return out;
}

}  // namespace

double BruteForceEer(const std::vector<double>& tg, const std::vector<double>& nt) {
  const int64_t n_t = static_cast<int64_t>(tg.size());
  const int64_t n_n = static_cast<int64_t>(nt.size());
  const auto counts = CountsAtAllThresholds(tg, nt);
  // Rates scaled by n_t * n_n are the integers M = misses * n_n, F = fa * n_t.
  for (size_t i = 0; i < counts.size(); ++i) {
    const int64_t m1 = counts[i].misses * n_n;
    const int64_t f1 = counts[i].false_alarms * n_t;
    if (m1 == f1) return static_cast<double>(m1) / static_cast<double>(n_t * n_n);
    if (m1 > f1) {
      const int64_t m0 = counts[i - 1].misses * n_n;
      const int64_t f0 = counts[i - 1].false_alarms * n_t;
      const int64_t d = (m1 - f1) - (m0 - f0);
      const int64_t num = m0 * d + (f0 - m0) * (m1 - m0);
      return static_cast<double>(num) / static_cast<double>(d * n_t * n_n);
    }
  }
  return NAN;
}

double BruteForceMinDcf(const std::vector<double>& tg, const std::vector<double>& nt,
                        int64_t p_num, int64_t p_den) {
  const int64_t n_t = static_cast<int64_t>(tg.size());
  const int64_t n_n = static_cast<int64_t>(nt.size());
  // cost * p_den = p_num * miss + (p_den - p_num) * fa, normalized by
  // min(p_num, p_den - p_num) / p_den.
  const int64_t norm = std::min(p_num, p_den - p_num);
  int64_t best = -1;
  for (const Counts& c : CountsAtAllThresholds(tg, nt)) {
    const int64_t v = p_num * c.misses * n_n + (p_den - p_num) * c.false_alarms * n_t;
    if (best < 0 || v < best) best = v;
  }
  return static_cast<double>(best) / static_cast<double>(norm * n_t * n_n);
}

TrialScoreSet MakeScoreSet(const std::vector<double>& targets,
                           const std::vector<double>& nontargets) {
  TrialScoreSet s;
  for (double x : targets) s.records.push_back({x, true});
  for (double x : nontargets) s.records.push_back({x, false});
  return s;
}

void ScalarAdam::Step(long double g, long double lr, long double beta1, long double beta2,
                      long double eps) {
  ++t;
  m = beta1 * m + (1 - beta1) * g;
  v = beta2 * v + (1 - beta2) * g * g;
  const long double m_hat = m / (1 - std::pow(beta1, t));
  const long double v_hat = v / (1 - std::pow(beta2, t));
  theta -= lr * m_hat / (std::sqrt(v_hat) + eps);
}

namespace {

constexpr double kEps = 1e-5;

size_t Pick(Rng& rng, size_t lo, size_t hi) {
  return std::uniform_int_distribution<size_t>(lo, hi)(rng);
}

double Uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Tensor RandomTensor(const Dims& dims, Rng& rng) {
  Tensor t(dims);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : t.values()) v = n(rng);
  return t;
}

std::vector<size_t> RandomLabels(size_t n, size_t classes, Rng& rng) {
  std::vector<size_t> labels(n);
  for (auto& l : labels) l = Pick(rng, 0, classes - 1);
  return labels;
}

// Checks one analytic gradient against central differences of f.
double Check(const std::function<double(const Tensor&)>& f, const Tensor& x,
             const Tensor& analytic) {
  return MaxRelativeError(analytic, NumericGradient(f, x, kEps));
}

double CheckScalar(const std::function<double(double)>& f, double x, double analytic) {
  const double numeric = (f(x + kEps) - f(x - kEps)) / (2 * kEps);
  return RelativeError(analytic, numeric);
}

}  // namespace

std::vector<GradSuiteEntry> RunGradientSuite(uint64_t seed, size_t shapes) {
  Rng rng(seed);
  std::vector<GradSuiteEntry> out;
  auto run = [&](const std::string& name, const std::function<double()>& one_case) {
    GradSuiteEntry e{name, 0, 0.0};
    for (size_t i = 0; i < shapes; ++i) {
      e.max_error = std::max(e.max_error, one_case());
      ++e.cases;
    }
    out.push_back(e);
  };

  run("conv2d", [&] {
    const size_t k = Pick(rng, 1, 3), stride = Pick(rng, 1, 2);
    const size_t c_in = Pick(rng, 1, 3), c_out = Pick(rng, 1, 3);
    Parameter w{RandomTensor({c_out, c_in, k, k}, rng), Tensor({c_out, c_in, k, k})};
    Parameter b{RandomTensor({c_out}, rng), Tensor({c_out})};
    Conv2d conv(&w, &b, stride);
    const Dims in = Pick(rng, 0, 1) ? Dims{Pick(rng, 1, 2), c_in, Pick(rng, k, k + 5),
                                           Pick(rng, k, k + 5)}
                                     : Dims{c_in, Pick(rng, k, k + 5), Pick(rng, k, k + 5)};
    return GradCheck(conv, RandomTensor(in, rng), kEps, rng);
  });
  run("linear", [&] {
    const size_t d_in = Pick(rng, 1, 6), d_out = Pick(rng, 1, 6);
    Parameter w{RandomTensor({d_in, d_out}, rng), Tensor({d_in, d_out})};
    Parameter b{RandomTensor({d_out}, rng), Tensor({d_out})};
    Linear lin(&w, &b);
    Dims in = {d_in};
    for (size_t r = Pick(rng, 0, 2); r > 0; --r) in.insert(in.begin(), Pick(rng, 1, 4));
    return GradCheck(lin, RandomTensor(in, rng), kEps, rng);
  });
  run("relu", [&] {
    Dims dims;
    for (size_t r = Pick(rng, 1, 3); r > 0; --r) dims.push_back(Pick(rng, 1, 5));
    Tensor x(dims);
    // Stay away from the kink by much more than the step.
    for (double& v : x.values()) v = (Pick(rng, 0, 1) ? 1 : -1) * Uniform(rng, 100 * kEps, 1.0);
    Relu relu;
    return GradCheck(relu, x, kEps, rng);
  });
  run("temporal_mean_pool", [&] {
    const Dims in = Pick(rng, 0, 1) ? Dims{Pick(rng, 1, 3), Pick(rng, 1, 6), Pick(rng, 1, 5)}
                                     : Dims{Pick(rng, 1, 6), Pick(rng, 1, 5)};
    TemporalMeanPool pool;
    return GradCheck(pool, RandomTensor(in, rng), kEps, rng);
  });
  run("frame_flatten", [&] {
    FrameFlatten flat;
    const Dims in = {Pick(rng, 1, 2), Pick(rng, 1, 3), Pick(rng, 1, 4), Pick(rng, 1, 4)};
    return GradCheck(flat, RandomTensor(in, rng), kEps, rng);
  });

  run("softmax_ce", [&] {
    const size_t n = Pick(rng, 1, 6), c = Pick(rng, 2, 6);
    const Tensor logits = RandomTensor({n, c}, rng);
    const auto labels = RandomLabels(n, c, rng);
    const auto f = [&](const Tensor& z) { return SoftmaxCrossEntropy(z, labels).value; };
    return Check(f, logits, SoftmaxCrossEntropy(logits, labels).grad);
  });
  for (const bool additive_angle : {false, true}) {
    run(additive_angle ? "aam_softmax" : "am_softmax", [&] {
      const size_t n = Pick(rng, 1, 5), c = Pick(rng, 2, 5), d = Pick(rng, 2, 6);
      const double m = Uniform(rng, 0.0, 0.4), s = Uniform(rng, 1.0, 15.0);
      const Tensor e = RandomTensor({n, d}, rng);
      const Tensor w = RandomTensor({c, d}, rng);
      const auto labels = RandomLabels(n, c, rng);
      const auto loss = [&](const Tensor& emb, const Tensor& cw) {
        return additive_angle ? AamSoftmax(emb, cw, labels, m, s) : AmSoftmax(emb, cw, labels, m, s);
      };
      const auto ref = loss(e, w);
      const double err_e = Check([&](const Tensor& x) { return loss(x, w).value; }, e, ref.grad);
      const double err_w =
          Check([&](const Tensor& x) { return loss(e, x).value; }, w, ref.class_weights_grad);
      return std::max(err_e, err_w);
    });
  }
  run("angular_prototypical", [&] {
    const size_t n = Pick(rng, 2, 5), m = Pick(rng, 2, 4), d = Pick(rng, 2, 6);
    const Tensor e = RandomTensor({n, m, d}, rng);
    const double w = Uniform(rng, 1.0, 10.0), b = Uniform(rng, -5.0, 0.0);
    const auto ref = AngularPrototypical({e}, w, b);
    double err = Check([&](const Tensor& x) { return AngularPrototypical({x}, w, b).value; }, e,
                       ref.grad);
    err = std::max(err, CheckScalar([&](double x) { return AngularPrototypical({e}, x, b).value; },
                                    w, ref.scale_grad));
    err = std::max(err, CheckScalar([&](double x) { return AngularPrototypical({e}, w, x).value; },
                                    b, ref.bias_grad));
    return err;
  });
  run("combined", [&] {
    const size_t n = Pick(rng, 2, 4), m = Pick(rng, 2, 3), d = Pick(rng, 2, 5), c = Pick(rng, 2, 5);
    const Tensor e = RandomTensor({n, m, d}, rng);
    const Tensor logits = RandomTensor({n * m, c}, rng);
    const auto labels = RandomLabels(n * m, c, rng);
    const double w = Uniform(rng, 1.0, 10.0), b = Uniform(rng, -5.0, 0.0);
    const CombinedLossWeights lw{Uniform(rng, 0.1, 2.0), Uniform(rng, 0.1, 2.0)};
    const auto ref = CombinedLoss(logits, labels, {e}, w, b, lw);
    double err = Check([&](const Tensor& x) { return CombinedLoss(x, labels, {e}, w, b, lw).value; },
                       logits, ref.logits_grad);
    err = std::max(err, Check([&](const Tensor& x) {
                                return CombinedLoss(logits, labels, {x}, w, b, lw).value;
                              },
                              e, ref.embeddings_grad));
    err = std::max(err, CheckScalar([&](double x) {
                                      return CombinedLoss(logits, labels, {e}, x, b, lw).value;
                                    },
                                    w, ref.scale_grad));
    err = std::max(err, CheckScalar([&](double x) {
                                      return CombinedLoss(logits, labels, {e}, w, x, lw).value;
                                    },
                                    b, ref.bias_grad));
    return err;
  });
  return out;
}

}  // namespace mssv::oracle
