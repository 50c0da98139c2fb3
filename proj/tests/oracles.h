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

// Independent reference implementations used by the unit tests and the
// acceptance runner. Nothing here shares code with the library paths it
// checks.

#ifndef MSSV_TESTS_ORACLES_H_
#define MSSV_TESTS_ORACLES_H_

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "mssv/audio.h"
#include "mssv/eval.h"

namespace mssv::oracle {

// O(n^2) DFT in long double.
std::vector<std::complex<long double>> NaiveDft(const std::vector<std::complex<double>>& x);

// Energy of `w` in each octave band, from a direct DFT of the first n samples.
std::array<double, kNumOctaveBands> OctaveBandEnergies(const Waveform& w, size_t n);

// Definition-level metrics: every threshold (-inf, midpoints between distinct
// scores, +inf) is evaluated by counting directly, in exact integer
// arithmetic. The returned double is the exact rational rounded once.
double BruteForceEer(const std::vector<double>& targets, const std::vector<double>& nontargets);
// p_target is p_num / p_den with unit costs.
double BruteForceMinDcf(const std::vector<double>& targets,
                        const std::vector<double>& nontargets, int64_t p_num, int64_t p_den);

TrialScoreSet MakeScoreSet(const std::vector<double>& targets,
                           const std::vector<double>& nontargets);

// Scalar Adam recurrence in long double.
struct ScalarAdam {
  long double theta, m = 0, v = 0;
  int t = 0;
  void Step(long double g, long double lr, long double beta1 = 0.9L,
            long double beta2 = 0.999L, long double eps = 1e-8L);
};

// Finite-difference checks over random shapes for every layer kind and loss.
struct GradSuiteEntry {
  std::string name;
  size_t cases = 0;
  double max_error = 0.0;
};
std::vector<GradSuiteEntry> RunGradientSuite(uint64_t seed, size_t shapes_per_kind);

}  // namespace mssv::oracle

#endif  // MSSV_TESTS_ORACLES_H_
