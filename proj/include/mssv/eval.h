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

#ifndef MSSV_EVAL_H_
#define MSSV_EVAL_H_

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mssv/model.h"

namespace mssv {

struct Trial {
  bool is_target = false;
  std::string enroll_path;
  std::string test_path;
};

struct TrialList {
  std::vector<Trial> trials;
  std::filesystem::path base_dir;

  std::filesystem::path Resolve(const std::string& path) const;
};

// `label enroll_path test_path` per line, label 1 (target) or 0 (nontarget).
TrialList LoadTrialList(const std::filesystem::path& path);
void SaveTrialList(const std::filesystem::path& path, const TrialList& trials);

struct TrialScore {
  double score = 0.0;
  bool is_target = false;
};

struct TrialScoreSet {
  std::vector<TrialScore> records;

  size_t num_targets() const;
  size_t num_nontargets() const;
};

// Negative Euclidean distance; 0 for identical embeddings.
double ScoreTrial(std::span<const double> a, std::span<const double> b);

// Rates at one threshold under the rule "accept iff score >= threshold".
struct OperatingPoint {
  double threshold = 0.0;
  double false_alarm_rate = 0.0;
  double miss_rate = 0.0;
};

// Operating points at -inf, every midpoint between consecutive distinct
// scores, and +inf, in increasing threshold order: false alarms fall from 1
// to 0 while misses rise from 0 to 1. Throws kSingleClass unless both classes
// are present and kInvalidArgument on non-finite scores.
std::vector<OperatingPoint> SweepThresholds(const TrialScoreSet& scores);

// Where miss and false-alarm rates cross; linear interpolation between the
// two adjacent operating points when no threshold equalizes them.
double ComputeEer(const TrialScoreSet& scores);
double EerFromSweep(std::span<const OperatingPoint> points);

struct DcfParams {
  double p_target = 0.05;
  double c_miss = 1.0;
  double c_fa = 1.0;
};

// min over thresholds of (c_miss P_miss p + c_fa P_fa (1 - p)) normalized by
// min(c_miss p, c_fa (1 - p)).
double ComputeMinDcf(const TrialScoreSet& scores, const DcfParams& params = {});
double MinDcfFromSweep(std::span<const OperatingPoint> points, const DcfParams& params);
double NormalizedDcf(double miss_rate, double false_alarm_rate, const DcfParams& params);

struct DetCurve {
  std::vector<OperatingPoint> points;
};

DetCurve ComputeDet(const TrialScoreSet& scores);

// Inverse standard-normal CDF; p must lie in (0, 1).
double Probit(double p);

struct EvaluationResult {
  std::string system;
  std::vector<Trial> trials;
  TrialScoreSet scores;
  double eer = 0.0;
  double min_dcf = 0.0;
  DcfParams dcf;
  DetCurve det;
};

struct EvalOptions {
  double eval_seconds = 4.0;
  DcfParams dcf;
};

// Embeds the first eval_seconds of every referenced utterance (wrap-padded
// when shorter), once per distinct path, and scores each trial. Read errors
// are rethrown with the trial index.
EvaluationResult EvaluateTrials(const MultiStreamModel& model, const TrialList& trials,
                                const EvalOptions& options = {});

// Computes metrics for an already scored trial list.
EvaluationResult Summarize(std::string system, std::vector<Trial> trials,
                           TrialScoreSet scores, const DcfParams& dcf);

// Table-style metrics text: one row per system, minDCF then EER in percent.
std::string FormatMetrics(std::span<const EvaluationResult> results);
std::string FormatScores(const EvaluationResult& result);
std::string FormatDetCsv(const DetCurve& det);
DetCurve ParseDetCsv(const std::string& text);

// Probit-scaled DET plot with one polyline per named curve.
std::string RenderDetSvg(std::span<const std::pair<std::string, DetCurve>> curves);

// Writes <prefix>.scores.txt, .metrics.txt, .det.csv and .det.svg. With more
// than one system the scores and det.csv files are written per system as
// <prefix>.<system>.scores.txt / .det.csv; metrics and the SVG are shared.
std::vector<std::filesystem::path> EmitReport(std::span<const EvaluationResult> results,
                                              const std::string& prefix);

}  // namespace mssv

#endif  // MSSV_EVAL_H_
