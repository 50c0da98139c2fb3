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

#include "mssv/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <boost/math/special_functions/erf.hpp>

#include "binary_io.h"
#include "mssv/error.h"

namespace mssv {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string FormatDouble(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string XmlEscape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  internal::WriteFileAtomically(path, text);
}

}  // namespace

std::filesystem::path TrialList::Resolve(const std::string& path) const {
  std::filesystem::path p(path);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

TrialList LoadTrialList(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open trial list " + path.string());
  TrialList list;
  list.base_dir = path.parent_path();
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string label;
    Trial trial;
    std::string extra;
    if (!(fields >> label >> trial.enroll_path >> trial.test_path) || (fields >> extra) ||
        (label != "0" && label != "1")) {
      throw Error(ErrorCode::kParseError,
                  path.string() + ":" + std::to_string(line_no) +
                      ": expected 'label enroll_path test_path' with label 0 or 1");
    }
    trial.is_target = label == "1";
    list.trials.push_back(std::move(trial));
  }
  return list;
}

void SaveTrialList(const std::filesystem::path& path, const TrialList& trials) {
  std::string text;
  for (const auto& t : trials.trials) {
    text += (t.is_target ? "1 " : "0 ") + t.enroll_path + " " + t.test_path + "\n";
  }
  WriteText(path, text);
}

size_t TrialScoreSet::num_targets() const {
  return static_cast<size_t>(std::count_if(records.begin(), records.end(),
                                           [](const TrialScore& r) { return r.is_target; }));
}

size_t TrialScoreSet::num_nontargets() const { return records.size() - num_targets(); }

double ScoreTrial(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimMismatch, "embedding dims " + std::to_string(a.size()) +
                                             " and " + std::to_string(b.size()));
  }
  double sq = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sq += d * d;
  }
  return -std::sqrt(sq);
}

std::vector<OperatingPoint> SweepThresholds(const TrialScoreSet& scores) {
  const size_t targets = scores.num_targets();
  const size_t nontargets = scores.num_nontargets();
  if (targets == 0 || nontargets == 0) {
    throw Error(ErrorCode::kSingleClass,
                "metrics need both target and nontarget trials (have " +
                    std::to_string(targets) + " and " + std::to_string(nontargets) + ")");
  }
  std::vector<TrialScore> sorted = scores.records;
  for (const auto& r : sorted) {
    if (!std::isfinite(r.score)) {
      throw Error(ErrorCode::kInvalidArgument, "non-finite trial score");
    }
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const TrialScore& a, const TrialScore& b) { return a.score < b.score; });

  const auto t_total = static_cast<double>(targets);
  const auto n_total = static_cast<double>(nontargets);
  std::vector<OperatingPoint> points;
  points.push_back({-kInf, 1.0, 0.0});
  size_t targets_below = 0;
  size_t nontargets_below = 0;
  for (size_t i = 0; i < sorted.size();) {
    const double value = sorted[i].score;
    for (; i < sorted.size() && sorted[i].score == value; ++i) {
      (sorted[i].is_target ? targets_below : nontargets_below) += 1;
    }
    double threshold = kInf;
    if (i < sorted.size()) {
      const double next = sorted[i].score;
      threshold = value + (next - value) / 2.0;
      if (threshold <= value) threshold = next;
    }
    points.push_back({threshold,
                      static_cast<double>(nontargets - nontargets_below) / n_total,
                      static_cast<double>(targets_below) / t_total});
  }
  return points;
}

double EerFromSweep(std::span<const OperatingPoint> points) {
  for (size_t i = 0; i < points.size(); ++i) {
    const double d = points[i].miss_rate - points[i].false_alarm_rate;
    if (d == 0.0) return points[i].miss_rate;
    if (d > 0.0) {
      const OperatingPoint& lo = points[i - 1];
      const OperatingPoint& hi = points[i];
      const double d_lo = lo.miss_rate - lo.false_alarm_rate;
      const double alpha = -d_lo / (d - d_lo);
      return lo.miss_rate + alpha * (hi.miss_rate - lo.miss_rate);
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "operating points never cross");
}

double ComputeEer(const TrialScoreSet& scores) {
  return EerFromSweep(SweepThresholds(scores));
}

double NormalizedDcf(double miss_rate, double false_alarm_rate, const DcfParams& params) {
  if (!(params.p_target > 0.0 && params.p_target < 1.0) || !(params.c_miss > 0.0) ||
      !(params.c_fa > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "DCF needs 0 < p_target < 1 and positive costs");
  }
  const double miss_weight = params.c_miss * params.p_target;
  const double fa_weight = params.c_fa * (1.0 - params.p_target);
  const double norm = std::min(miss_weight, fa_weight);
  return miss_rate * (miss_weight / norm) + false_alarm_rate * (fa_weight / norm);
}

double MinDcfFromSweep(std::span<const OperatingPoint> points, const DcfParams& params) {
  double best = kInf;
  for (const auto& p : points) {
    best = std::min(best, NormalizedDcf(p.miss_rate, p.false_alarm_rate, params));
  }
  return best;
}

double ComputeMinDcf(const TrialScoreSet& scores, const DcfParams& params) {
  return MinDcfFromSweep(SweepThresholds(scores), params);
}

DetCurve ComputeDet(const TrialScoreSet& scores) { return {SweepThresholds(scores)}; }

double Probit(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "probit needs p in (0, 1)");
  }
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

EvaluationResult Summarize(std::string system, std::vector<Trial> trials,
                           TrialScoreSet scores, const DcfParams& dcf) {
  EvaluationResult result;
  result.system = std::move(system);
  result.trials = std::move(trials);
  result.scores = std::move(scores);
  result.dcf = dcf;
  const std::vector<OperatingPoint> points = SweepThresholds(result.scores);
  result.eer = EerFromSweep(points);
  result.min_dcf = MinDcfFromSweep(points, dcf);
  result.det.points = points;
  return result;
}

EvaluationResult EvaluateTrials(const MultiStreamModel& model, const TrialList& trials,
                                const EvalOptions& options) {
  const size_t crop = SegmentLength(options.eval_seconds, kPipelineSampleRate);
  std::map<std::string, Tensor> cache;
  auto embed = [&](size_t index, const std::string& path) -> const Tensor& {
    const std::string key = trials.Resolve(path).string();
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    try {
      const Waveform w = ReadWav(key);
      ValidateWaveform(w);
      return cache.emplace(key, model.EmbedUtterance(CyclicSlice(w, 0, crop))).first->second;
    } catch (const Error& e) {
      throw Error(e.code(), "trial " + std::to_string(index) + ": " + e.what());
    }
  };

  TrialScoreSet scores;
  for (size_t i = 0; i < trials.trials.size(); ++i) {
    const Trial& t = trials.trials[i];
    const Tensor& a = embed(i, t.enroll_path);
    const Tensor& b = embed(i, t.test_path);
    scores.records.push_back({ScoreTrial(a.values(), b.values()), t.is_target});
  }
  return Summarize("system", trials.trials, std::move(scores), options.dcf);
}

std::string FormatMetrics(std::span<const EvaluationResult> results) {
  std::string text;
  for (const auto& r : results) {
    char line[256];
    std::snprintf(line, sizeof(line), "%s\tminDCF(p_target=%g) %.3f\tEER %.2f%%\n",
                  r.system.c_str(), r.dcf.p_target, r.min_dcf, 100.0 * r.eer);
    text += line;
  }
  return text;
}

std::string FormatScores(const EvaluationResult& result) {
  std::string text;
  for (size_t i = 0; i < result.trials.size(); ++i) {
    text += result.trials[i].enroll_path + " " + result.trials[i].test_path + " " +
            FormatDouble(result.scores.records.at(i).score) + "\n";
  }
  return text;
}

std::string FormatDetCsv(const DetCurve& det) {
  std::string text = "threshold,fa,miss\n";
  for (const auto& p : det.points) {
    text += FormatDouble(p.threshold) + "," + FormatDouble(p.false_alarm_rate) + "," +
            FormatDouble(p.miss_rate) + "\n";
  }
  return text;
}

DetCurve ParseDetCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "threshold,fa,miss") {
    throw Error(ErrorCode::kParseError, "det.csv must start with 'threshold,fa,miss'");
  }
  DetCurve det;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    OperatingPoint p;
    const char* s = line.c_str();
    char* end = nullptr;
    p.threshold = std::strtod(s, &end);
    bool ok = end != s && *end == ',';
    if (ok) {
      s = end + 1;
      p.false_alarm_rate = std::strtod(s, &end);
      ok = end != s && *end == ',';
    }
    if (ok) {
      s = end + 1;
      p.miss_rate = std::strtod(s, &end);
      ok = end != s && *end == '\0';
    }
    if (!ok) {
      throw Error(ErrorCode::kParseError, "det.csv line " + std::to_string(line_no));
    }
    det.points.push_back(p);
  }
  return det;
}

std::string RenderDetSvg(std::span<const std::pair<std::string, DetCurve>> curves) {
  constexpr double kSize = 480.0;
  constexpr double kMargin = 60.0;
  constexpr double kLowRate = 0.001;
  constexpr double kHighRate = 0.5;
  static const char* kColors[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  const double lo = Probit(kLowRate);
  const double hi = Probit(kHighRate);
  const double span = kSize - 2 * kMargin;
  auto axis = [&](double rate) {
    const double clamped = std::clamp(rate, kLowRate, kHighRate);
    return (Probit(clamped) - lo) / (hi - lo) * span;
  };
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };

  std::string svg =
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"480\" "
      "viewBox=\"0 0 480 480\">\n"
      "<rect x=\"0\" y=\"0\" width=\"480\" height=\"480\" fill=\"white\"/>\n";
  const double x0 = kMargin;
  const double y0 = kSize - kMargin;
  svg += "<g class=\"axes\" stroke=\"black\" fill=\"none\">\n";
  svg += "<rect x=\"" + fmt(x0) + "\" y=\"" + fmt(kMargin) + "\" width=\"" + fmt(span) +
         "\" height=\"" + fmt(span) + "\"/>\n";
  svg += "</g>\n<g class=\"ticks\" font-family=\"sans-serif\" font-size=\"10\">\n";
  for (double pct : {0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0}) {
    const double offset = axis(pct / 100.0);
    char label[16];
    std::snprintf(label, sizeof(label), "%g", pct);
    svg += "<line x1=\"" + fmt(x0 + offset) + "\" y1=\"" + fmt(kMargin) + "\" x2=\"" +
           fmt(x0 + offset) + "\" y2=\"" + fmt(y0) + "\" stroke=\"#dddddd\"/>\n";
    svg += "<line x1=\"" + fmt(x0) + "\" y1=\"" + fmt(y0 - offset) + "\" x2=\"" +
           fmt(x0 + span) + "\" y2=\"" + fmt(y0 - offset) + "\" stroke=\"#dddddd\"/>\n";
    svg += "<text x=\"" + fmt(x0 + offset) + "\" y=\"" + fmt(y0 + 14) +
           "\" text-anchor=\"middle\">" + label + "</text>\n";
    svg += "<text x=\"" + fmt(x0 - 6) + "\" y=\"" + fmt(y0 - offset + 3) +
           "\" text-anchor=\"end\">" + label + "</text>\n";
  }
  svg += "<text x=\"240\" y=\"" + fmt(kSize - 20) +
         "\" text-anchor=\"middle\">False alarm rate (%)</text>\n";
  svg += "<text x=\"16\" y=\"240\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 16 240)\">Miss rate (%)</text>\n";
  svg += "</g>\n";

  for (size_t c = 0; c < curves.size(); ++c) {
    const char* color = kColors[c % std::size(kColors)];
    std::string pts;
    std::string last;
    for (const auto& p : curves[c].second.points) {
      const std::string xy =
          fmt(x0 + axis(p.false_alarm_rate)) + "," + fmt(y0 - axis(p.miss_rate));
      if (xy == last) continue;
      if (!pts.empty()) pts += ' ';
      pts += xy;
      last = xy;
    }
    svg += "<polyline class=\"det\" data-system=\"" + XmlEscape(curves[c].first) +
           "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"2\" points=\"" + pts +
           "\"/>\n";
    svg += "<text x=\"" + fmt(kSize - kMargin - 4) + "\" y=\"" +
           fmt(kMargin + 14 + 14 * static_cast<double>(c)) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" +
           color + "\">" + XmlEscape(curves[c].first) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<std::filesystem::path> EmitReport(std::span<const EvaluationResult> results,
                                              const std::string& prefix) {
  if (results.empty()) throw Error(ErrorCode::kInvalidArgument, "no results to report");
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& path, const std::string& text) {
    WriteText(path, text);
    written.emplace_back(path);
  };
  const bool single = results.size() == 1;
  std::vector<std::pair<std::string, DetCurve>> curves;
  for (const auto& r : results) {
    const std::string stem = single ? prefix : prefix + "." + r.system;
    emit(stem + ".scores.txt", FormatScores(r));
    emit(stem + ".det.csv", FormatDetCsv(r.det));
    curves.emplace_back(r.system, r.det);
  }
  emit(prefix + ".metrics.txt", FormatMetrics(results));
  emit(prefix + ".det.svg", RenderDetSvg(curves));
  return written;
}

}  // namespace mssv
