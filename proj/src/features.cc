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

#include "mssv/features.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "binary_io.h"
#include "mssv/error.h"

namespace mssv {
namespace {

constexpr char kDumpMagic[] = "MFBE";
constexpr uint32_t kDumpVersion = 1;

std::vector<double> HammingWindow(size_t length) {
  std::vector<double> w(length, 1.0);
  if (length < 2) return w;
  const double denom = static_cast<double>(length - 1);
  for (size_t n = 0; n < length; ++n) {
    w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / denom);
  }
  return w;
}

}  // namespace

size_t FrontendConfig::WindowLength(int sample_rate_hz) const {
  return static_cast<size_t>(std::llround(win_ms * sample_rate_hz / 1000.0));
}

size_t FrontendConfig::HopLength(int sample_rate_hz) const {
  return static_cast<size_t>(std::llround(hop_ms * sample_rate_hz / 1000.0));
}

void ValidateFrontendConfig(const FrontendConfig& cfg, int sample_rate_hz) {
  const double nyquist = sample_rate_hz / 2.0;
  if (!(cfg.f_low_hz >= 0.0 && cfg.f_low_hz < cfg.f_high_hz &&
        cfg.f_high_hz <= nyquist)) {
    throw Error(ErrorCode::kDegenerateBand,
                "band [" + std::to_string(cfg.f_low_hz) + ", " +
                    std::to_string(cfg.f_high_hz) +
                    "] Hz must satisfy 0 <= low < high <= " +
                    std::to_string(nyquist));
  }
  if (!(cfg.win_ms > 0.0) || !(cfg.hop_ms > 0.0) ||
      cfg.WindowLength(sample_rate_hz) == 0 ||
      cfg.HopLength(sample_rate_hz) == 0) {
    throw Error(ErrorCode::kInvalidArgument, "window and hop must be positive");
  }
  if (cfg.n_fft <= 0 || !std::has_single_bit(static_cast<unsigned>(cfg.n_fft))) {
    throw Error(ErrorCode::kInvalidArgument,
                "n_fft " + std::to_string(cfg.n_fft) + " is not a power of two");
  }
  if (static_cast<size_t>(cfg.n_fft) < cfg.WindowLength(sample_rate_hz)) {
    throw Error(ErrorCode::kInvalidArgument,
                "n_fft " + std::to_string(cfg.n_fft) +
                    " is shorter than the analysis window");
  }
  if (cfg.n_mels < 1) {
    throw Error(ErrorCode::kInvalidArgument, "n_mels must be >= 1");
  }
}

double FilterBank::BinFrequency(int bin) const {
  const int n_fft = 2 * (num_bins() - 1);
  return static_cast<double>(bin) * sample_rate_hz / n_fft;
}

double HzToMel(double f_hz) { return 2595.0 * std::log10(1.0 + f_hz / 700.0); }

double MelToHz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

size_t NumFrames(size_t n_samples, const FrontendConfig& cfg,
                 int sample_rate_hz) {
  const size_t win = cfg.WindowLength(sample_rate_hz);
  const size_t hop = cfg.HopLength(sample_rate_hz);
  if (n_samples < win) return 0;
  return 1 + (n_samples - win) / hop;
}

RowMatrix FrameSignal(const Waveform& w, const FrontendConfig& cfg) {
  const size_t win = cfg.WindowLength(w.sample_rate_hz);
  const size_t hop = cfg.HopLength(w.sample_rate_hz);
  const size_t n_frames = NumFrames(w.samples.size(), cfg, w.sample_rate_hz);
  if (n_frames == 0) {
    throw Error(ErrorCode::kInputTooShort,
                std::to_string(w.samples.size()) +
                    " samples is shorter than one " + std::to_string(win) +
                    "-sample window");
  }
  const std::vector<double> window = HammingWindow(win);
  RowMatrix frames(n_frames, win);
  for (size_t t = 0; t < n_frames; ++t) {
    const double* src = w.samples.data() + t * hop;
    for (size_t n = 0; n < win; ++n) frames(t, n) = src[n] * window[n];
  }
  return frames;
}

void Fft(std::span<std::complex<double>> data) {
  const size_t n = data.size();
  if (!std::has_single_bit(n)) {
    throw Error(ErrorCode::kInvalidArgument,
                "FFT length " + std::to_string(n) + " is not a power of two");
  }
  if (n == 1) return;  // identity; kissfft does not handle length 1
  const std::vector<std::complex<double>> in(data.begin(), data.end());
  std::vector<std::complex<double>> out;
  Eigen::FFT<double> fft;
  fft.fwd(out, in);
  std::copy(out.begin(), out.end(), data.begin());
}

RowMatrix PowerSpectrum(const RowMatrix& frames, int n_fft) {
  if (n_fft <= 0 || !std::has_single_bit(static_cast<unsigned>(n_fft)) ||
      frames.cols() > n_fft) {
    throw Error(ErrorCode::kInvalidArgument,
                "n_fft " + std::to_string(n_fft) +
                    " must be a power of two no shorter than the frame length " +
                    std::to_string(frames.cols()));
  }
  const int n_bins = n_fft / 2 + 1;
  RowMatrix power(frames.rows(), n_bins);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> buf(static_cast<size_t>(n_fft));
  std::vector<std::complex<double>> spec;
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (Eigen::Index n = 0; n < frames.cols(); ++n) buf[n] = frames(t, n);
    fft.fwd(spec, buf);
    for (int k = 0; k < n_bins; ++k) power(t, k) = std::norm(spec[k]);
  }
  return power;
}

FilterBank BuildFilterbank(const FrontendConfig& cfg, int sample_rate_hz) {
  ValidateFrontendConfig(cfg, sample_rate_hz);
  const int n_bins = cfg.n_fft / 2 + 1;
  const int n_mels = cfg.n_mels;

  const double mel_low = HzToMel(cfg.f_low_hz);
  const double mel_high = HzToMel(cfg.f_high_hz);
  std::vector<double> edges_hz(static_cast<size_t>(n_mels) + 2);
  for (size_t i = 0; i < edges_hz.size(); ++i) {
    const double mel = mel_low + (mel_high - mel_low) * static_cast<double>(i) /
                                     static_cast<double>(n_mels + 1);
    edges_hz[i] = MelToHz(mel);
  }
  edges_hz.front() = cfg.f_low_hz;
  edges_hz.back() = cfg.f_high_hz;

  FilterBank bank;
  bank.sample_rate_hz = sample_rate_hz;
  bank.weights = RowMatrix::Zero(n_mels, n_bins);
  bank.center_freqs_hz.assign(edges_hz.begin() + 1, edges_hz.end() - 1);
  bank.support.resize(static_cast<size_t>(n_mels));
  const double bin_hz = static_cast<double>(sample_rate_hz) / cfg.n_fft;

  for (int m = 0; m < n_mels; ++m) {
    const double left = edges_hz[m];
    const double center = edges_hz[m + 1];
    const double right = edges_hz[m + 2];
    double peak = 0.0;
    int first = n_bins;
    int last = 0;
    for (int k = 0; k < n_bins; ++k) {
      const double f = k * bin_hz;
      double weight = 0.0;
      if (f > left && f <= center) {
        weight = (f - left) / (center - left);
      } else if (f > center && f < right) {
        weight = (right - f) / (right - center);
      }
      if (weight > 0.0) {
        bank.weights(m, k) = weight;
        peak = std::max(peak, weight);
        first = std::min(first, k);
        last = k + 1;
      }
    }
    if (peak <= 0.0) {
      throw Error(ErrorCode::kDegenerateBand,
                  "filter " + std::to_string(m) + " centred at " +
                      std::to_string(center) + " Hz covers no FFT bin; band [" +
                      std::to_string(cfg.f_low_hz) + ", " +
                      std::to_string(cfg.f_high_hz) + "] Hz is too narrow for " +
                      std::to_string(n_mels) + " filters");
    }
    bank.weights.row(m) /= peak;
    bank.support[static_cast<size_t>(m)] = {first, last};
  }
  return bank;
}

RowMatrix LogFilterbankEnergies(const RowMatrix& power, const FilterBank& bank) {
  if (power.cols() != bank.num_bins()) {
    throw Error(ErrorCode::kDimMismatch,
                "power spectrum has " + std::to_string(power.cols()) +
                    " bins, filterbank expects " +
                    std::to_string(bank.num_bins()));
  }
  RowMatrix out(power.rows(), bank.num_filters());
  for (Eigen::Index t = 0; t < power.rows(); ++t) {
    for (int m = 0; m < bank.num_filters(); ++m) {
      const auto [first, last] = bank.support[static_cast<size_t>(m)];
      double energy = 0.0;
      for (int k = first; k < last; ++k) energy += bank.weights(m, k) * power(t, k);
      out(t, m) = std::log(std::max(energy, kEnergyFloor));
    }
  }
  return out;
}

void SubtractColumnMeans(RowMatrix& m) {
  if (m.rows() == 0) return;
  // Averaging offsets from the first frame keeps constant columns exactly 0.
  const Eigen::RowVectorXd first = m.row(0);
  m.rowwise() -= first;
  const Eigen::RowVectorXd rest = m.colwise().mean();
  m.rowwise() -= rest;
}

FeatureMatrix LogMfbe(const Waveform& w, const FrontendConfig& cfg) {
  const FilterBank bank = BuildFilterbank(cfg, w.sample_rate_hz);
  return LogMfbe(PowerSpectrum(FrameSignal(w, cfg), cfg.n_fft), bank, cfg);
}

FeatureMatrix LogMfbe(const RowMatrix& power, const FilterBank& bank,
                      const FrontendConfig& cfg) {
  FeatureMatrix features;
  features.config = cfg;
  features.frames = LogFilterbankEnergies(power, bank);
  SubtractColumnMeans(features.frames);
  return features;
}

void WriteFeatureDump(const std::filesystem::path& path, const RowMatrix& m) {
  internal::ByteWriter w;
  w.PutBytes(kDumpMagic);
  w.PutU32(kDumpVersion);
  w.PutU32(static_cast<uint32_t>(m.rows()));
  w.PutU32(static_cast<uint32_t>(m.cols()));
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      w.PutF32(static_cast<float>(m(t, c)));
    }
  }
  internal::WriteFileAtomically(path, w.bytes());
}

RowMatrix ReadFeatureDump(const std::filesystem::path& path) {
  const std::vector<uint8_t> bytes = internal::ReadFileBytes(path);
  internal::ByteReader r(bytes);
  if (r.GetString(4) != kDumpMagic) {
    throw Error(ErrorCode::kBadMagic, path.string() + " is not an MFBE dump");
  }
  const uint32_t version = r.GetU32();
  if (version != kDumpVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                "MFBE dump version " + std::to_string(version));
  }
  const uint32_t rows = r.GetU32();
  const uint32_t cols = r.GetU32();
  RowMatrix m(rows, cols);
  for (uint32_t t = 0; t < rows; ++t) {
    for (uint32_t c = 0; c < cols; ++c) m(t, c) = r.GetF32();
  }
  return m;
}

}  // namespace mssv
