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

#ifndef MSSV_FEATURES_H_
#define MSSV_FEATURES_H_

#include <complex>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mssv/audio.h"

namespace mssv {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kEnergyFloor = 1e-10;

// Analysis settings for one stream. [f_low_hz, f_high_hz] is the frequency
// selector: the mel bank is laid out over this band only, so every stream
// produces n_mels coefficients regardless of its width.
struct FrontendConfig {
  double win_ms = 25.0;
  double hop_ms = 10.0;
  int n_fft = 512;
  int n_mels = 40;
  double f_low_hz = 20.0;
  double f_high_hz = 8000.0;

  size_t WindowLength(int sample_rate_hz) const;
  size_t HopLength(int sample_rate_hz) const;
};

// Band problems raise kDegenerateBand, everything else kInvalidArgument.
void ValidateFrontendConfig(const FrontendConfig& cfg, int sample_rate_hz);

struct FilterBank {
  RowMatrix weights;  // n_mels x (n_fft / 2 + 1)
  std::vector<double> center_freqs_hz;
  // Half-open [first, last) range of nonzero bins per filter.
  std::vector<std::pair<int, int>> support;
  int sample_rate_hz = kPipelineSampleRate;

  int num_filters() const { return static_cast<int>(weights.rows()); }
  int num_bins() const { return static_cast<int>(weights.cols()); }
  double BinFrequency(int bin) const;
};

struct FeatureMatrix {
  RowMatrix frames;  // T x n_mels
  FrontendConfig config;
};

double HzToMel(double f_hz);
double MelToHz(double mel);

// 1 + floor((n_samples - win) / hop); zero when the input is shorter than one
// window.
size_t NumFrames(size_t n_samples, const FrontendConfig& cfg,
                 int sample_rate_hz);

// Hamming-windowed frames, one per row.
RowMatrix FrameSignal(const Waveform& w, const FrontendConfig& cfg);

// In-place forward DFT. The length must be a power of two.
void Fft(std::span<std::complex<double>> data);

// One-sided |DFT|^2 of each zero-padded row.
RowMatrix PowerSpectrum(const RowMatrix& frames, int n_fft);

FilterBank BuildFilterbank(const FrontendConfig& cfg, int sample_rate_hz);

// ln(max(bank * power_row, floor)) per frame, without mean normalization.
RowMatrix LogFilterbankEnergies(const RowMatrix& power, const FilterBank& bank);

// Subtracts each column's mean over frames.
void SubtractColumnMeans(RowMatrix& m);

// Full pipeline: frame, power spectrum, log filterbank energies, per-utterance
// mean normalization. Builds the filterbank on the fly.
FeatureMatrix LogMfbe(const Waveform& w, const FrontendConfig& cfg);

// Same, starting from a precomputed power spectrum so several streams can
// share one FFT pass.
FeatureMatrix LogMfbe(const RowMatrix& power, const FilterBank& bank,
                      const FrontendConfig& cfg);

// "MFBE", u32 version, u32 T, u32 n_mels, then binary32 row-major values.
void WriteFeatureDump(const std::filesystem::path& path, const RowMatrix& m);
RowMatrix ReadFeatureDump(const std::filesystem::path& path);

}  // namespace mssv

#endif  // MSSV_FEATURES_H_
