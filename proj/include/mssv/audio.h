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

#ifndef MSSV_AUDIO_H_
#define MSSV_AUDIO_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace mssv {

using Rng = std::mt19937_64;

inline constexpr int kPipelineSampleRate = 16000;

struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = kPipelineSampleRate;

  size_t size() const { return samples.size(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

// Throws kInvalidArgument if the waveform is empty, has a non-positive rate or
// holds a sample outside [-1, 1].
void ValidateWaveform(const Waveform& w);

// Reads a RIFF/WAVE file holding 16-bit mono PCM at 16 kHz. Samples are the
// PCM integers divided by 32768.
Waveform ReadWav(const std::filesystem::path& path);

// Writes 16-bit mono PCM. Samples are scaled by 32768, rounded and clipped.
void WriteWav(const std::filesystem::path& path, const Waveform& w);

// Number of samples a segment of `duration_s` occupies at `sample_rate_hz`.
size_t SegmentLength(double duration_s, int sample_rate_hz);

// Copies `length` samples starting at `offset`, wrapping around the end of
// the utterance as often as needed.
Waveform CyclicSlice(const Waveform& w, size_t offset, size_t length);

// Random fixed-length training crop. Utterances shorter than the request are
// cyclically repeated up to the requested length, which leaves offset 0 as
// the only choice; in that case the random source is not consumed.
Waveform SampleSegment(const Waveform& w, double duration_s, Rng& rng);

struct ManifestEntry {
  std::string speaker_id;
  std::string path;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  // Directory that relative entry paths are resolved against.
  std::filesystem::path base_dir;

  std::filesystem::path Resolve(const std::string& path) const;
  // Speaker ids in order of first appearance; position is the class index.
  std::vector<std::string> SpeakerIds() const;
};

// Parses `speaker_id<TAB>path` lines. Blank lines and lines starting with '#'
// are skipped.
Manifest LoadManifest(const std::filesystem::path& path);
void SaveManifest(const std::filesystem::path& path, const Manifest& manifest);

inline constexpr int kNumOctaveBands = 8;

// Octave band k spans [8000 / 2^(8-k), 8000 / 2^(7-k)) Hz; band 0 also takes
// everything below 62.5 Hz.
int OctaveBandIndex(double freq_hz);
std::array<double, kNumOctaveBands + 1> OctaveBandEdgesHz();

struct SpeakerProfile {
  std::string speaker_id;
  std::array<double, kNumOctaveBands> band_gains{};
  double fundamental_hz = 120.0;
};

void ValidateProfile(const SpeakerProfile& profile);

// Draws band gains uniformly in [0.1, 1] and f0 uniformly in [80, 300] Hz.
SpeakerProfile RandomProfile(const std::string& speaker_id, Rng& rng);

// Per-utterance variation around a speaker's nominal voice: f0 is scaled by
// (1 + U(-f0_jitter, f0_jitter)) and each band gain by exp(N(0, gain_jitter)),
// then both are clamped back into the valid profile ranges.
SpeakerProfile JitterProfile(const SpeakerProfile& profile, double f0_jitter,
                             double gain_jitter, Rng& rng);

// Harmonic series at the profile's f0 with each harmonic's amplitude taken
// from the gain of the octave band it falls in, random harmonic phases, and
// white noise at 20 dB SNR. Peak-normalized to 0.5.
Waveform SynthUtterance(const SpeakerProfile& profile, double duration_s,
                        Rng& rng);

}  // namespace mssv

#endif  // MSSV_AUDIO_H_
