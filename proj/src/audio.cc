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

#include "mssv/audio.h"

#include <algorithm>
#include <cstring>
#include <cmath>
#include <fstream>
#include <numbers>
#include <unordered_set>

#include "mssv/error.h"

namespace mssv {
namespace {

constexpr double kPcmScale = 32768.0;
constexpr double kSynthSnrDb = 20.0;
constexpr double kSynthPeak = 0.5;

std::vector<uint8_t> ReadAllBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

uint32_t LoadU32(const uint8_t* p) {
  return uint32_t{p[0]} | uint32_t{p[1]} << 8 | uint32_t{p[2]} << 16 |
         uint32_t{p[3]} << 24;
}

uint16_t LoadU16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | p[1] << 8);
}

void PutU32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

void PutU16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

void ValidateWaveform(const Waveform& w) {
  if (w.samples.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "waveform has no samples");
  }
  if (w.sample_rate_hz <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "sample rate must be positive");
  }
  for (size_t i = 0; i < w.samples.size(); ++i) {
    const double s = w.samples[i];
    if (!(s >= -1.0 && s <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "sample " + std::to_string(i) + " outside [-1, 1]");
    }
  }
}

Waveform ReadWav(const std::filesystem::path& path) {
  const std::vector<uint8_t> bytes = ReadAllBytes(path);
  const std::string where = " in " + path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::kMalformedContainer, "missing RIFF/WAVE header" + where);
  }

  bool have_fmt = false;
  const uint8_t* data = nullptr;
  size_t data_size = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const uint8_t* chunk = bytes.data() + pos;
    const size_t chunk_size = LoadU32(chunk + 4);
    const size_t body = pos + 8;
    if (chunk_size > bytes.size() - body) {
      throw Error(ErrorCode::kMalformedContainer,
                  "chunk extends past end of file" + where);
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (chunk_size < 16) {
        throw Error(ErrorCode::kMalformedContainer, "fmt chunk too small" + where);
      }
      const uint8_t* f = bytes.data() + body;
      const uint16_t format_tag = LoadU16(f);
      const uint16_t channels = LoadU16(f + 2);
      const uint32_t rate = LoadU32(f + 4);
      const uint16_t bits = LoadU16(f + 14);
      if (format_tag != 1) {
        throw Error(ErrorCode::kUnsupportedFormat,
                    "format tag " + std::to_string(format_tag) +
                        " is not PCM" + where);
      }
      if (bits != 16) {
        throw Error(ErrorCode::kUnsupportedFormat,
                    "bit depth " + std::to_string(bits) + " is not 16" + where);
      }
      if (channels != 1) {
        throw Error(ErrorCode::kUnsupportedFormat,
                    "channel count " + std::to_string(channels) +
                        " is not mono" + where);
      }
      if (rate != kPipelineSampleRate) {
        throw Error(ErrorCode::kUnsupportedFormat,
                    "sample rate " + std::to_string(rate) + " is not 16000" +
                        where);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = chunk_size;
    }
    pos = body + chunk_size + (chunk_size & 1);
  }
  if (!have_fmt) {
    throw Error(ErrorCode::kMalformedContainer, "no fmt chunk" + where);
  }
  if (data == nullptr) {
    throw Error(ErrorCode::kMalformedContainer, "no data chunk" + where);
  }
  if (data_size % 2 != 0 || data_size == 0) {
    throw Error(ErrorCode::kMalformedContainer,
                "data chunk size " + std::to_string(data_size) +
                    " is not a positive multiple of 2" + where);
  }

  Waveform w;
  w.sample_rate_hz = kPipelineSampleRate;
  w.samples.resize(data_size / 2);
  for (size_t i = 0; i < w.samples.size(); ++i) {
    const auto pcm = static_cast<int16_t>(LoadU16(data + 2 * i));
    w.samples[i] = pcm / kPcmScale;
  }
  return w;
}

void WriteWav(const std::filesystem::path& path, const Waveform& w) {
  const uint32_t data_bytes = static_cast<uint32_t>(w.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  PutU32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  PutU32(out, 16);
  PutU16(out, 1);
  PutU16(out, 1);
  PutU32(out, static_cast<uint32_t>(w.sample_rate_hz));
  PutU32(out, static_cast<uint32_t>(w.sample_rate_hz) * 2);
  PutU16(out, 2);
  PutU16(out, 16);
  out += "data";
  PutU32(out, data_bytes);
  for (double s : w.samples) {
    const double scaled = std::clamp(std::round(s * kPcmScale), -32768.0, 32767.0);
    PutU16(out, static_cast<uint16_t>(static_cast<int16_t>(scaled)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorCode::kIoError, "short write to " + path.string());
}

size_t SegmentLength(double duration_s, int sample_rate_hz) {
  if (!(duration_s > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "segment duration must be > 0");
  }
  return static_cast<size_t>(std::llround(duration_s * sample_rate_hz));
}

Waveform CyclicSlice(const Waveform& w, size_t offset, size_t length) {
  if (w.samples.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "cannot slice an empty waveform");
  }
  Waveform out;
  out.sample_rate_hz = w.sample_rate_hz;
  out.samples.resize(length);
  const size_t n = w.samples.size();
  size_t src = offset % n;
  for (size_t i = 0; i < length; ++i) {
    out.samples[i] = w.samples[src];
    if (++src == n) src = 0;
  }
  return out;
}

Waveform SampleSegment(const Waveform& w, double duration_s, Rng& rng) {
  const size_t length = SegmentLength(duration_s, w.sample_rate_hz);
  if (w.samples.size() <= length) return CyclicSlice(w, 0, length);
  std::uniform_int_distribution<size_t> pick(0, w.samples.size() - length);
  return CyclicSlice(w, pick(rng), length);
}

std::filesystem::path Manifest::Resolve(const std::string& path) const {
  std::filesystem::path p(path);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

std::vector<std::string> Manifest::SpeakerIds() const {
  std::vector<std::string> ids;
  std::unordered_set<std::string> seen;
  for (const auto& e : entries) {
    if (seen.insert(e.speaker_id).second) ids.push_back(e.speaker_id);
  }
  return ids;
}

Manifest LoadManifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open manifest " + path.string());
  Manifest manifest;
  manifest.base_dir = path.parent_path();
  std::unordered_set<std::string> paths;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const size_t tab = line.find('\t');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (tab == std::string::npos) {
      throw Error(ErrorCode::kParseError, where + ": expected speaker_id<TAB>path");
    }
    ManifestEntry entry{line.substr(0, tab), line.substr(tab + 1)};
    if (entry.speaker_id.empty() || entry.path.empty()) {
      throw Error(ErrorCode::kParseError, where + ": empty speaker id or path");
    }
    if (!paths.insert(entry.path).second) {
      throw Error(ErrorCode::kDuplicatePath, where + ": repeated path " + entry.path);
    }
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

void SaveManifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  for (const auto& e : manifest.entries) {
    out << e.speaker_id << '\t' << e.path << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "short write to " + path.string());
}

std::array<double, kNumOctaveBands + 1> OctaveBandEdgesHz() {
  std::array<double, kNumOctaveBands + 1> edges{};
  edges[0] = 0.0;
  for (int k = 1; k <= kNumOctaveBands; ++k) {
    edges[k] = 8000.0 / std::ldexp(1.0, kNumOctaveBands - k);
  }
  return edges;
}

int OctaveBandIndex(double freq_hz) {
  const auto edges = OctaveBandEdgesHz();
  for (int k = 1; k < kNumOctaveBands; ++k) {
    if (freq_hz < edges[k]) return k - 1;
  }
  return kNumOctaveBands - 1;
}

void ValidateProfile(const SpeakerProfile& profile) {
  for (double g : profile.band_gains) {
    if (!(g >= 0.1 && g <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "band gain outside [0.1, 1] for speaker " + profile.speaker_id);
    }
  }
  if (!(profile.fundamental_hz >= 80.0 && profile.fundamental_hz <= 300.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "fundamental outside [80, 300] Hz for speaker " +
                    profile.speaker_id);
  }
}

SpeakerProfile RandomProfile(const std::string& speaker_id, Rng& rng) {
  std::uniform_real_distribution<double> gain(0.1, 1.0);
  std::uniform_real_distribution<double> f0(80.0, 300.0);
  SpeakerProfile p;
  p.speaker_id = speaker_id;
  for (double& g : p.band_gains) g = gain(rng);
  p.fundamental_hz = f0(rng);
  return p;
}

SpeakerProfile JitterProfile(const SpeakerProfile& profile, double f0_jitter,
                             double gain_jitter, Rng& rng) {
  SpeakerProfile p = profile;
  std::uniform_real_distribution<double> f0_scale(-f0_jitter, f0_jitter);
  std::normal_distribution<double> log_gain(0.0, gain_jitter);
  p.fundamental_hz =
      std::clamp(p.fundamental_hz * (1.0 + f0_scale(rng)), 80.0, 300.0);
  for (double& g : p.band_gains) {
    g = std::clamp(g * std::exp(log_gain(rng)), 0.1, 1.0);
  }
  return p;
}

Waveform SynthUtterance(const SpeakerProfile& profile, double duration_s,
                        Rng& rng) {
  ValidateProfile(profile);
  const size_t n = SegmentLength(duration_s, kPipelineSampleRate);
  const double nyquist = kPipelineSampleRate / 2.0;
  const double two_pi = 2.0 * std::numbers::pi;

  std::uniform_real_distribution<double> phase(0.0, two_pi);
  std::vector<double> signal(n, 0.0);
  for (int h = 1; h * profile.fundamental_hz < nyquist; ++h) {
    const double freq = h * profile.fundamental_hz;
    const double amp = profile.band_gains[OctaveBandIndex(freq)];
    const double phi = phase(rng);
    const double step = two_pi * freq / kPipelineSampleRate;
    for (size_t i = 0; i < n; ++i) {
      signal[i] += amp * std::sin(step * static_cast<double>(i) + phi);
    }
  }

  double power = 0.0;
  for (double s : signal) power += s * s;
  power /= static_cast<double>(n);
  const double noise_sd = std::sqrt(power / std::pow(10.0, kSynthSnrDb / 10.0));
  std::normal_distribution<double> noise(0.0, noise_sd);
  double peak = 0.0;
  for (double& s : signal) {
    s += noise(rng);
    peak = std::max(peak, std::abs(s));
  }

  Waveform w;
  w.sample_rate_hz = kPipelineSampleRate;
  w.samples = std::move(signal);
  if (peak > 0.0) {
    for (double& s : w.samples) s *= kSynthPeak / peak;
  }
  return w;
}

}  // namespace mssv
