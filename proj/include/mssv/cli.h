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

#ifndef MSSV_CLI_H_
#define MSSV_CLI_H_

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "mssv/eval.h"
#include "mssv/model.h"

namespace mssv::cli {

// Stable exit codes for scripting.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

struct RunConfig {
  std::string profile = "desk";
  TrainConfig train;
  EvalOptions eval;
};

// Base settings for "desk" or "paper"; throws kInvalidArgument otherwise.
RunConfig ProfileDefaults(std::string_view profile);

// Overlays a JSON object onto `base`. Recognized keys: streams (array of
// {name, f_low_hz, f_high_hz}), embedding_dim, epochs, batch_speakers,
// utts_per_speaker, segment_seconds, lr_initial, lr_decay, lr_period,
// weight_decay, seed, val_interval, patience, conv1_channels, conv2_channels,
// frame_dim, proto_scale_init, proto_bias_init, softmax_weight,
// prototypical_weight, eval_seconds, p_target. Unknown keys are rejected.
RunConfig ParseRunConfig(std::string_view json_text, RunConfig base);
RunConfig LoadRunConfig(const std::filesystem::path& path, RunConfig base);

// Throws on the first invalid key, before any command has side effects.
void ValidateRunConfig(const RunConfig& cfg);

// key=value lines echoing the effective configuration.
std::string DescribeConfig(const RunConfig& cfg);

std::string FormatCurveCsv(const LearningCurve& curve);

struct SynthOptions {
  size_t speakers = 20;
  size_t utts_per_speaker = 6;
  size_t heldout_per_speaker = 3;
  double seconds = 3.0;
  uint64_t seed = 0;
  double f0_jitter = 0.05;
  double gain_jitter = 0.25;
};

struct SynthCorpus {
  std::filesystem::path manifest;  // training utterances
  std::filesystem::path trials;    // held-out utterance pairs
  size_t num_wavs = 0;
};

// Writes wav/<speaker>_<utt>.wav, train.lst and trials.txt under out_dir.
// Targets pair held-out utterances of the same speaker; an equal number of
// nontargets pair held-out utterances of different speakers.
SynthCorpus GenerateSynthCorpus(const SynthOptions& options,
                                const std::filesystem::path& out_dir);

// Parses argv and runs one subcommand; returns the process exit code.
int Run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mssv::cli

#endif  // MSSV_CLI_H_
