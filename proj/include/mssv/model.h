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

#ifndef MSSV_MODEL_H_
#define MSSV_MODEL_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mssv/audio.h"
#include "mssv/features.h"
#include "mssv/losses.h"
#include "mssv/nn.h"
#include "mssv/optim.h"

namespace mssv {

// One branch of the model: a frequency selector feeding an encoder.
struct StreamConfig {
  std::string name;
  double f_low_hz = 20.0;
  double f_high_hz = 8000.0;

  bool operator==(const StreamConfig&) const = default;
};

StreamConfig FullBandStream();       // FB [20, 8000] Hz
StreamConfig LowFrequencyStream();   // LF [20, 2000] Hz
StreamConfig HighFrequencyStream();  // HF [1000, 8000] Hz
std::vector<StreamConfig> ThreeStreamLayout();

// Frontend settings for a stream: the defaults with the stream's band.
FrontendConfig StreamFrontend(const StreamConfig& stream);

// Throws kDegenerateBand for bad bands, kInvalidArgument for empty or
// duplicate names or an empty stream list.
void ValidateStreams(const std::vector<StreamConfig>& streams);

// Reference encoder:
//   conv2d(1->c1, k x k, stride 2) -> relu -> conv2d(c1->c2, k x k, stride 2)
//   -> relu -> per-frame flatten -> linear(->frame_dim) -> temporal mean pool
//   -> linear(frame_dim->embedding_dim)
struct EncoderConfig {
  size_t conv1_channels = 16;
  size_t conv2_channels = 32;
  size_t kernel = 3;
  size_t frame_dim = 64;
  size_t embedding_dim = 64;

  bool operator==(const EncoderConfig&) const = default;
};

inline constexpr size_t kConvStride = 2;

class MultiStreamModel {
 public:
  // Conv and linear weights are Kaiming-normal (fan_in), biases zero, class
  // weights Xavier-uniform; the prototypical scale/bias start at the given
  // values.
  static MultiStreamModel Build(const std::vector<StreamConfig>& streams,
                                const EncoderConfig& encoder, size_t num_classes,
                                Rng& rng, double proto_scale = 10.0,
                                double proto_bias = -5.0);

  MultiStreamModel(MultiStreamModel&&) noexcept = default;
  MultiStreamModel& operator=(MultiStreamModel&&) noexcept = default;
  MultiStreamModel(const MultiStreamModel&) = delete;
  MultiStreamModel& operator=(const MultiStreamModel&) = delete;

  const std::vector<StreamConfig>& streams() const { return streams_; }
  size_t num_streams() const { return streams_.size(); }
  const EncoderConfig& encoder_config() const { return encoder_config_; }
  size_t embedding_dim() const { return encoder_config_.embedding_dim; }
  size_t num_classes() const;
  const FilterBank& filterbank(size_t stream) const { return banks_.at(stream); }

  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  // Parameter dims of one stream's encoder, in layer order.
  std::vector<Dims> EncoderShapes(size_t stream) const;

  double proto_scale() const;
  double proto_bias() const;
  const Tensor& class_weights() const;

  // Log MFBE per stream from one shared power spectrum; each matrix is
  // T x n_mels.
  std::vector<RowMatrix> StreamFeatures(const Waveform& w) const;

  // Per-stream temporally pooled embeddings, then their elementwise mean.
  std::vector<Tensor> StreamEmbeddings(const Waveform& w) const;
  Tensor EmbedUtterance(const Waveform& w) const;

  // Training path over a batch of equal-length segments. ForwardBatch caches
  // activations and returns the fused embeddings [B, D]; BackwardBatch takes
  // dL/d(fused) and accumulates parameter gradients.
  Tensor ForwardBatch(const std::vector<Waveform>& segments);
  void BackwardBatch(const Tensor& grad_fused);

  // Classification head on fused embeddings: logits = E * W^T.
  Tensor Logits(const Tensor& fused) const;
  // Adds head gradients and returns dL/dE.
  Tensor LogitsBackward(const Tensor& fused, const Tensor& grad_logits);

  // Keeps the prototypical scale strictly positive.
  void ClampProtoScale(double min_scale = 1e-6);

 private:
  MultiStreamModel() = default;

  Tensor StreamInput(const std::vector<RowMatrix>& per_segment) const;

  std::vector<StreamConfig> streams_;
  EncoderConfig encoder_config_;
  std::vector<FilterBank> banks_;
  ParameterSet params_;
  std::vector<std::unique_ptr<Sequential>> encoders_;

  friend MultiStreamModel ParseCheckpoint(std::span<const uint8_t> bytes);
};

// Elementwise mean of per-stream embeddings.
Tensor FuseEmbeddings(const std::vector<Tensor>& stream_embeddings);

// Desk-scale defaults; PaperTrainConfig() carries the published training
// settings for reference runs.
struct TrainConfig {
  std::vector<StreamConfig> streams = ThreeStreamLayout();
  EncoderConfig encoder;
  int epochs = 100;
  size_t batch_speakers = 16;
  size_t utts_per_speaker = 2;
  double segment_seconds = 2.0;
  LrSchedule schedule;
  AdamConfig adam;
  uint64_t seed = 0;
  int val_interval = 10;
  int patience = 3;
  CombinedLossWeights loss_weights;
  double proto_scale_init = 10.0;
  double proto_bias_init = -5.0;
};

TrainConfig DeskTrainConfig();
TrainConfig PaperTrainConfig();
void ValidateTrainConfig(const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> val_eer;
};

struct LearningCurve {
  std::vector<EpochRecord> records;
};

struct TrainHooks {
  // Returns a validation error (EER); called every val_interval epochs.
  std::function<double(const MultiStreamModel&)> validate;
  // Called after every epoch, e.g. to write a checkpoint.
  std::function<void(const EpochRecord&, const MultiStreamModel&)> on_epoch;
};

// Joint training of all streams with the combined softmax + angular
// prototypical loss and Adam under the step-decay schedule. Each epoch draws
// every speaker's utterances in shuffled batches of batch_speakers x
// utts_per_speaker random segments. Stops early once validation EER has not
// improved for `patience` validations. Throws kNonFiniteLoss on divergence.
LearningCurve Train(MultiStreamModel& model, const Manifest& manifest,
                    const TrainConfig& cfg, Rng& rng, const TrainHooks& hooks = {});

// Same, with utterances already in memory (class index per waveform).
LearningCurve Train(MultiStreamModel& model, const std::vector<Waveform>& utterances,
                    const std::vector<size_t>& labels, const TrainConfig& cfg,
                    Rng& rng, const TrainHooks& hooks = {});

// "MSSV" checkpoint: u32 version, u32 stream count, per stream the band edges
// as binary64 and its tensors, then the shared head/loss tensors, then a
// CRC32 of everything before it. Tensors are stored as binary32.
std::string SerializeCheckpoint(const MultiStreamModel& model);
void SaveCheckpoint(const MultiStreamModel& model, const std::filesystem::path& path);
MultiStreamModel LoadCheckpoint(const std::filesystem::path& path);
MultiStreamModel ParseCheckpoint(std::span<const uint8_t> bytes);

}  // namespace mssv

#endif  // MSSV_MODEL_H_
