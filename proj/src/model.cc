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

#include "mssv/model.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <zlib.h>

#include "binary_io.h"
#include "mssv/error.h"

namespace mssv {
namespace {

constexpr char kCheckpointMagic[] = "MSSV";
constexpr uint32_t kCheckpointVersion = 1;
constexpr char kClassWeights[] = "head/class_weights";
constexpr char kProtoScale[] = "loss/scale";
constexpr char kProtoBias[] = "loss/bias";

size_t ConvOut(size_t in, size_t kernel) { return (in - kernel) / kConvStride + 1; }

// Width of the per-frame vector after both convolutions.
size_t FlattenedWidth(const EncoderConfig& cfg, size_t n_mels) {
  if (n_mels < cfg.kernel || ConvOut(n_mels, cfg.kernel) < cfg.kernel) {
    throw Error(ErrorCode::kInvalidArgument,
                std::to_string(n_mels) + " mel bands are too few for two " +
                    std::to_string(cfg.kernel) + "x" + std::to_string(cfg.kernel) +
                    " convolutions");
  }
  return cfg.conv2_channels * ConvOut(ConvOut(n_mels, cfg.kernel), cfg.kernel);
}

struct EncoderParamSpec {
  std::string suffix;
  Dims dims;
  size_t fan_in;  // 0 for biases
};

std::vector<EncoderParamSpec> EncoderSpecs(const EncoderConfig& cfg, size_t n_mels) {
  const size_t k = cfg.kernel;
  const size_t flat = FlattenedWidth(cfg, n_mels);
  return {
      {"conv1.weight", {cfg.conv1_channels, 1, k, k}, k * k},
      {"conv1.bias", {cfg.conv1_channels}, 0},
      {"conv2.weight", {cfg.conv2_channels, cfg.conv1_channels, k, k},
       cfg.conv1_channels * k * k},
      {"conv2.bias", {cfg.conv2_channels}, 0},
      {"frame.weight", {flat, cfg.frame_dim}, flat},
      {"frame.bias", {cfg.frame_dim}, 0},
      {"embed.weight", {cfg.frame_dim, cfg.embedding_dim}, cfg.frame_dim},
      {"embed.bias", {cfg.embedding_dim}, 0},
  };
}

std::unique_ptr<Sequential> BuildEncoder(ParameterSet& params, const std::string& prefix) {
  auto p = [&](const char* suffix) { return &params.Get(prefix + "/" + suffix); };
  auto encoder = std::make_unique<Sequential>();
  encoder->Append(std::make_unique<Conv2d>(p("conv1.weight"), p("conv1.bias"), kConvStride));
  encoder->Append(std::make_unique<Relu>());
  encoder->Append(std::make_unique<Conv2d>(p("conv2.weight"), p("conv2.bias"), kConvStride));
  encoder->Append(std::make_unique<Relu>());
  encoder->Append(std::make_unique<FrameFlatten>());
  encoder->Append(std::make_unique<Linear>(p("frame.weight"), p("frame.bias")));
  encoder->Append(std::make_unique<TemporalMeanPool>());
  encoder->Append(std::make_unique<Linear>(p("embed.weight"), p("embed.bias")));
  return encoder;
}

uint32_t Crc32(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()),
              static_cast<uInt>(bytes.size()));
  return static_cast<uint32_t>(crc);
}

void PutTensor(internal::ByteWriter& w, const std::string& name, const Tensor& t) {
  if (name.size() > 0xffff) {
    throw Error(ErrorCode::kInvalidArgument, "parameter name too long: " + name);
  }
  w.PutU16(static_cast<uint16_t>(name.size()));
  w.PutBytes(name);
  w.PutU8(static_cast<uint8_t>(t.rank()));
  for (size_t d : t.dims()) w.PutU64(d);
  for (double v : t.values()) w.PutF32(static_cast<float>(v));
}

std::pair<std::string, Tensor> GetTensor(internal::ByteReader& r) {
  std::string name = r.GetString(r.GetU16());
  const uint8_t rank = r.GetU8();
  if (rank == 0) {
    throw Error(ErrorCode::kMalformedContainer, "tensor " + name + " has rank 0");
  }
  Dims dims(rank);
  for (auto& d : dims) {
    d = r.GetU64();
    if (d == 0 || d > (uint64_t{1} << 32)) {
      throw Error(ErrorCode::kMalformedContainer, "tensor " + name + " has bad dims");
    }
  }
  const size_t count = NumElements(dims);
  if (count * 4 > r.remaining()) {
    throw Error(ErrorCode::kTruncatedFile,
                "tensor " + name + " needs " + std::to_string(count * 4) + " bytes");
  }
  std::vector<double> data(count);
  for (double& v : data) v = r.GetF32();
  return {std::move(name), Tensor(std::move(dims), std::move(data))};
}

}  // namespace

StreamConfig FullBandStream() { return {"FB", 20.0, 8000.0}; }
StreamConfig LowFrequencyStream() { return {"LF", 20.0, 2000.0}; }
StreamConfig HighFrequencyStream() { return {"HF", 1000.0, 8000.0}; }

std::vector<StreamConfig> ThreeStreamLayout() {
  return {FullBandStream(), LowFrequencyStream(), HighFrequencyStream()};
}

FrontendConfig StreamFrontend(const StreamConfig& stream) {
  FrontendConfig cfg;
  cfg.f_low_hz = stream.f_low_hz;
  cfg.f_high_hz = stream.f_high_hz;
  return cfg;
}

void ValidateStreams(const std::vector<StreamConfig>& streams) {
  if (streams.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "at least one stream is required");
  }
  std::set<std::string> names;
  for (const auto& s : streams) {
    if (s.name.empty() || s.name.find('/') != std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument,
                  "stream names must be non-empty and contain no '/'");
    }
    if (!names.insert(s.name).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate stream name " + s.name);
    }
    try {
      ValidateFrontendConfig(StreamFrontend(s), kPipelineSampleRate);
    } catch (const Error& e) {
      throw Error(e.code(), "stream " + s.name + ": " + e.what());
    }
  }
}

MultiStreamModel MultiStreamModel::Build(const std::vector<StreamConfig>& streams,
                                         const EncoderConfig& encoder,
                                         size_t num_classes, Rng& rng,
                                         double proto_scale, double proto_bias) {
  ValidateStreams(streams);
  if (num_classes < 2) {
    throw Error(ErrorCode::kInvalidArgument, "need at least 2 classes");
  }
  if (encoder.conv1_channels == 0 || encoder.conv2_channels == 0 ||
      encoder.kernel == 0 || encoder.frame_dim == 0 || encoder.embedding_dim == 0) {
    throw Error(ErrorCode::kInvalidArgument, "encoder sizes must be positive");
  }
  MultiStreamModel model;
  model.streams_ = streams;
  model.encoder_config_ = encoder;
  for (const auto& s : streams) {
    const FrontendConfig fe = StreamFrontend(s);
    try {
      model.banks_.push_back(BuildFilterbank(fe, kPipelineSampleRate));
    } catch (const Error& e) {
      throw Error(e.code(), "stream " + s.name + ": " + e.what());
    }
    for (const auto& spec : EncoderSpecs(encoder, static_cast<size_t>(fe.n_mels))) {
      Tensor value = spec.fan_in > 0 ? InitKaimingNormal(spec.dims, spec.fan_in, rng)
                                     : InitConstant(spec.dims, 0.0);
      model.params_.Add(s.name + "/" + spec.suffix, std::move(value));
    }
    model.encoders_.push_back(BuildEncoder(model.params_, s.name));
  }
  model.params_.Add(kClassWeights,
                    InitXavierUniform({num_classes, encoder.embedding_dim},
                                      encoder.embedding_dim, num_classes, rng));
  model.params_.Add(kProtoScale, InitConstant({1}, proto_scale));
  model.params_.Add(kProtoBias, InitConstant({1}, proto_bias));
  return model;
}

size_t MultiStreamModel::num_classes() const {
  return params_.Get(kClassWeights).value.dim(0);
}

std::vector<Dims> MultiStreamModel::EncoderShapes(size_t stream) const {
  const std::string prefix = streams_.at(stream).name + "/";
  std::vector<Dims> shapes;
  for (const auto& e : params_) {
    if (e.name.starts_with(prefix)) shapes.push_back(e.param->value.dims());
  }
  return shapes;
}

double MultiStreamModel::proto_scale() const { return params_.Get(kProtoScale).value[0]; }
double MultiStreamModel::proto_bias() const { return params_.Get(kProtoBias).value[0]; }
const Tensor& MultiStreamModel::class_weights() const {
  return params_.Get(kClassWeights).value;
}

std::vector<RowMatrix> MultiStreamModel::StreamFeatures(const Waveform& w) const {
  const FrontendConfig base = StreamFrontend(streams_.front());
  const RowMatrix power = PowerSpectrum(FrameSignal(w, base), base.n_fft);
  std::vector<RowMatrix> out;
  out.reserve(streams_.size());
  for (size_t s = 0; s < streams_.size(); ++s) {
    out.push_back(LogMfbe(power, banks_[s], StreamFrontend(streams_[s])).frames);
  }
  return out;
}

Tensor MultiStreamModel::StreamInput(const std::vector<RowMatrix>& per_segment) const {
  const auto frames = static_cast<size_t>(per_segment.front().rows());
  const auto mels = static_cast<size_t>(per_segment.front().cols());
  Tensor x({per_segment.size(), 1, frames, mels});
  for (size_t b = 0; b < per_segment.size(); ++b) {
    const RowMatrix& m = per_segment[b];
    if (static_cast<size_t>(m.rows()) != frames) {
      throw Error(ErrorCode::kShapeMismatch, "batch segments differ in length");
    }
    std::copy(m.data(), m.data() + m.size(), x.data() + b * frames * mels);
  }
  return x;
}

Tensor FuseEmbeddings(const std::vector<Tensor>& stream_embeddings) {
  if (stream_embeddings.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no stream embeddings to fuse");
  }
  // first + mean(e - first): identical streams fuse to exactly themselves.
  const Tensor& first = stream_embeddings.front();
  Tensor offset(first.dims(), 0.0);
  for (const Tensor& e : stream_embeddings) {
    if (e.dims() != first.dims()) {
      throw Error(ErrorCode::kDimMismatch, "stream embeddings differ in dims");
    }
    for (size_t i = 0; i < e.size(); ++i) offset[i] += e[i] - first[i];
  }
  const double inv = 1.0 / static_cast<double>(stream_embeddings.size());
  Tensor fused = first;
  for (size_t i = 0; i < fused.size(); ++i) fused[i] += offset[i] * inv;
  return fused;
}

std::vector<Tensor> MultiStreamModel::StreamEmbeddings(const Waveform& w) const {
  const std::vector<RowMatrix> features = StreamFeatures(w);
  std::vector<Tensor> out;
  for (size_t s = 0; s < streams_.size(); ++s) {
    Tensor e = encoders_[s]->Apply(StreamInput({features[s]}));
    out.push_back(e.Reshaped({embedding_dim()}));
  }
  return out;
}

Tensor MultiStreamModel::EmbedUtterance(const Waveform& w) const {
  return FuseEmbeddings(StreamEmbeddings(w));
}

Tensor MultiStreamModel::ForwardBatch(const std::vector<Waveform>& segments) {
  if (segments.empty()) throw Error(ErrorCode::kInvalidArgument, "empty batch");
  std::vector<std::vector<RowMatrix>> per_stream(streams_.size());
  for (const Waveform& seg : segments) {
    std::vector<RowMatrix> f = StreamFeatures(seg);
    for (size_t s = 0; s < streams_.size(); ++s) per_stream[s].push_back(std::move(f[s]));
  }
  std::vector<Tensor> outs;
  for (size_t s = 0; s < streams_.size(); ++s) {
    outs.push_back(encoders_[s]->Forward(StreamInput(per_stream[s])));
  }
  return FuseEmbeddings(outs);
}

void MultiStreamModel::BackwardBatch(const Tensor& grad_fused) {
  Tensor share = grad_fused;
  const double inv = 1.0 / static_cast<double>(streams_.size());
  for (double& v : share.values()) v *= inv;
  for (auto& encoder : encoders_) encoder->Backward(share);
}

Tensor MultiStreamModel::Logits(const Tensor& fused) const {
  const Tensor& w = class_weights();
  const size_t classes = w.dim(0);
  const size_t dim = w.dim(1);
  if (fused.rank() != 2 || fused.dim(1) != dim) {
    throw Error(ErrorCode::kShapeMismatch,
                "head expects [B, " + std::to_string(dim) + "], got " +
                    DimsToString(fused.dims()));
  }
  const size_t rows = fused.dim(0);
  Tensor logits({rows, classes}, 0.0);
  for (size_t i = 0; i < rows; ++i) {
    for (size_t c = 0; c < classes; ++c) {
      double dot = 0.0;
      for (size_t d = 0; d < dim; ++d) dot += fused[i * dim + d] * w[c * dim + d];
      logits[i * classes + c] = dot;
    }
  }
  return logits;
}

Tensor MultiStreamModel::LogitsBackward(const Tensor& fused, const Tensor& grad_logits) {
  Parameter& head = params_.Get(kClassWeights);
  const size_t classes = head.value.dim(0);
  const size_t dim = head.value.dim(1);
  const size_t rows = fused.dim(0);
  Tensor grad_fused(fused.dims(), 0.0);
  for (size_t i = 0; i < rows; ++i) {
    for (size_t c = 0; c < classes; ++c) {
      const double g = grad_logits[i * classes + c];
      if (g == 0.0) continue;
      for (size_t d = 0; d < dim; ++d) {
        grad_fused[i * dim + d] += g * head.value[c * dim + d];
        head.grad[c * dim + d] += g * fused[i * dim + d];
      }
    }
  }
  return grad_fused;
}

void MultiStreamModel::ClampProtoScale(double min_scale) {
  double& w = params_.Get(kProtoScale).value[0];
  w = std::max(w, min_scale);
}

TrainConfig DeskTrainConfig() { return TrainConfig{}; }

TrainConfig PaperTrainConfig() {
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.batch_speakers = 200;  // 200 speakers x 2 utterances = 400 segments
  cfg.utts_per_speaker = 2;
  cfg.schedule = LrSchedule{0.001, 0.95, 10};
  cfg.val_interval = 10;
  return cfg;
}

void ValidateTrainConfig(const TrainConfig& cfg) {
  ValidateStreams(cfg.streams);
  ValidateLrSchedule(cfg.schedule);
  auto bad = [](const std::string& what) {
    throw Error(ErrorCode::kInvalidArgument, what);
  };
  if (cfg.epochs < 1) bad("epochs must be >= 1");
  if (cfg.batch_speakers < 2) bad("batch_speakers must be >= 2");
  if (cfg.utts_per_speaker < 2) bad("utts_per_speaker must be >= 2");
  if (!(cfg.segment_seconds > 0.0)) bad("segment_seconds must be > 0");
  if (cfg.val_interval < 1) bad("val_interval must be >= 1");
  if (cfg.patience < 1) bad("patience must be >= 1");
  if (!(cfg.adam.weight_decay >= 0.0)) bad("weight_decay must be >= 0");
  if (!(cfg.adam.beta1 >= 0.0 && cfg.adam.beta1 < 1.0) ||
      !(cfg.adam.beta2 >= 0.0 && cfg.adam.beta2 < 1.0) || !(cfg.adam.epsilon > 0.0)) {
    bad("Adam needs 0 <= beta < 1 and epsilon > 0");
  }
  if (!(cfg.proto_scale_init > 0.0)) bad("proto_scale_init must be > 0");
  if (cfg.encoder.embedding_dim == 0) bad("embedding_dim must be >= 1");
}

LearningCurve Train(MultiStreamModel& model, const Manifest& manifest,
                    const TrainConfig& cfg, Rng& rng, const TrainHooks& hooks) {
  const std::vector<std::string> speakers = manifest.SpeakerIds();
  std::vector<Waveform> utterances;
  std::vector<size_t> labels;
  for (const auto& entry : manifest.entries) {
    Waveform w = ReadWav(manifest.Resolve(entry.path));
    ValidateWaveform(w);
    utterances.push_back(std::move(w));
    labels.push_back(static_cast<size_t>(
        std::find(speakers.begin(), speakers.end(), entry.speaker_id) -
        speakers.begin()));
  }
  return Train(model, utterances, labels, cfg, rng, hooks);
}

LearningCurve Train(MultiStreamModel& model, const std::vector<Waveform>& utterances,
                    const std::vector<size_t>& labels, const TrainConfig& cfg,
                    Rng& rng, const TrainHooks& hooks) {
  ValidateTrainConfig(cfg);
  if (utterances.size() != labels.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one label per utterance required");
  }
  std::vector<std::vector<size_t>> by_speaker;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= model.num_classes()) {
      throw Error(ErrorCode::kLabelOutOfRange,
                  "speaker index " + std::to_string(labels[i]) + " but model has " +
                      std::to_string(model.num_classes()) + " classes");
    }
    if (labels[i] >= by_speaker.size()) by_speaker.resize(labels[i] + 1);
    by_speaker[labels[i]].push_back(i);
  }
  std::vector<size_t> speakers;
  size_t max_utts = 0;
  for (size_t s = 0; s < by_speaker.size(); ++s) {
    if (by_speaker[s].empty()) continue;
    speakers.push_back(s);
    max_utts = std::max(max_utts, by_speaker[s].size());
  }
  if (speakers.size() < 2) {
    throw Error(ErrorCode::kDegenerateBatch, "training needs at least 2 speakers");
  }

  const size_t per_speaker = cfg.utts_per_speaker;
  const size_t rounds = (max_utts + per_speaker - 1) / per_speaker;
  AdamState adam(model.parameters(), cfg.adam);
  model.parameters().ZeroGrad();

  LearningCurve curve;
  std::vector<double> val_history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = LrAtEpoch(cfg.schedule, epoch);

    std::vector<std::vector<size_t>> order(by_speaker.size());
    for (size_t s : speakers) {
      order[s] = by_speaker[s];
      std::shuffle(order[s].begin(), order[s].end(), rng);
    }

    double loss_sum = 0.0;
    size_t steps = 0;
    for (size_t round = 0; round < rounds; ++round) {
      std::vector<size_t> shuffled = speakers;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      std::vector<std::vector<size_t>> batches;
      for (size_t i = 0; i < shuffled.size(); i += cfg.batch_speakers) {
        const size_t end = std::min(shuffled.size(), i + cfg.batch_speakers);
        batches.emplace_back(shuffled.begin() + static_cast<long>(i),
                             shuffled.begin() + static_cast<long>(end));
      }
      // A trailing batch with one speaker has no negatives; fold it back.
      if (batches.size() > 1 && batches.back().size() < 2) {
        batches[batches.size() - 2].push_back(batches.back().front());
        batches.pop_back();
      }

      for (const auto& batch : batches) {
        std::vector<Waveform> segments;
        std::vector<size_t> batch_labels;
        for (size_t spk : batch) {
          const auto& utts = order[spk];
          for (size_t m = 0; m < per_speaker; ++m) {
            const size_t utt = utts[(round * per_speaker + m) % utts.size()];
            segments.push_back(SampleSegment(utterances[utt], cfg.segment_seconds, rng));
            batch_labels.push_back(spk);
          }
        }

        const Tensor fused = model.ForwardBatch(segments);
        if (!fused.AllFinite()) {
          throw Error(ErrorCode::kNonFiniteLoss, "epoch " + std::to_string(epoch) + " step " +
                                                     std::to_string(steps) +
                                                     ": non-finite embeddings");
        }
        const Tensor logits = model.Logits(fused);
        const MetricBatch metric{fused.Reshaped({batch.size(), per_speaker, fused.dim(1)})};
        const CombinedLossOutput loss =
            CombinedLoss(logits, batch_labels, metric, model.proto_scale(),
                         model.proto_bias(), cfg.loss_weights);
        if (!std::isfinite(loss.value)) {
          throw Error(ErrorCode::kNonFiniteLoss,
                      "epoch " + std::to_string(epoch) + " step " +
                          std::to_string(steps) + ": loss " +
                          std::to_string(loss.value) + " (softmax " +
                          std::to_string(loss.softmax_value) + ", prototypical " +
                          std::to_string(loss.prototypical_value) + ")");
        }

        Tensor grad_fused = model.LogitsBackward(fused, loss.logits_grad);
        for (size_t i = 0; i < grad_fused.size(); ++i) {
          grad_fused[i] += loss.embeddings_grad[i];
        }
        model.BackwardBatch(grad_fused);
        model.parameters().Get(kProtoScale).grad[0] += loss.scale_grad;
        model.parameters().Get(kProtoBias).grad[0] += loss.bias_grad;
        AdamStep(model.parameters(), adam, lr);
        model.ClampProtoScale();

        loss_sum += loss.value;
        ++steps;
      }
    }

    EpochRecord record{epoch, loss_sum / static_cast<double>(steps), std::nullopt};
    const bool validate_now = hooks.validate && (epoch + 1) % cfg.val_interval == 0;
    if (validate_now) {
      record.val_eer = hooks.validate(model);
      val_history.push_back(*record.val_eer);
    }
    curve.records.push_back(record);
    if (hooks.on_epoch) hooks.on_epoch(record, model);
    if (validate_now && EarlyStop(val_history, cfg.patience)) break;
  }
  return curve;
}

std::string SerializeCheckpoint(const MultiStreamModel& model) {
  internal::ByteWriter w;
  w.PutBytes(kCheckpointMagic);
  w.PutU32(kCheckpointVersion);
  w.PutU32(static_cast<uint32_t>(model.num_streams()));
  std::vector<bool> written(model.parameters().size(), false);
  for (const auto& stream : model.streams()) {
    w.PutF64(stream.f_low_hz);
    w.PutF64(stream.f_high_hz);
    const std::string prefix = stream.name + "/";
    uint32_t count = 0;
    for (const auto& e : model.parameters()) count += e.name.starts_with(prefix);
    w.PutU32(count);
    size_t idx = 0;
    for (const auto& e : model.parameters()) {
      if (e.name.starts_with(prefix)) {
        PutTensor(w, e.name, e.param->value);
        written[idx] = true;
      }
      ++idx;
    }
  }
  w.PutU32(static_cast<uint32_t>(std::count(written.begin(), written.end(), false)));
  size_t idx = 0;
  for (const auto& e : model.parameters()) {
    if (!written[idx++]) PutTensor(w, e.name, e.param->value);
  }
  const uint32_t crc = Crc32(w.bytes());
  w.PutU32(crc);
  return w.bytes();
}

void SaveCheckpoint(const MultiStreamModel& model, const std::filesystem::path& path) {
  internal::WriteFileAtomically(path, SerializeCheckpoint(model));
}

MultiStreamModel LoadCheckpoint(const std::filesystem::path& path) {
  const std::vector<uint8_t> bytes = internal::ReadFileBytes(path);
  try {
    return ParseCheckpoint(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

MultiStreamModel ParseCheckpoint(std::span<const uint8_t> bytes) {
  internal::ByteReader r(bytes);
  if (bytes.size() < 4) throw Error(ErrorCode::kTruncatedFile, "checkpoint too short");
  if (r.GetString(4) != kCheckpointMagic) {
    throw Error(ErrorCode::kBadMagic, "not an MSSV checkpoint");
  }
  const uint32_t version = r.GetU32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                "checkpoint version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }

  MultiStreamModel model;
  const uint32_t stream_count = r.GetU32();
  if (stream_count == 0 || stream_count > 64) {
    throw Error(ErrorCode::kMalformedContainer,
                "implausible stream count " + std::to_string(stream_count));
  }
  for (uint32_t s = 0; s < stream_count; ++s) {
    StreamConfig stream;
    stream.f_low_hz = r.GetF64();
    stream.f_high_hz = r.GetF64();
    const uint32_t count = r.GetU32();
    for (uint32_t t = 0; t < count; ++t) {
      auto [name, tensor] = GetTensor(r);
      const size_t slash = name.find('/');
      if (slash == std::string::npos || slash == 0) {
        throw Error(ErrorCode::kMalformedContainer, "stream tensor without prefix: " + name);
      }
      const std::string prefix = name.substr(0, slash);
      if (stream.name.empty()) {
        stream.name = prefix;
      } else if (stream.name != prefix) {
        throw Error(ErrorCode::kMalformedContainer,
                    "tensor " + name + " inside stream " + stream.name);
      }
      model.params_.Add(name, std::move(tensor));
    }
    if (stream.name.empty()) {
      throw Error(ErrorCode::kMalformedContainer, "stream " + std::to_string(s) + " has no tensors");
    }
    model.streams_.push_back(stream);
  }
  const uint32_t shared = r.GetU32();
  for (uint32_t t = 0; t < shared; ++t) {
    auto [name, tensor] = GetTensor(r);
    model.params_.Add(name, std::move(tensor));
  }
  const size_t body_end = r.position();
  const uint32_t stored_crc = r.GetU32();
  if (r.remaining() != 0) {
    throw Error(ErrorCode::kMalformedContainer,
                std::to_string(r.remaining()) + " trailing bytes after checksum");
  }
  const uint32_t actual_crc = Crc32(std::string_view(
      reinterpret_cast<const char*>(bytes.data()), body_end));
  if (stored_crc != actual_crc) {
    throw Error(ErrorCode::kChecksumMismatch, "checkpoint CRC32 does not match");
  }

  ValidateStreams(model.streams_);
  for (const char* name : {kClassWeights, kProtoScale, kProtoBias}) {
    if (!model.params_.Contains(name)) {
      throw Error(ErrorCode::kMalformedContainer, std::string("missing tensor ") + name);
    }
  }

  const std::string first = model.streams_.front().name + "/";
  auto dims_of = [&](const std::string& suffix) -> const Dims& {
    if (!model.params_.Contains(first + suffix)) {
      throw Error(ErrorCode::kMalformedContainer, "missing tensor " + first + suffix);
    }
    return model.params_.Get(first + suffix).value.dims();
  };
  EncoderConfig enc;
  enc.conv1_channels = dims_of("conv1.weight").at(0);
  enc.kernel = dims_of("conv1.weight").at(2);
  enc.conv2_channels = dims_of("conv2.weight").at(0);
  enc.frame_dim = dims_of("frame.weight").at(1);
  enc.embedding_dim = dims_of("embed.weight").at(1);
  model.encoder_config_ = enc;

  for (const auto& stream : model.streams_) {
    const FrontendConfig fe = StreamFrontend(stream);
    const auto specs = EncoderSpecs(enc, static_cast<size_t>(fe.n_mels));
    for (const auto& spec : specs) {
      const std::string name = stream.name + "/" + spec.suffix;
      if (!model.params_.Contains(name) || model.params_.Get(name).value.dims() != spec.dims) {
        throw Error(ErrorCode::kMalformedContainer,
                    "tensor " + name + " missing or not " + DimsToString(spec.dims));
      }
    }
    if (model.EncoderShapes(model.banks_.size()).size() != specs.size()) {
      throw Error(ErrorCode::kMalformedContainer, "unexpected tensors in stream " + stream.name);
    }
    model.banks_.push_back(BuildFilterbank(fe, kPipelineSampleRate));
    model.encoders_.push_back(BuildEncoder(model.params_, stream.name));
  }
  const Dims& head = model.params_.Get(kClassWeights).value.dims();
  if (head.size() != 2 || head[1] != enc.embedding_dim || head[0] < 2) {
    throw Error(ErrorCode::kMalformedContainer, "class weights must be [C>=2, D]");
  }
  return model;
}

}  // namespace mssv
