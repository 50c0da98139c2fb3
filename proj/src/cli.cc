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

#include "mssv/cli.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "binary_io.h"
#include "json.hpp"
#include "mssv/error.h"

namespace mssv::cli {
namespace {

using nlohmann::json;

// Raised for problems in arguments or configuration; maps to kExitUsage.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string ReadText(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename T>
T Get(const json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "config key " + key + " has the wrong type");
  }
}

size_t GetCount(const json& value, const std::string& key) {
  const auto v = Get<long long>(value, key);
  if (v < 0) throw Error(ErrorCode::kInvalidArgument, "config key " + key + " must be >= 0");
  return static_cast<size_t>(v);
}

std::string StreamsToString(const std::vector<StreamConfig>& streams) {
  std::string s;
  for (const auto& st : streams) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s%s[%g,%g]", s.empty() ? "" : ",", st.name.c_str(),
                  st.f_low_hz, st.f_high_hz);
    s += buf;
  }
  return s;
}

std::string FileSafe(const std::string& path) {
  std::filesystem::path p(path);
  p.replace_extension();
  std::string s = p.generic_string();
  for (char& c : s) {
    if (c == '/' || c == '\\' || c == ':') c = '_';
  }
  while (!s.empty() && (s.front() == '.' || s.front() == '_')) s.erase(s.begin());
  return s;
}

RunConfig ResolveConfig(const std::string& config_path, const std::string& profile,
                        const std::optional<uint64_t>& seed) {
  RunConfig cfg = ProfileDefaults(profile);
  if (!config_path.empty()) cfg = LoadRunConfig(config_path, cfg);
  if (seed) cfg.train.seed = *seed;
  ValidateRunConfig(cfg);
  return cfg;
}

void RequireFile(const std::string& path, const std::string& what) {
  if (!std::filesystem::is_regular_file(path)) {
    throw UsageError(what + " not found: " + path + "\nRun with --help for usage.");
  }
}

int Featurize(const RunConfig& cfg, const std::string& manifest_path,
              const std::filesystem::path& out_dir, bool force, std::ostream& out) {
  RequireFile(manifest_path, "manifest");
  const Manifest manifest = LoadManifest(manifest_path);
  const auto& streams = cfg.train.streams;

  std::vector<std::pair<size_t, std::filesystem::path>> targets;
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    for (const auto& s : streams) {
      targets.emplace_back(
          i, out_dir / (FileSafe(manifest.entries[i].path) + "." + s.name + ".mfbe"));
    }
  }
  std::vector<std::string> conflicts;
  for (const auto& [i, path] : targets) {
    if (std::filesystem::exists(path)) conflicts.push_back(path.string());
  }
  if (!conflicts.empty() && !force) {
    std::string msg = "refusing to overwrite " + std::to_string(conflicts.size()) +
                      " existing feature file(s) without --force:";
    for (const auto& c : conflicts) msg += "\n  " + c;
    throw Error(ErrorCode::kIoError, msg);
  }

  std::vector<FilterBank> banks;
  for (const auto& s : streams) banks.push_back(BuildFilterbank(StreamFrontend(s), kPipelineSampleRate));
  std::filesystem::create_directories(out_dir);
  size_t written = 0;
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    const Waveform w = ReadWav(manifest.Resolve(manifest.entries[i].path));
    ValidateWaveform(w);
    const FrontendConfig base = StreamFrontend(streams.front());
    const RowMatrix power = PowerSpectrum(FrameSignal(w, base), base.n_fft);
    for (size_t s = 0; s < streams.size(); ++s) {
      const FeatureMatrix f = LogMfbe(power, banks[s], StreamFrontend(streams[s]));
      WriteFeatureDump(targets[i * streams.size() + s].second, f.frames);
      ++written;
    }
  }
  out << "wrote " << written << " feature files to " << out_dir.string() << "\n";
  return kExitOk;
}

int TrainCommand(const RunConfig& cfg, const std::string& manifest_path,
                 const std::filesystem::path& checkpoint, std::string curve_path,
                 const std::string& val_trials_path, bool dry_run, std::ostream& out,
                 std::ostream& err) {
  if (dry_run) {
    out << DescribeConfig(cfg);
    return kExitOk;
  }
  RequireFile(manifest_path, "manifest");
  if (!val_trials_path.empty()) RequireFile(val_trials_path, "validation trial list");
  const Manifest manifest = LoadManifest(manifest_path);
  const size_t classes = manifest.SpeakerIds().size();
  if (classes < 2) {
    throw UsageError("manifest needs at least 2 speakers, has " + std::to_string(classes));
  }
  std::optional<TrialList> val_trials;
  if (!val_trials_path.empty()) val_trials = LoadTrialList(val_trials_path);
  if (curve_path.empty()) {
    curve_path = (checkpoint.parent_path() / "curve.csv").string();
  }

  out << DescribeConfig(cfg);
  const TrainConfig& tc = cfg.train;
  Rng rng(tc.seed);
  MultiStreamModel model = MultiStreamModel::Build(tc.streams, tc.encoder, classes, rng,
                                                   tc.proto_scale_init, tc.proto_bias_init);
  if (!checkpoint.parent_path().empty()) {
    std::filesystem::create_directories(checkpoint.parent_path());
  }
  SaveCheckpoint(model, checkpoint);

  LearningCurve progress;
  TrainHooks hooks;
  if (val_trials) {
    hooks.validate = [&](const MultiStreamModel& m) {
      return EvaluateTrials(m, *val_trials, cfg.eval).eer;
    };
  }
  hooks.on_epoch = [&](const EpochRecord& r, const MultiStreamModel& m) {
    progress.records.push_back(r);
    SaveCheckpoint(m, checkpoint);
    internal::WriteFileAtomically(curve_path, FormatCurveCsv(progress));
    char line[128];
    std::snprintf(line, sizeof(line), "epoch %d loss %.6f", r.epoch, r.mean_loss);
    out << line;
    if (r.val_eer) {
      std::snprintf(line, sizeof(line), " val_eer %.2f%%", 100.0 * *r.val_eer);
      out << line;
    }
    out << "\n";
  };
  try {
    Train(model, manifest, tc, rng, hooks);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kNonFiniteLoss) {
      err << e.what() << "\nlast good checkpoint kept at " << checkpoint.string() << "\n";
      return kExitRuntime;
    }
    throw;
  }
  out << "checkpoint " << checkpoint.string() << "\ncurve " << curve_path << "\n";
  return kExitOk;
}

int EvalCommand(const RunConfig& cfg, const std::vector<std::string>& checkpoints,
                const std::string& trials_path, const std::string& prefix, std::ostream& out) {
  for (const auto& c : checkpoints) RequireFile(c, "checkpoint");
  RequireFile(trials_path, "trial list");
  const TrialList trials = LoadTrialList(trials_path);
  std::vector<EvaluationResult> results;
  std::set<std::string> names;
  for (const auto& path : checkpoints) {
    const MultiStreamModel model = LoadCheckpoint(path);
    EvaluationResult r = EvaluateTrials(model, trials, cfg.eval);
    std::string name = std::filesystem::path(path).stem().string();
    for (int k = 2; !names.insert(name).second; ++k) {
      name = std::filesystem::path(path).stem().string() + "_" + std::to_string(k);
    }
    r.system = name;
    results.push_back(std::move(r));
  }
  const std::filesystem::path parent = std::filesystem::path(prefix).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  EmitReport(results, prefix);
  out << FormatMetrics(results);
  return kExitOk;
}

int DetPlotCommand(const std::vector<std::string>& csvs, std::vector<std::string> names,
                   const std::string& out_path, std::ostream& out) {
  if (!names.empty() && names.size() != csvs.size()) {
    throw UsageError("--name must be given once per --csv or not at all");
  }
  std::vector<std::pair<std::string, DetCurve>> curves;
  for (size_t i = 0; i < csvs.size(); ++i) {
    RequireFile(csvs[i], "DET csv");
    std::string name = names.empty() ? std::filesystem::path(csvs[i]).filename().string()
                                     : names[i];
    if (names.empty() && name.ends_with(".det.csv")) name.resize(name.size() - 8);
    curves.emplace_back(name, ParseDetCsv(ReadText(csvs[i])));
  }
  internal::WriteFileAtomically(out_path, RenderDetSvg(curves));
  out << "wrote " << out_path << " with " << curves.size() << " curve(s)\n";
  return kExitOk;
}

}  // namespace

RunConfig ProfileDefaults(std::string_view profile) {
  RunConfig cfg;
  cfg.profile = std::string(profile);
  if (profile == "desk") {
    cfg.train = DeskTrainConfig();
  } else if (profile == "paper") {
    cfg.train = PaperTrainConfig();
  } else {
    throw Error(ErrorCode::kInvalidArgument,
                "unknown profile " + std::string(profile) + " (expected desk or paper)");
  }
  return cfg;
}

RunConfig ParseRunConfig(std::string_view json_text, RunConfig base) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::kParseError, "config must be a JSON object");

  TrainConfig& t = base.train;
  for (const auto& [key, value] : doc.items()) {
    if (key == "streams") {
      if (!value.is_array()) throw Error(ErrorCode::kInvalidArgument, "streams must be an array");
      t.streams.clear();
      for (const auto& s : value) {
        if (!s.is_object() || !s.contains("name") || !s.contains("f_low_hz") ||
            !s.contains("f_high_hz")) {
          throw Error(ErrorCode::kInvalidArgument,
                      "each stream needs name, f_low_hz and f_high_hz");
        }
        t.streams.push_back({Get<std::string>(s["name"], "streams[].name"),
                             Get<double>(s["f_low_hz"], "streams[].f_low_hz"),
                             Get<double>(s["f_high_hz"], "streams[].f_high_hz")});
      }
    } else if (key == "embedding_dim") {
      t.encoder.embedding_dim = GetCount(value, key);
    } else if (key == "conv1_channels") {
      t.encoder.conv1_channels = GetCount(value, key);
    } else if (key == "conv2_channels") {
      t.encoder.conv2_channels = GetCount(value, key);
    } else if (key == "frame_dim") {
      t.encoder.frame_dim = GetCount(value, key);
    } else if (key == "epochs") {
      t.epochs = Get<int>(value, key);
    } else if (key == "batch_speakers") {
      t.batch_speakers = GetCount(value, key);
    } else if (key == "utts_per_speaker") {
      t.utts_per_speaker = GetCount(value, key);
    } else if (key == "segment_seconds") {
      t.segment_seconds = Get<double>(value, key);
    } else if (key == "lr_initial") {
      t.schedule.initial = Get<double>(value, key);
    } else if (key == "lr_decay") {
      t.schedule.decay = Get<double>(value, key);
    } else if (key == "lr_period") {
      t.schedule.period_epochs = Get<int>(value, key);
    } else if (key == "weight_decay") {
      t.adam.weight_decay = Get<double>(value, key);
    } else if (key == "seed") {
      t.seed = Get<uint64_t>(value, key);
    } else if (key == "val_interval") {
      t.val_interval = Get<int>(value, key);
    } else if (key == "patience") {
      t.patience = Get<int>(value, key);
    } else if (key == "proto_scale_init") {
      t.proto_scale_init = Get<double>(value, key);
    } else if (key == "proto_bias_init") {
      t.proto_bias_init = Get<double>(value, key);
    } else if (key == "softmax_weight") {
      t.loss_weights.softmax = Get<double>(value, key);
    } else if (key == "prototypical_weight") {
      t.loss_weights.prototypical = Get<double>(value, key);
    } else if (key == "eval_seconds") {
      base.eval.eval_seconds = Get<double>(value, key);
    } else if (key == "p_target") {
      base.eval.dcf.p_target = Get<double>(value, key);
    } else {
      throw Error(ErrorCode::kInvalidArgument, "unknown config key " + key);
    }
  }
  return base;
}

RunConfig LoadRunConfig(const std::filesystem::path& path, RunConfig base) {
  return ParseRunConfig(ReadText(path), std::move(base));
}

void ValidateRunConfig(const RunConfig& cfg) {
  ValidateTrainConfig(cfg.train);
  if (!(cfg.eval.eval_seconds > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "eval_seconds must be > 0");
  }
  NormalizedDcf(0.0, 0.0, cfg.eval.dcf);
}

std::string DescribeConfig(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  std::ostringstream s;
  s << "profile=" << cfg.profile << "\n"
    << "streams=" << StreamsToString(t.streams) << "\n"
    << "embedding_dim=" << t.encoder.embedding_dim << "\n"
    << "epochs=" << t.epochs << "\n"
    << "lr_initial=" << t.schedule.initial << "\n"
    << "lr_decay=" << t.schedule.decay << " every " << t.schedule.period_epochs
    << " epochs\n"
    << "batch=" << t.batch_speakers * t.utts_per_speaker << " (" << t.batch_speakers
    << " speakers x " << t.utts_per_speaker << " utterances)\n"
    << "segment_seconds=" << t.segment_seconds << "\n"
    << "weight_decay=" << t.adam.weight_decay << "\n"
    << "seed=" << t.seed << "\n"
    << "val_interval=" << t.val_interval << "\n"
    << "patience=" << t.patience << "\n"
    << "eval_seconds=" << cfg.eval.eval_seconds << "\n"
    << "p_target=" << cfg.eval.dcf.p_target << "\n";
  return s.str();
}

std::string FormatCurveCsv(const LearningCurve& curve) {
  std::string text = "epoch,loss,val_eer\n";
  char buf[96];
  for (const auto& r : curve.records) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,", r.epoch, r.mean_loss);
    text += buf;
    if (r.val_eer) {
      std::snprintf(buf, sizeof(buf), "%.17g", *r.val_eer);
      text += buf;
    }
    text += "\n";
  }
  return text;
}

SynthCorpus GenerateSynthCorpus(const SynthOptions& o, const std::filesystem::path& out_dir) {
  if (o.speakers < 2) throw Error(ErrorCode::kInvalidArgument, "need at least 2 speakers");
  if (o.heldout_per_speaker < 2 || o.heldout_per_speaker >= o.utts_per_speaker) {
    throw Error(ErrorCode::kInvalidArgument,
                "held-out utterances per speaker must be >= 2 and leave at least one "
                "for training");
  }
  if (!(o.seconds > 0.0)) throw Error(ErrorCode::kInvalidArgument, "seconds must be > 0");

  Rng rng(o.seed);
  std::filesystem::create_directories(out_dir / "wav");
  Manifest manifest;
  std::vector<std::vector<std::string>> heldout(o.speakers);
  SynthCorpus corpus;
  for (size_t s = 0; s < o.speakers; ++s) {
    char id[32];
    std::snprintf(id, sizeof(id), "spk%03zu", s);
    const SpeakerProfile profile = RandomProfile(id, rng);
    for (size_t u = 0; u < o.utts_per_speaker; ++u) {
      char name[64];
      std::snprintf(name, sizeof(name), "wav/%s_u%02zu.wav", id, u);
      const SpeakerProfile voice = JitterProfile(profile, o.f0_jitter, o.gain_jitter, rng);
      WriteWav(out_dir / name, SynthUtterance(voice, o.seconds, rng));
      ++corpus.num_wavs;
      if (u + o.heldout_per_speaker >= o.utts_per_speaker) {
        heldout[s].push_back(name);
      } else {
        manifest.entries.push_back({id, name});
      }
    }
  }

  TrialList trials;
  for (const auto& utts : heldout) {
    for (size_t i = 0; i < utts.size(); ++i) {
      for (size_t j = i + 1; j < utts.size(); ++j) trials.trials.push_back({true, utts[i], utts[j]});
    }
  }
  const size_t targets = trials.trials.size();
  std::set<std::pair<std::string, std::string>> used;
  std::uniform_int_distribution<size_t> pick_speaker(0, o.speakers - 1);
  std::uniform_int_distribution<size_t> pick_utt(0, o.heldout_per_speaker - 1);
  while (trials.trials.size() < 2 * targets) {
    const size_t a = pick_speaker(rng);
    const size_t b = pick_speaker(rng);
    if (a == b) continue;
    const std::string& ea = heldout[a][pick_utt(rng)];
    const std::string& eb = heldout[b][pick_utt(rng)];
    if (!used.insert(std::minmax(ea, eb)).second) continue;
    trials.trials.push_back({false, ea, eb});
  }
  std::shuffle(trials.trials.begin(), trials.trials.end(), rng);

  corpus.manifest = out_dir / "train.lst";
  corpus.trials = out_dir / "trials.txt";
  SaveManifest(corpus.manifest, manifest);
  SaveTrialList(corpus.trials, trials);
  return corpus;
}

int Run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-stream speaker verification toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string profile = "desk";
  std::optional<uint64_t> seed;
  bool force = false;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--profile", profile, "Base settings: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--seed", seed, "Random seed (overrides the config file)");
  app.add_flag("--force", force, "Overwrite existing outputs");

  SynthOptions synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synthdata", "Generate a synthetic speaker corpus");
  synth_cmd->add_option("--speakers", synth.speakers, "Number of speakers")->capture_default_str();
  synth_cmd->add_option("--utts", synth.utts_per_speaker, "Utterances per speaker")
      ->capture_default_str();
  synth_cmd->add_option("--heldout", synth.heldout_per_speaker,
                        "Held-out utterances per speaker for trials")
      ->capture_default_str();
  synth_cmd->add_option("--seconds", synth.seconds, "Utterance length")->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();

  std::string manifest_path;
  std::string feat_out;
  auto* feat_cmd = app.add_subcommand("featurize", "Dump log MFBE features per stream");
  feat_cmd->add_option("--manifest", manifest_path, "Utterance manifest")->required();
  feat_cmd->add_option("--out", feat_out, "Output directory")->required();

  std::string checkpoint_out;
  std::string curve_path;
  std::string val_trials;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  bool dry_run = false;
  train_cmd->add_option("--manifest", manifest_path, "Training manifest");
  train_cmd->add_option("--out", checkpoint_out, "Checkpoint path");
  train_cmd->add_option("--curve", curve_path, "Learning-curve CSV (default: curve.csv next to the checkpoint)");
  train_cmd->add_option("--val-trials", val_trials, "Trial list for validation EER");
  train_cmd->add_flag("--dry-run", dry_run, "Print the resolved configuration and exit");

  std::vector<std::string> checkpoints;
  std::string trials_path;
  std::string eval_prefix;
  std::optional<double> p_target;
  std::optional<double> eval_seconds;
  auto* eval_cmd = app.add_subcommand("eval", "Score a trial list and write reports");
  eval_cmd->add_option("--checkpoint", checkpoints, "Checkpoint (repeat to compare systems)")
      ->required();
  eval_cmd->add_option("--trials", trials_path, "Trial list")->required();
  eval_cmd->add_option("--out", eval_prefix, "Report path prefix")->required();
  eval_cmd->add_option("--p-target", p_target, "Target prior for minDCF (default 0.05)");
  eval_cmd->add_option("--eval-seconds", eval_seconds, "Evaluation crop length (default 4)");

  std::vector<std::string> csvs;
  std::vector<std::string> names;
  std::string svg_out;
  auto* det_cmd = app.add_subcommand("det-plot", "Render DET curves from det.csv files");
  det_cmd->add_option("--csv", csvs, "DET csv (repeatable)")->required();
  det_cmd->add_option("--name", names, "Legend name per csv");
  det_cmd->add_option("--out", svg_out, "SVG output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kExitOk;
    err << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitUsage;
  }

  RunConfig cfg;
  try {
    cfg = ResolveConfig(config_path, profile, seed);
    if (p_target) cfg.eval.dcf.p_target = *p_target;
    if (eval_seconds) cfg.eval.eval_seconds = *eval_seconds;
    ValidateRunConfig(cfg);
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (synth_cmd->parsed()) {
      synth.seed = cfg.train.seed;
      const SynthCorpus c = GenerateSynthCorpus(synth, synth_out);
      out << "wrote " << c.num_wavs << " wav files, manifest " << c.manifest.string()
          << ", trials " << c.trials.string() << "\n";
      return kExitOk;
    }
    if (feat_cmd->parsed()) return Featurize(cfg, manifest_path, feat_out, force, out);
    if (train_cmd->parsed()) {
      if (!dry_run && (manifest_path.empty() || checkpoint_out.empty())) {
        throw UsageError("train needs --manifest and --out\n" + train_cmd->help());
      }
      return TrainCommand(cfg, manifest_path, checkpoint_out, curve_path, val_trials, dry_run,
                          out, err);
    }
    if (eval_cmd->parsed()) return EvalCommand(cfg, checkpoints, trials_path, eval_prefix, out);
    if (det_cmd->parsed()) return DetPlotCommand(csvs, names, svg_out, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.push_back("mssv");
  for (const auto& a : args) argv.push_back(a.c_str());
  return Run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace mssv::cli
