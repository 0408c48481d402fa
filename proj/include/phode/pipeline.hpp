// Copyright 2026 The PhoDe Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "phode/alignment.hpp"
#include "phode/augment.hpp"
#include "phode/audio.hpp"
#include "phode/ctc.hpp"
#include "phode/dynamics.hpp"
#include "phode/model.hpp"
#include "phode/phoneme.hpp"
#include "phode/spectrogram.hpp"
#include "phode/vocoder.hpp"

namespace phode {

enum class Condition { nh, ci };
std::string_view to_string(Condition c);
/// Accepts "NH" or "CI" in any case.
Condition parse_condition(std::string_view s);

/// Segment times multiplied by `scale` (augmentation that changes duration).
SegmentedUtterance rescale_times(const SegmentedUtterance& u, double scale);

struct SentenceOptions {
  std::uint64_t seed = 0;
  VocoderConfig vocoder;
  /// Level ranges; the level and seed fields are overwritten per call.
  std::optional<std::string> augmentation_config_path;
  bool keep_traces = false;
};

struct SentenceResult {
  std::string sentence_id;
  Condition condition = Condition::nh;
  NoiseLevel noise = NoiseLevel::quiet;
  double time_scale = 1.0;
  /// Segmentation on the (possibly time-scaled) input.
  SegmentedUtterance target;
  Spectrogram input;
  PhonemePosterior posterior;
  std::vector<PredictionEvent> predictions;
  AlignedSentence alignment;
  std::vector<LayerActivationTrace> traces;
};

AugmentationConfig augmentation_for(NoiseLevel level, const SentenceOptions& opt);

/// Rounds every sample to float32, the precision of stored waveforms, so a
/// waveform read back from a stage artifact equals the in-memory one.
void quantize_float32(Waveform& w);

/// Waveform after augmentation at `noise` and, for CI, the vocoder, plus the
/// time scale applied by augmentation. Both steps are followed by
/// quantize_float32.
struct PreparedAudio {
  Waveform waveform;
  double time_scale = 1.0;
};
/// The augmentation half: quiet passes the input through unchanged.
PreparedAudio augment_audio(const Waveform& w, std::string_view sentence_id, NoiseLevel noise,
                            const SentenceOptions& opt);
/// The CI half: the vocoder seeded from opt.seed.
Waveform vocode_audio(const Waveform& w, std::string_view sentence_id, const SentenceOptions& opt);

PreparedAudio prepare_audio(const Waveform& w, std::string_view sentence_id, Condition condition,
                            NoiseLevel noise, const SentenceOptions& opt);

/// Augment, transform, forward, greedy decode, align, correct and exclude.
SentenceResult process_sentence(const Waveform& w, const SegmentedUtterance& u,
                                const ModelWeights& weights, Condition condition,
                                NoiseLevel noise, const SentenceOptions& opt);

inline constexpr std::string_view kVersion = "0.1.0";

/// Invalid configuration or arguments; the command line maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An upstream stage artifact is missing or was produced under another
/// configuration.
class StaleArtifactError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// One (condition, noise level) combination of the experiment grid.
struct Cell {
  Condition condition = Condition::nh;
  NoiseLevel noise = NoiseLevel::quiet;

  /// "NH_quiet", "CI_high", ...
  std::string name() const;
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct ExperimentConfig {
  std::filesystem::path manifest;
  std::filesystem::path weights;
  std::filesystem::path out_dir;
  std::vector<Condition> conditions{Condition::nh, Condition::ci};
  std::vector<NoiseLevel> noise_levels{NoiseLevel::quiet, NoiseLevel::low, NoiseLevel::mid,
                                       NoiseLevel::high};
  std::uint64_t seed = 0;
  int jobs = 1;
  std::optional<std::filesystem::path> augmentation_config;
  VocoderConfig vocoder;

  /// Human confusion matrices keyed by cell name ("CI_quiet"), condition
  /// ("CI") or "*"; the most specific key wins.
  std::map<std::string, std::filesystem::path> human;
  int shuffles = 1000;

  bool dynamics = true;
  /// Trace indices to analyze; empty selects every trace.
  std::vector<int> dynamics_layers;
  WindowConfig window;
  ExemplarConfig exemplars;
  double pca_threshold = 0.9;

  bool decode = true;
  DecodeConfig decoding;
  /// Frames per (cell, layer) given to the decoder, taken in sentence order.
  int decode_max_frames = 20000;

  std::vector<Cell> cells() const;
  /// Path to the human matrix for a cell, if any.
  std::optional<std::filesystem::path> human_for(const Cell& c) const;
  bool needs_activations() const { return dynamics || decode; }
};

/// JSON object with the keys manifest, weights, out, seed, jobs, conditions,
/// noise_levels, augmentation_config, vocoder, human, shuffles, dynamics and
/// decode. Relative paths resolve against `base_dir`. Unknown keys, wrong
/// types and invalid values throw ConfigError.
ExperimentConfig parse_experiment_config(std::string_view json_text,
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string experiment_config_json(const ExperimentConfig& cfg);

/// Hash over every field that can change a stage artifact up to and
/// including alignment, with the contents of the manifest, weight and
/// augmentation files. The output directory and job count are left out.
std::string pipeline_hash(const ExperimentConfig& cfg);
/// pipeline_hash plus the analysis settings.
std::string config_hash(const ExperimentConfig& cfg);

enum class SentenceStatus { processed, excluded, failed };
std::string_view to_string(SentenceStatus s);

struct LedgerEntry {
  std::string sentence_id;
  SentenceStatus status = SentenceStatus::processed;
  /// Exclusion reason or error message with the cell it arose in.
  std::string reason;
};

struct RunLedger {
  std::string config_hash;
  std::string version{kVersion};
  /// One entry per manifest sentence, sorted by id.
  std::vector<LedgerEntry> entries;

  int count(SentenceStatus s) const;
  std::string json() const;
};

/// Monolithic run: every sentence of every cell through augmentation,
/// transform, inference and alignment, then every report. Sentence errors
/// are recorded in the ledger and the run continues. Throws ConfigError for
/// an invalid config or unreadable weights or manifest, before any output.
RunLedger run(const ExperimentConfig& cfg);

/// Stages. Each reads the artifacts of the stage before it under
/// cfg.out_dir and refuses (StaleArtifactError) when they are missing or
/// carry a different pipeline hash.
void stage_augment(const ExperimentConfig& cfg);
void stage_vocode(const ExperimentConfig& cfg);
void stage_infer(const ExperimentConfig& cfg);
RunLedger stage_align(const ExperimentConfig& cfg);
void stage_confuse(const ExperimentConfig& cfg);
void stage_errors(const ExperimentConfig& cfg);
void stage_rt(const ExperimentConfig& cfg);
void stage_dynamics(const ExperimentConfig& cfg);
void stage_decode(const ExperimentConfig& cfg);

/// Single-file vocoding: writes electrodogram.csv and ci.wav into `out_dir`.
void vocode_file(const std::filesystem::path& wav, const std::filesystem::path& out_dir,
                 const VocoderConfig& cfg, std::string_view sentence_id = {});

enum class LogLevel { error, warn, info, debug };
/// Level from PHODE_LOG (error, warn, info, debug); warn when unset.
LogLevel log_level();
void log(LogLevel level, const std::string& message);

}  // namespace phode
