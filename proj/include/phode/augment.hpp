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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "phode/audio.hpp"

namespace phode {

enum class NoiseLevel { quiet, low, mid, high };

std::string_view to_string(NoiseLevel level);
/// Throws std::invalid_argument on an unknown name.
NoiseLevel parse_noise_level(std::string_view name);

struct ParamRange {
  double lo = 0.0;
  double hi = 0.0;

  /// Maps u in [0,1) onto the range.
  double at(double u) const { return lo + (hi - lo) * u; }
};

/// Per-level effect ranges. Frequencies are specified for 16 kHz audio and are
/// scaled proportionally for other sample rates. Band-pass and band-stop
/// widths are in octaves.
struct AugmentationConfig {
  NoiseLevel level = NoiseLevel::quiet;
  ParamRange background_snr_db;
  ParamRange pitch_shift_semitones;
  ParamRange speed_rate{1, 1};
  ParamRange tempo_rate{1, 1};
  ParamRange chorus_n;
  ParamRange echo_n;
  ParamRange reverb_percent;
  ParamRange lowpass_hz;
  ParamRange highpass_hz;
  ParamRange bandpass_hz;
  ParamRange bandpass_width_oct;
  ParamRange bandstop_hz;
  ParamRange bandstop_width_oct;
  /// Independent per-sentence application probability of every effect.
  double effect_probability = 0.5;
  std::uint64_t seed = 0;
  /// Optional masker; white noise when absent. Looped to the input length.
  std::optional<Waveform> masker;

  /// Default ranges for each level; quiet disables every effect.
  static AugmentationConfig for_level(NoiseLevel level, std::uint64_t seed = 0);

  bool enabled() const { return level != NoiseLevel::quiet; }
  /// Throws std::invalid_argument if any range has lo > hi.
  void validate() const;
};

/// Reads the level's entry from a JSON file keyed by level name
/// ("low", "mid", "high"). Missing fields keep the built-in defaults.
AugmentationConfig load_augmentation_config(const std::filesystem::path& path,
                                            NoiseLevel level, std::uint64_t seed = 0);
/// All three noisy levels as JSON, in the same layout load_augmentation_config reads.
std::string default_augmentation_config_json();

enum class Effect {
  speed, tempo, pitch, lowpass, highpass, bandpass, bandstop, chorus, echo, reverb, background_noise
};
std::string_view to_string(Effect e);

struct AppliedEffect {
  Effect effect;
  double value;
  double value2 = 0.0;
};

struct AugmentResult {
  Waveform waveform;
  /// Output time = input time * time_scale (speed and tempo change length).
  double time_scale = 1.0;
  std::vector<AppliedEffect> applied;
};

/// Applies the level's effects in a fixed order, each independently with
/// cfg.effect_probability. Every draw is made whether or not the effect fires,
/// so one seed gives the same firing pattern and quantiles at every level.
/// The RNG stream is derived from (cfg.seed, sentence_id).
AugmentResult augment_detailed(const Waveform& w, const AugmentationConfig& cfg,
                               std::string_view sentence_id = {});

inline Waveform augment(const Waveform& w, const AugmentationConfig& cfg,
                        std::string_view sentence_id = {}) {
  return augment_detailed(w, cfg, sentence_id).waveform;
}

/// Individual effects, exposed for testing and reuse.
namespace effects {
Eigen::VectorXd add_noise_at_snr(const Eigen::Ref<const Eigen::VectorXd>& x, double snr_db,
                                 const Eigen::Ref<const Eigen::VectorXd>& masker);
/// Overlap-add time stretch (WSOLA) without pitch change; rate > 1 shortens.
Eigen::VectorXd time_stretch(const Eigen::Ref<const Eigen::VectorXd>& x, double rate,
                             int sample_rate);
Eigen::VectorXd pitch_shift(const Eigen::Ref<const Eigen::VectorXd>& x, double semitones,
                            int sample_rate);
Eigen::VectorXd chorus(const Eigen::Ref<const Eigen::VectorXd>& x, int voices, int sample_rate);
Eigen::VectorXd echo(const Eigen::Ref<const Eigen::VectorXd>& x, int taps, int sample_rate);
Eigen::VectorXd reverb(const Eigen::Ref<const Eigen::VectorXd>& x, double percent,
                       int sample_rate);
}  // namespace effects

}  // namespace phode
