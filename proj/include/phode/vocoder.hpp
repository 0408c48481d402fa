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

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <string_view>

#include "phode/audio.hpp"
#include "phode/spectrogram.hpp"

namespace phode {

inline constexpr int kElectrodes = 16;

enum class Compression { log, power };

/// Analysis bands of a CIS-style sound processor.
///
/// Each channel is analysed by quadrature demodulation at the band's geometric
/// centre with a Hann window whose -6 dB half-width equals half the band
/// width, so a tone at one band's centre falls near the first spectral null
/// of its neighbours. The magnitude is low-passed at `envelope_cutoff_hz` and
/// compressed: `log` maps the top `dynamic_range_db` of the utterance onto
/// [0, 1]; `power` raises the max-normalized envelope to `power_exponent`.
struct FilterbankSpec {
  std::array<double, kElectrodes + 1> channel_edges{};
  double envelope_cutoff_hz = 200.0;
  Compression compression = Compression::log;
  double power_exponent = 0.3;
  double dynamic_range_db = 40.0;

  /// 16 log-spaced bands between `lo_hz` and `hi_hz`.
  static FilterbankSpec log_spaced(double lo_hz = 250.0, double hi_hz = 8000.0);

  double lower_hz(int channel) const { return channel_edges[channel]; }
  double upper_hz(int channel) const { return channel_edges[channel + 1]; }
  double center_hz(int channel) const;
  /// Throws std::invalid_argument unless edges are strictly ascending.
  void validate() const;
};

/// Channels x pulse frames of normalized stimulation amplitude in [0, 1].
struct Electrodogram {
  Eigen::MatrixXd pulses;
  double pulse_rate = 1000.0;
  int sample_rate = 16000;

  Eigen::Index num_frames() const { return pulses.cols(); }
  int samples_per_pulse() const;
};

/// Exponential current spread between electrodes along the cochlea.
struct SpreadModel {
  Eigen::VectorXd electrode_positions_mm;
  double decay_per_mm = 1.0;

  /// Evenly spaced electrodes.
  static SpreadModel uniform(double pitch_mm = 1.1, double decay_per_mm = 1.0);
  /// Symmetric weights exp(-decay * |x_i - x_j|).
  Eigen::MatrixXd weights() const;
  void validate() const;
};

struct VocoderConfig {
  FilterbankSpec filterbank = FilterbankSpec::log_spaced();
  double pulse_rate = 1000.0;
  SpreadModel spread = SpreadModel::uniform();
  bool apply_spread = true;
  std::uint64_t seed = 0;
};

/// Silent input yields an all-zero electrodogram.
Electrodogram encode(const Waveform& w, const FilterbankSpec& fb, double pulse_rate = 1000.0);

/// Mixes channels with SpreadModel::weights, then rescales so the global
/// maximum is 1.
Electrodogram apply_spread(const Electrodogram& e, const SpreadModel& s);

/// Noise-band vocoder: each channel's expanded envelope modulates Gaussian
/// noise band-limited to the channel's band. Carriers are seeded from
/// (seed, sentence_id, channel). Output length is frames * samples_per_pulse.
Waveform resynthesize(const Electrodogram& e, const FilterbankSpec& fb,
                      std::uint64_t seed = 0, std::string_view sentence_id = {});

/// encode -> apply_spread -> resynthesize.
Waveform ci_waveform(const Waveform& w, const VocoderConfig& cfg = {},
                     std::string_view sentence_id = {});

/// ci_waveform followed by compute_spectrogram.
Spectrogram ci_transform(const Waveform& w, const VocoderConfig& cfg = {},
                         std::string_view sentence_id = {});

/// Rows of `channel,frame,amplitude`.
void write_electrodogram_csv(const Electrodogram& e, const std::filesystem::path& path);

/// Little-endian binary: magic "PHODEEG1", u32 channels, u32 frames,
/// f64 pulse rate, u32 sample rate, then channels*frames f32 row-major.
void write_electrodogram_binary(const Electrodogram& e, const std::filesystem::path& path);
Electrodogram read_electrodogram_binary(const std::filesystem::path& path);

}  // namespace phode
