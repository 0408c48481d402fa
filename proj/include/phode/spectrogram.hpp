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

#include "phode/audio.hpp"

namespace phode {

inline constexpr int kSpectrogramChannels = 64;

/// Analysis parameters of the model input. The hop is fixed at 10 ms because
/// one model time step is 10 ms throughout the toolkit.
struct SpectrogramConfig {
  int sample_rate = 16000;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int fft_size = 1024;
  int num_channels = kSpectrogramChannels;
  double min_hz = 50.0;
  double max_hz = 8000.0;
  double log_floor = 1e-10;

  int window_samples() const;
  int hop_samples() const;
};

/// T frames x channels of natural-log mel power.
struct Spectrogram {
  Eigen::MatrixXd frames;
  double hop_ms = 10.0;

  Eigen::Index num_frames() const { return frames.rows(); }
  Eigen::Index num_channels() const { return frames.cols(); }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular mel filters over the one-sided FFT bins.
class MelFilterbank {
 public:
  explicit MelFilterbank(const SpectrogramConfig& cfg = {});

  /// channels x (fft_size/2 + 1)
  const Eigen::MatrixXd& weights() const { return weights_; }
  double center_hz(int channel) const { return centers_[channel]; }
  double lower_hz(int channel) const { return edges_[channel]; }
  double upper_hz(int channel) const { return edges_[channel + 2]; }

 private:
  Eigen::MatrixXd weights_;
  Eigen::VectorXd centers_;
  Eigen::VectorXd edges_;
};

/// floor((N - window) / hop) + 1, or 0 when N < window.
Eigen::Index expected_frames(Eigen::Index num_samples, const SpectrogramConfig& cfg = {});

/// Throws AudioError when the rate differs from cfg.sample_rate (resample
/// first) or the waveform is shorter than one analysis window.
Spectrogram compute_spectrogram(const Waveform& w, const SpectrogramConfig& cfg = {});

}  // namespace phode
