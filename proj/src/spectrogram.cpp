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

#include "phode/spectrogram.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <unsupported/Eigen/FFT>
#include <vector>

namespace phode {

int SpectrogramConfig::window_samples() const {
  return static_cast<int>(std::lround(window_ms * sample_rate / 1000.0));
}

int SpectrogramConfig::hop_samples() const {
  return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(const SpectrogramConfig& cfg) {
  const int channels = cfg.num_channels;
  const int bins = cfg.fft_size / 2 + 1;
  const double lo = hz_to_mel(cfg.min_hz);
  const double hi = hz_to_mel(cfg.max_hz);
  edges_.resize(channels + 2);
  for (int i = 0; i < channels + 2; ++i)
    edges_[i] = mel_to_hz(lo + (hi - lo) * i / (channels + 1));
  centers_ = edges_.segment(1, channels);

  const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.fft_size;
  weights_ = Eigen::MatrixXd::Zero(channels, bins);
  for (int c = 0; c < channels; ++c) {
    const double left = edges_[c], mid = edges_[c + 1], right = edges_[c + 2];
    for (int b = 0; b < bins; ++b) {
      const double f = b * bin_hz;
      if (f > left && f < right)
        weights_(c, b) = f <= mid ? (f - left) / (mid - left) : (right - f) / (right - mid);
    }
    // A triangle narrower than the bin spacing still gets its nearest bin.
    if (weights_.row(c).sum() == 0.0)
      weights_(c, static_cast<int>(std::lround(mid / bin_hz))) = 1.0;
  }
}

Eigen::Index expected_frames(Eigen::Index num_samples, const SpectrogramConfig& cfg) {
  const int win = cfg.window_samples();
  if (num_samples < win) return 0;
  return (num_samples - win) / cfg.hop_samples() + 1;
}

Spectrogram compute_spectrogram(const Waveform& w, const SpectrogramConfig& cfg) {
  validate(w);
  if (w.sample_rate != cfg.sample_rate)
    throw AudioError("spectrogram expects " + std::to_string(cfg.sample_rate) +
                     " Hz audio, got " + std::to_string(w.sample_rate) +
                     " Hz; resample the input first");
  const int win = cfg.window_samples();
  const int hop = cfg.hop_samples();
  if (w.size() < win)
    throw AudioError("waveform shorter than one " + std::to_string(win) +
                     "-sample analysis window");

  const MelFilterbank filterbank(cfg);
  const Eigen::MatrixXd& bank = filterbank.weights();

  Eigen::VectorXd window(win);
  for (int n = 0; n < win; ++n)
    window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / win);

  const Eigen::Index frames = expected_frames(w.size(), cfg);
  const int bins = cfg.fft_size / 2 + 1;
  Spectrogram out;
  out.hop_ms = cfg.hop_ms;
  out.frames.resize(frames, cfg.num_channels);

  Eigen::FFT<double> fft;
  std::vector<double> buf(cfg.fft_size, 0.0);
  std::vector<std::complex<double>> spec;
  Eigen::VectorXd power(bins);
  for (Eigen::Index t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (int n = 0; n < win; ++n) buf[n] = w.samples[t * hop + n] * window[n];
    fft.fwd(spec, buf);
    for (int b = 0; b < bins; ++b) power[b] = std::norm(spec[b]);
    out.frames.row(t) =
        (bank * power).cwiseMax(cfg.log_floor).array().log().matrix().transpose();
  }
  return out;
}

}  // namespace phode
