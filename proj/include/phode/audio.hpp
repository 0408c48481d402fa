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
#include <filesystem>
#include <stdexcept>

namespace phode {

class AudioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mono waveform; samples nominally in [-1, 1].
struct Waveform {
  Eigen::VectorXd samples;
  int sample_rate = 16000;

  Eigen::Index size() const { return samples.size(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Throws AudioError on non-positive rate or non-finite samples.
void validate(const Waveform& w);

enum class WavEncoding { pcm16, float32 };

/// Reads mono 16-bit PCM or 32-bit float WAV.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const Waveform& w, const std::filesystem::path& path,
               WavEncoding encoding = WavEncoding::pcm16);

double rms(const Eigen::Ref<const Eigen::VectorXd>& x);
double mean_power(const Eigen::Ref<const Eigen::VectorXd>& x);
/// Scales so the peak magnitude is `peak`; silence stays silence.
void peak_normalize(Eigen::VectorXd& x, double peak = 1.0);

/// Linear-interpolation resampling of a signal by length ratio: output has
/// round(n * ratio) samples covering the same time span.
Eigen::VectorXd resample_linear(const Eigen::Ref<const Eigen::VectorXd>& x,
                                double ratio);

}  // namespace phode
