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
#include <vector>

namespace phode {

/// Second-order IIR section, transposed direct form II. Coefficients follow
/// the RBJ audio-EQ cookbook and are normalized so a0 = 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;

  static Biquad lowpass(double sample_rate, double cutoff_hz, double q = 0.7071067811865476);
  static Biquad highpass(double sample_rate, double cutoff_hz, double q = 0.7071067811865476);
  /// Notch centred on `center_hz` with bandwidth given in octaves.
  static Biquad bandstop(double sample_rate, double center_hz, double width_octaves);

  /// Magnitude response at `freq_hz`.
  double gain(double sample_rate, double freq_hz) const;
};

/// Runs the cascade over x from zero initial state.
Eigen::VectorXd apply_filters(const std::vector<Biquad>& cascade,
                              const Eigen::Ref<const Eigen::VectorXd>& x);

inline Eigen::VectorXd apply_filter(const Biquad& f,
                                    const Eigen::Ref<const Eigen::VectorXd>& x) {
  return apply_filters({f}, x);
}

/// Butterworth low-pass or high-pass of even order as a biquad cascade.
std::vector<Biquad> butterworth_lowpass(double sample_rate, double cutoff_hz, int order);
std::vector<Biquad> butterworth_highpass(double sample_rate, double cutoff_hz, int order);

}  // namespace phode
