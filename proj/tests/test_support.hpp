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

#include <cmath>
#include <numbers>

#include "phode/audio.hpp"
#include "phode/rng.hpp"

namespace phode::testing {

inline Waveform tone(double hz, double seconds, double amplitude = 0.5, int rate = 16000) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(static_cast<Eigen::Index>(std::lround(seconds * rate)));
  for (Eigen::Index i = 0; i < w.size(); ++i)
    w.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * hz * i / rate);
  return w;
}

inline Waveform white_noise(double seconds, double sd, std::uint64_t seed, int rate = 16000) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(static_cast<Eigen::Index>(std::lround(seconds * rate)));
  Rng rng(seed);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.samples[i] = sd * rng.gaussian();
  return w;
}

inline Waveform silence(double seconds, int rate = 16000) {
  Waveform w;
  w.sample_rate = rate;
  w.samples = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(std::lround(seconds * rate)));
  return w;
}

inline double pearson(const Eigen::Ref<const Eigen::VectorXd>& a,
                      const Eigen::Ref<const Eigen::VectorXd>& b) {
  const Eigen::VectorXd x = a.array() - a.mean();
  const Eigen::VectorXd y = b.array() - b.mean();
  return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

}  // namespace phode::testing

namespace phode::testing {

/// Syllable-like fixture: alternating voiced (gliding harmonic complex with
/// two formant peaks), fricative (shaped noise) and silent segments.
inline Waveform speech_like(double seconds, std::uint64_t seed, int rate = 16000) {
  Waveform w = silence(seconds, rate);
  Rng rng(seed);
  const Eigen::Index n = w.size();
  Eigen::Index pos = static_cast<Eigen::Index>(0.05 * rate);
  while (pos < n) {
    const Eigen::Index len = static_cast<Eigen::Index>(rng.uniform(0.08, 0.25) * rate);
    const double kind = rng.uniform();
    const double f0a = rng.uniform(90, 220), f0b = rng.uniform(90, 220);
    const double f1 = rng.uniform(300, 900), f2 = rng.uniform(900, 3000);
    const double fric_lo = rng.uniform(1500, 5000);
    const double amp = rng.uniform(0.2, 1.0);
    double phase = 0.0;
    for (Eigen::Index i = 0; i < len && pos + i < n; ++i) {
      const double u = static_cast<double>(i) / len;
      const double env = amp * std::pow(std::sin(std::numbers::pi * u), 2.0);
      double s = 0.0;
      if (kind < 0.6) {
        const double f0 = f0a + (f0b - f0a) * u;
        phase += 2.0 * std::numbers::pi * f0 / rate;
        for (int h = 1; h * f0 < 7800.0; ++h) {
          const double f = h * f0;
          const double g = 1.0 / (1.0 + std::pow((f - f1) / 150.0, 2)) +
                           0.6 / (1.0 + std::pow((f - f2) / 250.0, 2)) + 0.02;
          s += g * std::sin(h * phase);
        }
        s *= 0.3;
      } else if (kind < 0.85) {
        s = rng.gaussian() * 0.3;
      }
      w.samples[pos + i] = env * s;
    }
    if (kind >= 0.6 && kind < 0.85) {
      // Crude high-pass shaping of the fricative: first difference, repeated.
      for (int rep = 0; rep < (fric_lo > 3000 ? 2 : 1); ++rep)
        for (Eigen::Index i = std::min(pos + len, n) - 1; i > pos; --i)
          w.samples[i] -= 0.9 * w.samples[i - 1];
    }
    pos += len + static_cast<Eigen::Index>(rng.uniform(0.0, 0.08) * rate);
  }
  peak_normalize(w.samples, 0.9);
  return w;
}

}  // namespace phode::testing
