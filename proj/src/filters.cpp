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

#include "phode/filters.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace phode {
namespace {

Biquad normalized(double b0, double b1, double b2, double a0, double a1, double a2) {
  return {b0 / a0, b1 / a0, b2 / a0, a1 / a0, a2 / a0};
}

double clamp_to_nyquist(double sample_rate, double f) {
  return std::clamp(f, 1e-3, 0.499 * sample_rate);
}

std::vector<double> butterworth_qs(int order) {
  if (order < 2 || order % 2 != 0)
    throw std::invalid_argument("butterworth order must be even and >= 2");
  std::vector<double> qs;
  for (int k = 0; k < order / 2; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + 1.0) / (2.0 * order);
    qs.push_back(1.0 / (2.0 * std::sin(theta)));
  }
  return qs;
}

}  // namespace

Biquad Biquad::lowpass(double sample_rate, double cutoff_hz, double q) {
  const double w0 = 2.0 * std::numbers::pi * clamp_to_nyquist(sample_rate, cutoff_hz) / sample_rate;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double c = std::cos(w0);
  return normalized((1 - c) / 2, 1 - c, (1 - c) / 2, 1 + alpha, -2 * c, 1 - alpha);
}

Biquad Biquad::highpass(double sample_rate, double cutoff_hz, double q) {
  const double w0 = 2.0 * std::numbers::pi * clamp_to_nyquist(sample_rate, cutoff_hz) / sample_rate;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double c = std::cos(w0);
  return normalized((1 + c) / 2, -(1 + c), (1 + c) / 2, 1 + alpha, -2 * c, 1 - alpha);
}

Biquad Biquad::bandstop(double sample_rate, double center_hz, double width_octaves) {
  const double w0 = 2.0 * std::numbers::pi * clamp_to_nyquist(sample_rate, center_hz) / sample_rate;
  const double s = std::sin(w0);
  const double alpha = s * std::sinh(std::numbers::ln2 / 2.0 * width_octaves * w0 / s);
  const double c = std::cos(w0);
  return normalized(1, -2 * c, 1, 1 + alpha, -2 * c, 1 - alpha);
}

double Biquad::gain(double sample_rate, double freq_hz) const {
  const std::complex<double> z =
      std::polar(1.0, -2.0 * std::numbers::pi * freq_hz / sample_rate);
  const auto num = b0 + b1 * z + b2 * z * z;
  const auto den = 1.0 + a1 * z + a2 * z * z;
  return std::abs(num / den);
}

Eigen::VectorXd apply_filters(const std::vector<Biquad>& cascade,
                              const Eigen::Ref<const Eigen::VectorXd>& x) {
  Eigen::VectorXd y = x;
  for (const auto& f : cascade) {
    double z1 = 0, z2 = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double in = y[i];
      const double out = f.b0 * in + z1;
      z1 = f.b1 * in - f.a1 * out + z2;
      z2 = f.b2 * in - f.a2 * out;
      y[i] = out;
    }
  }
  return y;
}

std::vector<Biquad> butterworth_lowpass(double sample_rate, double cutoff_hz, int order) {
  std::vector<Biquad> out;
  for (double q : butterworth_qs(order)) out.push_back(Biquad::lowpass(sample_rate, cutoff_hz, q));
  return out;
}

std::vector<Biquad> butterworth_highpass(double sample_rate, double cutoff_hz, int order) {
  std::vector<Biquad> out;
  for (double q : butterworth_qs(order)) out.push_back(Biquad::highpass(sample_rate, cutoff_hz, q));
  return out;
}

}  // namespace phode
