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

#include <cmath>

#include "doctest.h"
#include "phode/spectrogram.hpp"
#include "test_support.hpp"

using namespace phode;
using namespace phode::testing;

TEST_CASE("silence gives the log floor everywhere") {
  auto s = compute_spectrogram(silence(1.0));
  CHECK(s.num_frames() == 98);
  CHECK(s.num_channels() == 64);
  CHECK(s.hop_ms == 10.0);
  CHECK((s.frames.array() == std::log(1e-10)).all());
}

TEST_CASE("frame count formula") {
  for (Eigen::Index n : {400, 401, 559, 560, 16000, 23456}) {
    auto s = compute_spectrogram(white_noise(static_cast<double>(n) / 16000.0, 0.1, 1));
    CHECK(s.num_frames() == (n - 400) / 160 + 1);
    CHECK(s.frames.allFinite());
  }
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(compute_spectrogram(silence(1.0, 8000)), AudioError);
  CHECK_THROWS_AS(compute_spectrogram(silence(0.02)), AudioError);
}

TEST_CASE("pure tone peaks in the channel centred nearest its frequency") {
  // Independent centre computation: HTK mel, 66 points evenly spaced in mel.
  auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto inv = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  for (double f : {250.0, 1000.0, 3100.0, 6000.0}) {
    int nearest = 0;
    double best = 1e9;
    for (int c = 0; c < 64; ++c) {
      const double center = inv(mel(50.0) + (mel(8000.0) - mel(50.0)) * (c + 1) / 65.0);
      if (std::abs(mel(center) - mel(f)) < best) {
        best = std::abs(mel(center) - mel(f));
        nearest = c;
      }
    }
    auto s = compute_spectrogram(tone(f, 1.0));
    Eigen::Index arg;
    s.frames.colwise().mean().maxCoeff(&arg);
    CHECK(arg == nearest);
  }
}

TEST_CASE("concatenation matches stacking away from the boundary") {
  auto a = white_noise(0.5, 0.1, 11);
  auto b = tone(700.0, 0.5, 0.3);
  Waveform ab;
  ab.samples.resize(a.size() + b.size());
  ab.samples << a.samples, b.samples;
  auto sa = compute_spectrogram(a);
  auto sb = compute_spectrogram(b);
  auto sab = compute_spectrogram(ab);
  // b starts at a hop boundary (8000 = 50 * 160), so frame 50+k of the
  // concatenation is frame k of b; frames 48 and 49 straddle the join.
  CHECK(sab.num_frames() == sa.num_frames() + sb.num_frames() + 2);
  CHECK((sab.frames.topRows(sa.num_frames()) - sa.frames).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((sab.frames.bottomRows(sb.num_frames()) - sb.frames).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("doubling duration roughly doubles the frame count") {
  // floor((2N - W)/H) + 1 - 2 (floor((N - W)/H) + 1) lies in {1, 2} for
  // W = 400, H = 160: the window overhang counted once instead of twice.
  for (double sec : {0.3, 0.77, 1.0, 2.2}) {
    auto w = white_noise(sec, 0.1, 3);
    Waveform ww;
    ww.samples.resize(2 * w.size());
    ww.samples << w.samples, w.samples;
    const auto t1 = compute_spectrogram(w).num_frames();
    const auto t2 = compute_spectrogram(ww).num_frames();
    CHECK(std::abs(t2 - 2 * t1) <= 2);
  }
}

TEST_CASE("deterministic") {
  auto w = white_noise(0.4, 0.2, 5);
  CHECK(compute_spectrogram(w).frames == compute_spectrogram(w).frames);
}
