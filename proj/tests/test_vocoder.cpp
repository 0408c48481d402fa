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

#include <complex>
#include <filesystem>
#include <fstream>
#include <unsupported/Eigen/FFT>

#include "doctest.h"
#include "phode/vocoder.hpp"
#include "test_support.hpp"

using namespace phode;
using phode::testing::pearson;

namespace {

// Band-limited Hilbert envelope of x in [lo, hi), box-smoothed over
// `smooth` samples and sampled every `step` samples.
Eigen::VectorXd oracle_envelope(const Eigen::VectorXd& x, double lo, double hi, int fs,
                                int smooth, int step) {
  const Eigen::Index n = x.size();
  Eigen::FFT<double> fft;
  std::vector<double> in(x.data(), x.data() + n);
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, in);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double f = static_cast<double>(k) * fs / n;
    if (k == 0 || k * 2 >= n || f < lo || f >= hi)
      spec[k] = 0.0;
    else
      spec[k] *= 2.0;
  }
  std::vector<std::complex<double>> analytic;
  fft.inv(analytic, spec);
  Eigen::VectorXd mag(n);
  for (Eigen::Index i = 0; i < n; ++i) mag[i] = std::abs(analytic[i]);
  const Eigen::Index frames = (n - smooth) / step + 1;
  Eigen::VectorXd out(frames);
  for (Eigen::Index t = 0; t < frames; ++t) out[t] = mag.segment(t * step, smooth).mean();
  return out;
}

double energy_fraction(const Electrodogram& e, int ch) {
  return e.pulses.row(ch).squaredNorm() / e.pulses.squaredNorm();
}

}  // namespace

TEST_CASE("filterbank layout") {
  const auto fb = FilterbankSpec::log_spaced();
  CHECK(fb.channel_edges.front() == doctest::Approx(250.0));
  CHECK(fb.channel_edges.back() == doctest::Approx(8000.0));
  for (int i = 1; i < kElectrodes; ++i)
    CHECK(fb.center_hz(i) / fb.center_hz(i - 1) == doctest::Approx(std::pow(32.0, 1.0 / 16)));
  auto bad = fb;
  bad.channel_edges[4] = bad.channel_edges[3];
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("silence encodes to zeros and resynthesizes to silence") {
  const auto fb = FilterbankSpec::log_spaced();
  const auto e = encode(testing::silence(0.5), fb);
  CHECK(e.pulses.rows() == 16);
  CHECK(e.num_frames() == 500);
  CHECK(e.pulses.isZero(0.0));
  const auto w = resynthesize(e, fb);
  CHECK(w.size() == 8000);
  CHECK(w.samples.isZero(0.0));
  const auto s = ci_transform(testing::silence(0.5));
  CHECK((s.frames.array() == std::log(1e-10)).all());
}

TEST_CASE("a tone at each channel centre lands in that channel") {
  const auto fb = FilterbankSpec::log_spaced();
  for (int ch = 0; ch < kElectrodes; ++ch) {
    const auto e = encode(testing::tone(fb.center_hz(ch), 1.0), fb);
    CHECK((e.pulses.array() >= 0).all());
    CHECK((e.pulses.array() <= 1).all());
    const double frac = energy_fraction(e, ch);
    INFO("channel " << ch << " fraction " << frac);
    CHECK(frac >= 0.8);
  }
}

TEST_CASE("equal tones in channels 3 and 12 give equal channel energy") {
  const auto fb = FilterbankSpec::log_spaced();
  auto a = testing::tone(fb.center_hz(2), 1.0, 0.4);
  a.samples += testing::tone(fb.center_hz(11), 1.0, 0.4).samples;
  const auto e = encode(a, fb);
  const double e3 = e.pulses.row(2).squaredNorm();
  const double e12 = e.pulses.row(11).squaredNorm();
  CHECK(std::abs(e3 - e12) / std::max(e3, e12) <= 0.10);
}

TEST_CASE("encode is amplitude-monotone") {
  const auto fb = FilterbankSpec::log_spaced();
  const auto w = testing::speech_like(1.0, 3);
  const auto ref = encode(w, fb);
  for (double g : {1.0, 0.7, 0.3, 0.01}) {
    Waveform s = w;
    s.samples *= g;
    const auto e = encode(s, fb);
    CHECK(((e.pulses - ref.pulses).array() <= 1e-12).all());
  }
  auto power = fb;
  power.compression = Compression::power;
  const auto pref = encode(w, power);
  Waveform half = w;
  half.samples *= 0.5;
  CHECK(((encode(half, power).pulses - pref.pulses).array() <= 1e-12).all());
}

TEST_CASE("spread weights") {
  const auto s = SpreadModel::uniform();
  const Eigen::MatrixXd w = s.weights();
  CHECK(w.isApprox(w.transpose(), 0.0));
  CHECK((w.array() >= 0).all());
  CHECK(w(4, 5) == doctest::Approx(std::exp(-1.1)).epsilon(1e-12));

  Electrodogram e;
  e.pulses = Eigen::MatrixXd::Zero(16, 3);
  e.pulses(7, 1) = 1.0;
  const auto out = apply_spread(e, s);
  CHECK(out.pulses(8, 1) / out.pulses(7, 1) == doctest::Approx(std::exp(-1.1)).epsilon(1e-12));
  CHECK(out.pulses(6, 1) / out.pulses(7, 1) == doctest::Approx(0.333).epsilon(0.01));

  SpreadModel bad = s;
  bad.decay_per_mm = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = s;
  std::swap(bad.electrode_positions_mm[2], bad.electrode_positions_mm[3]);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("spread limits") {
  const auto e = encode(testing::speech_like(0.6, 5), FilterbankSpec::log_spaced());
  const auto sharp = apply_spread(e, SpreadModel::uniform(1.1, 1e6));
  CHECK((sharp.pulses - e.pulses).cwiseAbs().maxCoeff() <= 1e-9);

  const auto flat = apply_spread(e, SpreadModel::uniform(1.1, 1e-6));
  const Eigen::RowVectorXd mean = e.pulses.colwise().mean();
  const double scale = 1.0 / mean.maxCoeff();
  for (Eigen::Index t = 0; t < e.num_frames(); ++t)
    for (int c = 0; c < kElectrodes; ++c)
      CHECK(flat.pulses(c, t) == doctest::Approx(scale * mean[t]).epsilon(0.01).scale(1e-3));
}

TEST_CASE("channel-only electrodogram resynthesizes inside its band") {
  const auto fb = FilterbankSpec::log_spaced();
  Electrodogram e;
  e.pulses = Eigen::MatrixXd::Zero(16, 1000);
  e.pulses.row(4).setConstant(0.8);
  const auto w = resynthesize(e, fb, 11);
  REQUIRE(w.size() == 16000);
  Eigen::FFT<double> fft;
  std::vector<double> in(w.samples.data(), w.samples.data() + w.size());
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, in);
  double inside = 0, total = 0;
  for (std::size_t k = 1; k < spec.size() / 2; ++k) {
    const double f = static_cast<double>(k) * 16000 / spec.size();
    const double p = std::norm(spec[k]);
    total += p;
    if (f >= fb.lower_hz(4) && f < fb.upper_hz(4)) inside += p;
  }
  CHECK(inside / total >= 0.8);
  CHECK(w.samples.cwiseAbs().maxCoeff() == doctest::Approx(1.0));
}

TEST_CASE("encode then resynthesize tracks every channel envelope") {
  const auto fb = FilterbankSpec::log_spaced();
  const auto w = testing::speech_like(3.0, 2024);
  const auto e = encode(w, fb);
  const auto v = resynthesize(e, fb, 1, "fixture");
  CHECK(std::abs(v.size() - w.size()) < e.samples_per_pulse());
  const Eigen::VectorXd vs = v.samples.head(w.size());
  for (int ch = 0; ch < kElectrodes; ++ch) {
    const auto a = oracle_envelope(w.samples, fb.lower_hz(ch), fb.upper_hz(ch), 16000, 480, 160);
    const auto b = oracle_envelope(vs, fb.lower_hz(ch), fb.upper_hz(ch), 16000, 480, 160);
    const double r = pearson(a, b);
    INFO("channel " << ch << " r=" << r);
    CHECK(r >= 0.9);
  }
}

TEST_CASE("ci_transform shape and spectral smearing") {
  const auto w = testing::speech_like(2.0, 77);
  const auto nh = compute_spectrogram(w);
  const auto ci = ci_transform(w, {}, "s");
  CHECK(std::abs(ci.num_frames() - nh.num_frames()) <= 1);
  CHECK(ci.num_channels() == 64);

  // Mean correlation between adjacent mel channels within a frame, over frames
  // whose NH peak lies within 20 dB of the utterance peak.
  const double floor = nh.frames.maxCoeff() - std::log(100.0);
  auto adjacent_corr = [&](const Spectrogram& s) {
    double sum = 0;
    int count = 0;
    for (Eigen::Index t = 0; t < std::min(s.frames.rows(), nh.frames.rows()); ++t) {
      if (nh.frames.row(t).maxCoeff() < floor) continue;
      const Eigen::VectorXd row = s.frames.row(t).transpose();
      sum += pearson(row.head(63), row.tail(63));
      ++count;
    }
    return sum / count;
  };
  CHECK(adjacent_corr(ci) > adjacent_corr(nh));
}

TEST_CASE("determinism and per-sentence carriers") {
  const auto w = testing::speech_like(0.5, 9);
  VocoderConfig cfg;
  cfg.seed = 4;
  CHECK(ci_waveform(w, cfg, "a").samples == ci_waveform(w, cfg, "a").samples);
  CHECK(ci_waveform(w, cfg, "a").samples != ci_waveform(w, cfg, "b").samples);
}

TEST_CASE("electrodogram export") {
  const auto dir = std::filesystem::temp_directory_path() / "phode_test_vocoder";
  std::filesystem::create_directories(dir);
  const auto e = encode(testing::speech_like(0.3, 1), FilterbankSpec::log_spaced());
  write_electrodogram_binary(e, dir / "e.bin");
  const auto back = read_electrodogram_binary(dir / "e.bin");
  CHECK(back.pulse_rate == e.pulse_rate);
  CHECK(back.sample_rate == e.sample_rate);
  CHECK(back.pulses.isApprox(e.pulses.cast<float>().cast<double>(), 0.0));
  CHECK(std::filesystem::file_size(dir / "e.bin") == 8 + 4 + 4 + 8 + 4 + 4 * 16 * 300);
  write_electrodogram_csv(e, dir / "e.csv");
  std::ifstream is(dir / "e.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header == "channel,frame,amplitude");
  CHECK_THROWS(read_electrodogram_binary(dir / "e.csv"));
}
