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

#include "phode/vocoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unsupported/Eigen/FFT>

#include "phode/filters.hpp"
#include "phode/rng.hpp"

namespace phode {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr char kMagic[8] = {'P', 'H', 'O', 'D', 'E', 'E', 'G', '1'};

// Length of each channel's analysis kernel in units of fs / bandwidth.
constexpr double kWindowFactor = 4.0;
constexpr int kCarrierFlattening = 6;

template <typename T>
void put(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw std::runtime_error("truncated electrodogram file");
  return v;
}

double expand(double a, const FilterbankSpec& fb) {
  if (a <= 0.0) return 0.0;
  if (fb.compression == Compression::log)
    return std::pow(10.0, (a - 1.0) * fb.dynamic_range_db / 20.0);
  return std::pow(a, 1.0 / fb.power_exponent);
}

// Gaussian noise restricted to [lo, hi), then iteratively flattened: the
// analytic signal is divided by its own magnitude and re-band-limited, which
// removes most of the envelope fluctuation a narrow noise band would
// otherwise impose on the channel envelope.
Eigen::VectorXd band_noise(Eigen::Index n, double lo, double hi, int fs, std::uint64_t seed) {
  const auto m = static_cast<Eigen::Index>(
      std::bit_ceil(static_cast<std::uint64_t>(std::max<Eigen::Index>(n, 2))));
  Rng rng(seed);
  std::vector<std::complex<double>> sig(m);
  for (auto& v : sig) v = rng.gaussian();
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  auto restrict_band = [&] {
    fft.fwd(spec, sig);
    for (Eigen::Index k = 0; k < m; ++k) {
      const double f = static_cast<double>(k) * fs / m;
      spec[k] = (2 * k < m && f >= lo && f < hi) ? 2.0 * spec[k] : 0.0;
    }
    fft.inv(sig, spec);
  };
  restrict_band();
  for (int it = 0; it < kCarrierFlattening; ++it) {
    for (auto& v : sig) v = std::abs(v) > 0 ? std::complex<double>(v.real() / std::abs(v)) : 0.0;
    restrict_band();
  }
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = sig[i].real();
  const double r = rms(out);
  if (r > 0) out *= std::numbers::sqrt2 / 2.0 / r;
  return out;
}

}  // namespace

FilterbankSpec FilterbankSpec::log_spaced(double lo_hz, double hi_hz) {
  if (!(lo_hz > 0 && hi_hz > lo_hz)) throw std::invalid_argument("need 0 < lo < hi");
  FilterbankSpec fb;
  const double ratio = std::log(hi_hz / lo_hz);
  for (int i = 0; i <= kElectrodes; ++i)
    fb.channel_edges[i] = lo_hz * std::exp(ratio * i / kElectrodes);
  fb.channel_edges[kElectrodes] = hi_hz;
  return fb;
}

double FilterbankSpec::center_hz(int channel) const {
  return std::sqrt(lower_hz(channel) * upper_hz(channel));
}

void FilterbankSpec::validate() const {
  if (!(channel_edges[0] > 0)) throw std::invalid_argument("channel edges must be positive");
  for (int i = 1; i <= kElectrodes; ++i)
    if (!(channel_edges[i] > channel_edges[i - 1]))
      throw std::invalid_argument("channel edges must be strictly ascending");
  if (!(envelope_cutoff_hz > 0)) throw std::invalid_argument("envelope cutoff must be positive");
  if (compression == Compression::power && !(power_exponent > 0))
    throw std::invalid_argument("power exponent must be positive");
  if (compression == Compression::log && !(dynamic_range_db > 0))
    throw std::invalid_argument("dynamic range must be positive");
}

int Electrodogram::samples_per_pulse() const {
  return static_cast<int>(std::lround(sample_rate / pulse_rate));
}

SpreadModel SpreadModel::uniform(double pitch_mm, double decay_per_mm) {
  SpreadModel s;
  s.electrode_positions_mm = Eigen::VectorXd::LinSpaced(kElectrodes, 0.0, pitch_mm * (kElectrodes - 1));
  s.decay_per_mm = decay_per_mm;
  return s;
}

Eigen::MatrixXd SpreadModel::weights() const {
  validate();
  const Eigen::Index n = electrode_positions_mm.size();
  Eigen::MatrixXd w(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      w(i, j) = std::exp(-decay_per_mm *
                         std::abs(electrode_positions_mm[i] - electrode_positions_mm[j]));
  return w;
}

void SpreadModel::validate() const {
  if (electrode_positions_mm.size() != kElectrodes)
    throw std::invalid_argument("spread model needs 16 electrode positions");
  for (Eigen::Index i = 1; i < electrode_positions_mm.size(); ++i)
    if (!(electrode_positions_mm[i] > electrode_positions_mm[i - 1]))
      throw std::invalid_argument("electrode positions must be strictly ordered");
  if (!(decay_per_mm > 0)) throw std::invalid_argument("decay constant must be positive");
}

Electrodogram encode(const Waveform& w, const FilterbankSpec& fb, double pulse_rate) {
  validate(w);
  fb.validate();
  if (w.sample_rate != 16000)
    throw AudioError("encode expects 16 kHz input, got " + std::to_string(w.sample_rate));
  if (!(pulse_rate > 0 && pulse_rate <= w.sample_rate))
    throw std::invalid_argument("pulse rate must be in (0, sample_rate]");

  Electrodogram e;
  e.pulse_rate = pulse_rate;
  e.sample_rate = w.sample_rate;
  const int hop = e.samples_per_pulse();
  const Eigen::Index n = w.size();
  const Eigen::Index frames = (n + hop - 1) / hop;
  const double fs = w.sample_rate;
  e.pulses = Eigen::MatrixXd::Zero(kElectrodes, frames);

  std::vector<Biquad> smoother;
  if (fb.envelope_cutoff_hz < 0.5 * pulse_rate)
    smoother = butterworth_lowpass(pulse_rate, fb.envelope_cutoff_hz, 2);

  for (int ch = 0; ch < kElectrodes; ++ch) {
    const double bw = fb.upper_hz(ch) - fb.lower_hz(ch);
    const double omega = 2.0 * kPi * fb.center_hz(ch) / fs;
    const int half = std::max(1, static_cast<int>(std::lround(0.5 * kWindowFactor * fs / bw)));
    const int len = 2 * half + 1;
    std::vector<std::complex<double>> kernel(len);
    double gain = 0.0;
    for (int m = 0; m < len; ++m) {
      const int k = m - half;
      const double hann = 0.5 + 0.5 * std::cos(kPi * k / (half + 1));
      const double x = kPi * bw * k / fs;
      const double lp = k == 0 ? bw / fs : std::sin(x) / (kPi * k);
      gain += hann * lp;
      kernel[m] = hann * lp * std::polar(1.0, -omega * k);
    }
    const double scale = 2.0 / gain;

    Eigen::VectorXd env(frames);
    for (Eigen::Index p = 0; p < frames; ++p) {
      const Eigen::Index start = p * hop - half;
      const Eigen::Index m0 = std::max<Eigen::Index>(0, -start);
      const Eigen::Index m1 = std::min<Eigen::Index>(len, n - start);
      std::complex<double> acc = 0.0;
      for (Eigen::Index m = m0; m < m1; ++m) acc += w.samples[start + m] * kernel[m];
      env[p] = scale * std::abs(acc);
    }
    if (!smoother.empty()) env = apply_filters(smoother, env).cwiseMax(0.0);
    e.pulses.row(ch) = env.transpose();
  }

  const double peak = e.pulses.maxCoeff();
  if (!(peak > 0.0)) {
    e.pulses.setZero();
    return e;
  }
  if (fb.compression == Compression::log) {
    e.pulses = e.pulses.unaryExpr([&](double v) {
      if (v <= 0.0) return 0.0;
      return std::clamp(1.0 + 20.0 * std::log10(v / peak) / fb.dynamic_range_db, 0.0, 1.0);
    });
  } else {
    e.pulses = (e.pulses / peak).array().pow(fb.power_exponent).min(1.0).matrix();
  }
  return e;
}

Electrodogram apply_spread(const Electrodogram& e, const SpreadModel& s) {
  if (e.pulses.rows() != kElectrodes)
    throw std::invalid_argument("electrodogram must have 16 channels");
  Electrodogram out = e;
  out.pulses = s.weights() * e.pulses;
  const double peak = out.pulses.size() ? out.pulses.maxCoeff() : 0.0;
  if (peak > 0.0) out.pulses /= peak;
  return out;
}

Waveform resynthesize(const Electrodogram& e, const FilterbankSpec& fb, std::uint64_t seed,
                      std::string_view sentence_id) {
  fb.validate();
  if (e.pulses.rows() != kElectrodes)
    throw std::invalid_argument("electrodogram must have 16 channels");
  const int hop = e.samples_per_pulse();
  const Eigen::Index frames = e.num_frames();
  const Eigen::Index n = frames * hop;

  Waveform out;
  out.sample_rate = e.sample_rate;
  out.samples = Eigen::VectorXd::Zero(n);
  const std::uint64_t base = derive_seed(seed, "vocoder-carrier", sentence_id);

  for (int ch = 0; ch < kElectrodes; ++ch) {
    Eigen::VectorXd level(frames);
    for (Eigen::Index p = 0; p < frames; ++p) level[p] = expand(e.pulses(ch, p), fb);
    if (level.isZero(0.0)) continue;

    Eigen::VectorXd env(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index p = i / hop;
      const double frac = static_cast<double>(i % hop) / hop;
      const double next = p + 1 < frames ? level[p + 1] : level[p];
      env[i] = level[p] + frac * (next - level[p]);
    }
    const double hi = std::min(fb.upper_hz(ch), 0.5 * e.sample_rate);
    out.samples += env.cwiseProduct(
        band_noise(n, fb.lower_hz(ch), hi, e.sample_rate, derive_seed(base, "channel", ch)));
  }
  peak_normalize(out.samples);
  return out;
}

Waveform ci_waveform(const Waveform& w, const VocoderConfig& cfg, std::string_view sentence_id) {
  Electrodogram e = encode(w, cfg.filterbank, cfg.pulse_rate);
  if (cfg.apply_spread) e = apply_spread(e, cfg.spread);
  return resynthesize(e, cfg.filterbank, cfg.seed, sentence_id);
}

Spectrogram ci_transform(const Waveform& w, const VocoderConfig& cfg,
                         std::string_view sentence_id) {
  return compute_spectrogram(ci_waveform(w, cfg, sentence_id));
}

void write_electrodogram_csv(const Electrodogram& e, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "channel,frame,amplitude\n";
  char buf[32];
  for (Eigen::Index c = 0; c < e.pulses.rows(); ++c)
    for (Eigen::Index f = 0; f < e.pulses.cols(); ++f) {
      std::snprintf(buf, sizeof buf, "%.9g", e.pulses(c, f));
      os << c << ',' << f << ',' << buf << '\n';
    }
}

void write_electrodogram_binary(const Electrodogram& e, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(e.pulses.rows()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(e.pulses.cols()));
  put<double>(os, e.pulse_rate);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(e.sample_rate));
  for (Eigen::Index c = 0; c < e.pulses.rows(); ++c)
    for (Eigen::Index f = 0; f < e.pulses.cols(); ++f)
      put<float>(os, static_cast<float>(e.pulses(c, f)));
}

Electrodogram read_electrodogram_binary(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error(path.string() + ": not an electrodogram file");
  Electrodogram e;
  const auto rows = get<std::uint32_t>(is);
  const auto cols = get<std::uint32_t>(is);
  e.pulse_rate = get<double>(is);
  e.sample_rate = static_cast<int>(get<std::uint32_t>(is));
  e.pulses.resize(rows, cols);
  for (Eigen::Index c = 0; c < rows; ++c)
    for (Eigen::Index f = 0; f < cols; ++f) e.pulses(c, f) = get<float>(is);
  return e;
}

}  // namespace phode
