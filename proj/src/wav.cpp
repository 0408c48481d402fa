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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "phode/audio.hpp"

namespace phode {
namespace {

template <typename T>
T read_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

void validate(const Waveform& w) {
  if (w.sample_rate <= 0) throw AudioError("sample rate must be positive");
  if (!w.samples.allFinite()) throw AudioError("waveform contains non-finite samples");
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError("cannot open " + path.string());
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (data.size() < 12 || std::memcmp(data.data(), "RIFF", 4) != 0 ||
      std::memcmp(data.data() + 8, "WAVE", 4) != 0)
    throw AudioError(path.string() + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* samples = nullptr;
  std::size_t sample_bytes = 0;
  std::size_t pos = 12;
  while (pos + 8 <= data.size()) {
    const unsigned char* chunk = data.data() + pos;
    std::uint32_t size = read_le<std::uint32_t>(chunk + 4);
    std::size_t avail = std::min<std::size_t>(size, data.size() - pos - 8);
    if (std::memcmp(chunk, "fmt ", 4) == 0 && avail >= 16) {
      format = read_le<std::uint16_t>(chunk + 8);
      channels = read_le<std::uint16_t>(chunk + 10);
      rate = read_le<std::uint32_t>(chunk + 12);
      bits = read_le<std::uint16_t>(chunk + 22);
      if (format == 0xFFFE && avail >= 26) format = read_le<std::uint16_t>(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      samples = chunk + 8;
      sample_bytes = avail;
    }
    pos += 8 + size + (size & 1);
  }
  if (!samples || rate == 0) throw AudioError(path.string() + ": missing fmt or data chunk");
  if (channels != 1) throw AudioError(path.string() + ": only mono audio is supported");

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  if (format == 1 && bits == 16) {
    const std::size_t n = sample_bytes / 2;
    w.samples.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      w.samples[static_cast<Eigen::Index>(i)] =
          read_le<std::int16_t>(samples + 2 * i) / 32768.0;
  } else if (format == 3 && bits == 32) {
    const std::size_t n = sample_bytes / 4;
    w.samples.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
      w.samples[static_cast<Eigen::Index>(i)] = read_le<float>(samples + 4 * i);
  } else {
    throw AudioError(path.string() + ": unsupported encoding (need PCM16 or float32)");
  }
  validate(w);
  return w;
}

void write_wav(const Waveform& w, const std::filesystem::path& path, WavEncoding encoding) {
  validate(w);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw AudioError("cannot write " + path.string());
  const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
  const std::uint16_t format = encoding == WavEncoding::pcm16 ? 1 : 3;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.size()) * (bits / 8);
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, format);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate) * (bits / 8));
  write_le<std::uint16_t>(out, bits / 8);
  write_le<std::uint16_t>(out, bits);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_bytes);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double s = std::clamp(w.samples[i], -1.0, 1.0);
    if (encoding == WavEncoding::pcm16)
      write_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(s * 32767.0)));
    else
      write_le<float>(out, static_cast<float>(s));
  }
}

double rms(const Eigen::Ref<const Eigen::VectorXd>& x) {
  return std::sqrt(mean_power(x));
}

double mean_power(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() == 0) return 0.0;
  return x.squaredNorm() / static_cast<double>(x.size());
}

void peak_normalize(Eigen::VectorXd& x, double peak) {
  if (x.size() == 0) return;
  const double m = x.cwiseAbs().maxCoeff();
  if (m > 0.0) x *= peak / m;
}

Eigen::VectorXd resample_linear(const Eigen::Ref<const Eigen::VectorXd>& x, double ratio) {
  const Eigen::Index n = x.size();
  const auto m = static_cast<Eigen::Index>(std::lround(static_cast<double>(n) * ratio));
  Eigen::VectorXd y(std::max<Eigen::Index>(m, 0));
  if (n == 0 || m == 0) return y;
  const double step = static_cast<double>(n) / static_cast<double>(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double t = static_cast<double>(j) * step;
    const auto i = static_cast<Eigen::Index>(t);
    const double frac = t - static_cast<double>(i);
    const double a = x[std::min(i, n - 1)];
    const double b = x[std::min(i + 1, n - 1)];
    y[j] = a + frac * (b - a);
  }
  return y;
}

}  // namespace phode
