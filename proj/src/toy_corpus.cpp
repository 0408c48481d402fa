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

#include "phode/toy_corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "phode/filters.hpp"
#include "phode/rng.hpp"

namespace phode {

const ToyLanguage& ToyLanguage::standard() {
  static const ToyLanguage lang = [] {
    ToyLanguage l{{Phoneme::parse("AA"), Phoneme::parse("AO"), Phoneme::parse("IY"),
                   Phoneme::parse("S"), Phoneme::parse("M")}};
    l.transitions = {{
        {0.05, 0.05, 0.10, 0.50, 0.30},
        {0.05, 0.05, 0.10, 0.30, 0.50},
        {0.10, 0.10, 0.00, 0.40, 0.40},
        {0.45, 0.20, 0.30, 0.00, 0.05},
        {0.25, 0.45, 0.25, 0.05, 0.00},
    }};
    l.initial = {0.2, 0.2, 0.2, 0.2, 0.2};
    return l;
  }();
  return lang;
}

int ToyLanguage::index_of(Phoneme p) const {
  for (int i = 0; i < 5; ++i)
    if (inventory[static_cast<std::size_t>(i)] == p) return i;
  return -1;
}

namespace {

struct Formants {
  std::array<double, 3> freq;
  std::array<double, 3> gain;
  std::array<double, 3> bandwidth;
  double level;
};

// Index order follows ToyLanguage::inventory; S has no voiced source.
const std::array<Formants, 5> kVoiced = {{
    {{700, 1070, 2500}, {1.0, 0.7, 0.25}, {90, 110, 160}, 1.0},
    {{640, 960, 2450}, {1.0, 0.7, 0.25}, {90, 110, 160}, 1.0},
    {{280, 2250, 3000}, {1.0, 0.45, 0.35}, {70, 140, 180}, 0.9},
    {{0, 0, 0}, {0, 0, 0}, {1, 1, 1}, 0.0},
    {{250, 1000, 2200}, {1.0, 0.08, 0.05}, {60, 150, 200}, 0.45},
}};

constexpr int kFricative = 3;

double sample_duration_ms(int phoneme, Rng& rng) {
  if (phoneme == kFricative) return rng.uniform(80, 130);
  if (phoneme == 4) return rng.uniform(60, 100);
  return rng.uniform(90, 150);
}

int draw(const std::array<double, 5>& p, Rng& rng) {
  double u = rng.uniform() * (p[0] + p[1] + p[2] + p[3] + p[4]);
  for (int i = 0; i < 5; ++i) {
    u -= p[static_cast<std::size_t>(i)];
    if (u < 0) return i;
  }
  return 4;
}

double resonance(double f, const Formants& fm, double scale) {
  double g = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double d = (f - fm.freq[i] * scale) / (0.5 * fm.bandwidth[i]);
    g += fm.gain[i] / (1.0 + d * d);
  }
  return g;
}

// Raised-cosine fade in and out over `ramp` samples.
double envelope(Eigen::Index i, Eigen::Index n, Eigen::Index ramp) {
  ramp = std::min(ramp, n / 2);
  if (ramp <= 0) return 1.0;
  if (i < ramp) return 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / ramp);
  if (i >= n - ramp)
    return 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(n - 1 - i) / ramp);
  return 1.0;
}

}  // namespace

std::array<double, 3> ToyLanguage::formants(int index) const {
  return kVoiced.at(static_cast<std::size_t>(index)).freq;
}

ToyUtterance synthesize_toy_utterance(const ToyCorpusConfig& cfg, int index) {
  if (cfg.sample_rate < 16000)
    throw std::invalid_argument("toy corpus needs at least 16 kHz for its fricative band");
  if (cfg.min_words < 1 || cfg.max_words < cfg.min_words || cfg.min_word_phonemes < 1 ||
      cfg.max_word_phonemes < cfg.min_word_phonemes)
    throw std::invalid_argument("invalid toy corpus word ranges");
  const auto& lang = ToyLanguage::standard();
  char id[32];
  std::snprintf(id, sizeof id, "toy-%04d", index);
  Rng rng(derive_seed(cfg.seed, "toy-utterance", std::string_view(id)));
  const double fs = cfg.sample_rate;

  // Phoneme sequence, word layout and timing.
  struct Planned {
    int phoneme;
    double onset_ms, offset_ms;
    int word;
  };
  std::vector<Planned> plan;
  std::vector<std::string> texts;
  const int words = static_cast<int>(rng.uniform_int(cfg.min_words, cfg.max_words));
  double t = rng.uniform(80, 150);
  int prev = -1;
  for (int w = 0; w < words; ++w) {
    if (w > 0) t += rng.uniform(30, 60);
    const int len = static_cast<int>(rng.uniform_int(cfg.min_word_phonemes, cfg.max_word_phonemes));
    std::string text;
    for (int k = 0; k < len; ++k) {
      const int p = prev < 0 ? draw(lang.initial, rng) : draw(lang.transitions[static_cast<std::size_t>(prev)], rng);
      const double dur = sample_duration_ms(p, rng);
      plan.push_back({p, t, t + dur, w});
      t += dur;
      prev = p;
      for (char c : lang.inventory[static_cast<std::size_t>(p)].symbol())
        text += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    texts.push_back(text);
  }
  const double total_ms = t + rng.uniform(80, 150);

  // Speaker: base pitch with a slow glide, formant scale.
  const double f0_base = rng.uniform(95, 160);
  const double glide = rng.uniform(-0.15, 0.15);
  const double scale = 1.0 + rng.uniform(-cfg.formant_jitter, cfg.formant_jitter);
  const double gain = rng.uniform(0.5, 1.0);

  const auto n = static_cast<Eigen::Index>(std::llround(total_ms * fs / 1000.0));
  Eigen::VectorXd voiced = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd noise = Eigen::VectorXd::Zero(n);
  double f0_phase = 0.0;
  const Eigen::Index ramp = static_cast<Eigen::Index>(0.008 * fs);
  const Eigen::Index block = static_cast<Eigen::Index>(0.001 * fs);

  for (const auto& seg : plan) {
    const auto a = static_cast<Eigen::Index>(std::llround(seg.onset_ms * fs / 1000.0));
    const auto b = std::min(n, static_cast<Eigen::Index>(std::llround(seg.offset_ms * fs / 1000.0)));
    if (seg.phoneme == kFricative) {
      for (Eigen::Index i = a; i < b; ++i) noise(i) = rng.gaussian() * envelope(i - a, b - a, ramp);
      continue;
    }
    const auto& fm = kVoiced[static_cast<std::size_t>(seg.phoneme)];
    std::vector<double> amp;
    for (Eigen::Index i = a; i < b; ++i) {
      const double time = static_cast<double>(i) / fs;
      const double f0 = f0_base * (1.0 + glide * time / (total_ms / 1000.0));
      f0_phase += f0 / fs;
      const int harmonics = std::min<int>(63, static_cast<int>(7000.0 / f0));
      if ((i - a) % block == 0) {
        amp.assign(static_cast<std::size_t>(harmonics) + 1, 0.0);
        for (int k = 1; k <= harmonics; ++k)
          amp[static_cast<std::size_t>(k)] = resonance(k * f0, fm, scale) / std::sqrt(static_cast<double>(k));
      }
      double s = 0.0;
      for (int k = 1; k < static_cast<int>(amp.size()); ++k)
        s += amp[static_cast<std::size_t>(k)] * std::sin(2.0 * std::numbers::pi * k * f0_phase);
      voiced(i) += fm.level * s * envelope(i - a, b - a, ramp);
    }
  }

  auto band = butterworth_highpass(fs, 4000.0, 6);
  const auto lp = butterworth_lowpass(fs, 7500.0, 4);
  band.insert(band.end(), lp.begin(), lp.end());
  Eigen::VectorXd fricative = apply_filters(band, noise);

  const double voiced_rms = rms(voiced);
  const double fric_rms = rms(fricative);
  Eigen::VectorXd x = voiced;
  if (fric_rms > 0) x += (voiced_rms > 0 ? 0.6 * voiced_rms / fric_rms : 1.0) * fricative;
  peak_normalize(x, 0.8 * gain);
  for (Eigen::Index i = 0; i < n; ++i) x(i) += 3e-4 * rng.gaussian();

  ToyUtterance u;
  u.waveform.sample_rate = cfg.sample_rate;
  u.waveform.samples = x;
  u.segmentation.sentence_id = id;
  u.segmentation.waveform_path = std::string(id) + ".wav";
  for (const auto& p : plan)
    u.segmentation.segments.push_back(
        {lang.inventory[static_cast<std::size_t>(p.phoneme)], p.onset_ms, p.offset_ms, p.word});
  u.segmentation.words = words_from_segments(u.segmentation.segments, texts);
  validate(u.segmentation);
  return u;
}

std::vector<ToyUtterance> generate_toy_corpus(const ToyCorpusConfig& cfg, int first_index) {
  std::vector<ToyUtterance> out;
  out.reserve(static_cast<std::size_t>(std::max(cfg.utterances, 0)));
  for (int i = 0; i < cfg.utterances; ++i) out.push_back(synthesize_toy_utterance(cfg, first_index + i));
  return out;
}

void write_toy_corpus(const std::vector<ToyUtterance>& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<ManifestEntry> entries;
  for (const auto& u : corpus) {
    const auto& id = u.segmentation.sentence_id;
    write_wav(u.waveform, dir / (id + ".wav"), WavEncoding::float32);
    save_segmentation(u.segmentation, dir / (id + ".csv"));
    entries.push_back({id, id + ".wav", id + ".csv"});
  }
  save_manifest(entries, dir / "manifest.csv");
}

}  // namespace phode
