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
#include <filesystem>

#include "doctest.h"
#include "phode/toy_corpus.hpp"
#include "phode/vocoder.hpp"

using namespace phode;

namespace {

int channel_of(const FilterbankSpec& fb, double hz) {
  for (int c = 0; c < kElectrodes; ++c)
    if (hz >= fb.lower_hz(c) && hz < fb.upper_hz(c)) return c;
  return -1;
}

}  // namespace

TEST_CASE("transition table is row-stochastic and forbids self repeats of S and M") {
  const auto& lang = ToyLanguage::standard();
  double init = 0;
  for (double p : lang.initial) init += p;
  CHECK(init == doctest::Approx(1.0).epsilon(1e-12));
  for (const auto& row : lang.transitions) {
    double sum = 0;
    for (double p : row) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(lang.transitions[3][3] == 0.0);
  CHECK(lang.transitions[4][4] == 0.0);
  for (int i = 0; i < 5; ++i) CHECK(lang.index_of(lang.inventory[static_cast<std::size_t>(i)]) == i);
  CHECK(lang.index_of(Phoneme::parse("K")) == -1);
}

TEST_CASE("utterances are deterministic and independent of corpus size") {
  ToyCorpusConfig cfg;
  cfg.seed = 11;
  cfg.utterances = 3;
  const auto corpus = generate_toy_corpus(cfg, 5);
  const auto again = synthesize_toy_utterance(cfg, 7);
  REQUIRE(corpus.size() == 3);
  CHECK(corpus[2].segmentation.sentence_id == "toy-0007");
  CHECK(corpus[2].waveform.samples == again.waveform.samples);
  CHECK(corpus[0].waveform.samples != corpus[1].waveform.samples);

  cfg.seed = 12;
  CHECK(synthesize_toy_utterance(cfg, 7).waveform.samples != again.waveform.samples);
}

TEST_CASE("segmentations respect the layout of the generator") {
  ToyCorpusConfig cfg;
  cfg.seed = 3;
  CHECK(cfg.utterances >= 200);
  cfg.utterances = 40;
  const auto& lang = ToyLanguage::standard();
  for (const auto& u : generate_toy_corpus(cfg)) {
    const auto& s = u.segmentation.segments;
    REQUIRE_FALSE(s.empty());
    CHECK_NOTHROW(validate(u.segmentation));
    CHECK(s.front().onset_ms >= 80.0);
    CHECK(s.front().onset_ms <= 150.0);
    const double dur_ms = 1000.0 * u.waveform.duration_s();
    CHECK(dur_ms - s.back().offset_ms >= 80.0 - 0.1);
    CHECK(dur_ms - s.back().offset_ms <= 150.0 + 0.1);
    const int words = s.back().word_index + 1;
    CHECK(words >= cfg.min_words);
    CHECK(words <= cfg.max_words);
    CHECK(static_cast<int>(u.segmentation.words.size()) == words);
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(lang.index_of(s[i].phoneme) >= 0);
      if (i == 0) continue;
      const double gap = s[i].onset_ms - s[i - 1].offset_ms;
      if (s[i].word_index == s[i - 1].word_index) {
        CHECK(gap == doctest::Approx(0.0).epsilon(1e-9));
      } else {
        CHECK(s[i].word_index == s[i - 1].word_index + 1);
        CHECK(gap >= 30.0);
        CHECK(gap <= 60.0);
      }
    }
    CHECK(u.waveform.samples.cwiseAbs().maxCoeff() <= 0.81);
  }
}

TEST_CASE("empirical successor frequencies match the transition table") {
  ToyCorpusConfig cfg;
  cfg.seed = 5;
  cfg.utterances = 400;
  const auto& lang = ToyLanguage::standard();
  std::array<std::array<int, 5>, 5> counts{};
  for (const auto& u : generate_toy_corpus(cfg)) {
    const auto& s = u.segmentation.segments;
    for (std::size_t i = 1; i < s.size(); ++i) {
      // The chain continues across word boundaries.
      ++counts[static_cast<std::size_t>(lang.index_of(s[i - 1].phoneme))]
              [static_cast<std::size_t>(lang.index_of(s[i].phoneme))];
    }
  }
  for (std::size_t a = 0; a < 5; ++a) {
    int n = 0;
    for (int c : counts[a]) n += c;
    REQUIRE(n > 100);
    for (std::size_t b = 0; b < 5; ++b) {
      const double p = lang.transitions[a][b];
      const double sd = std::sqrt(p * (1 - p) / n);
      CHECK(std::abs(static_cast<double>(counts[a][b]) / n - p) <= 4.0 * sd + 1e-12);
    }
  }
}

TEST_CASE("AA and AO share implant channels but not mel bins") {
  const auto& lang = ToyLanguage::standard();
  const auto fb = FilterbankSpec::log_spaced();
  const auto aa = lang.formants(0), ao = lang.formants(1);
  const double jitter = ToyCorpusConfig{}.formant_jitter;
  for (std::size_t k = 0; k < 3; ++k) {
    for (double s : {1.0 - jitter, 1.0, 1.0 + jitter}) {
      CHECK(channel_of(fb, aa[k] * s) == channel_of(fb, ao[k]));
      CHECK(channel_of(fb, ao[k] * s) == channel_of(fb, aa[k]));
    }
  }
  // IY differs from both in its second formant channel.
  CHECK(channel_of(fb, lang.formants(2)[1]) != channel_of(fb, aa[1]));
  CHECK(lang.formants(3) == std::array<double, 3>{0, 0, 0});
}

TEST_CASE("corpus files round-trip through the manifest") {
  ToyCorpusConfig cfg;
  cfg.utterances = 2;
  cfg.seed = 9;
  const auto corpus = generate_toy_corpus(cfg);
  const auto dir = std::filesystem::temp_directory_path() / "phode_toy_roundtrip";
  std::filesystem::remove_all(dir);
  write_toy_corpus(corpus, dir);
  const auto manifest = load_manifest(dir / "manifest.csv");
  REQUIRE(manifest.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(manifest[i].sentence_id == corpus[i].segmentation.sentence_id);
    const auto seg = load_segmentation(manifest[i].seg_path);
    REQUIRE(seg.segments.size() == corpus[i].segmentation.segments.size());
    for (std::size_t k = 0; k < seg.segments.size(); ++k) {
      CHECK(seg.segments[k].phoneme == corpus[i].segmentation.segments[k].phoneme);
      CHECK(seg.segments[k].onset_ms == corpus[i].segmentation.segments[k].onset_ms);
    }
    const auto w = read_wav(manifest[i].wav_path);
    CHECK(w.sample_rate == 16000);
    CHECK((w.samples - corpus[i].waveform.samples.cast<float>().cast<double>()).cwiseAbs().maxCoeff() == 0.0);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("invalid configurations are rejected") {
  ToyCorpusConfig cfg;
  cfg.sample_rate = 8000;
  CHECK_THROWS_AS(synthesize_toy_utterance(cfg, 0), std::invalid_argument);
  cfg = {};
  cfg.max_words = 1;
  CHECK_THROWS_AS(synthesize_toy_utterance(cfg, 0), std::invalid_argument);
}
