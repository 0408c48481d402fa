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

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "phode/audio.hpp"
#include "phode/phoneme.hpp"

namespace phode {

/// A five-phoneme synthetic language: three vowels, a fricative and a nasal.
/// AA and AO share their first two formant regions within single channels of
/// the default implant filterbank, so they stay separable in the mel
/// spectrogram but blur together after vocoding.
struct ToyLanguage {
  std::array<Phoneme, 5> inventory;
  /// Row-stochastic successor probabilities, indexed like inventory. The chain
  /// runs through word boundaries.
  std::array<std::array<double, 5>, 5> transitions{};
  std::array<double, 5> initial{};

  static const ToyLanguage& standard();
  int index_of(Phoneme p) const;
  /// Nominal first three formants (Hz) of inventory entry `index`; all zero
  /// for the unvoiced fricative.
  std::array<double, 3> formants(int index) const;
};

struct ToyCorpusConfig {
  int utterances = 240;
  int sample_rate = 16000;
  int min_words = 3;
  int max_words = 5;
  int min_word_phonemes = 2;
  int max_word_phonemes = 3;
  /// Per-utterance speaker variation of formant frequencies (fraction).
  double formant_jitter = 0.03;
  std::uint64_t seed = 0;
};

struct ToyUtterance {
  SegmentedUtterance segmentation;
  Waveform waveform;
};

/// Deterministic in (cfg.seed, index): utterance i is identical whatever the
/// corpus size. Ids are "toy-%04d" starting at `first_index`.
ToyUtterance synthesize_toy_utterance(const ToyCorpusConfig& cfg, int index);
std::vector<ToyUtterance> generate_toy_corpus(const ToyCorpusConfig& cfg, int first_index = 0);

/// Writes <id>.wav and <id>.csv per utterance and manifest.csv into `dir`.
void write_toy_corpus(const std::vector<ToyUtterance>& corpus, const std::filesystem::path& dir);

}  // namespace phode
