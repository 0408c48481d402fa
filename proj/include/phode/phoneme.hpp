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
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace phode {

/// Number of phonemes in the stress-stripped ARPAbet inventory.
inline constexpr int kNumPhonemes = 39;
/// Output alphabet of the recognizer: blank, 39 phonemes, space.
inline constexpr int kNumTokens = 41;
inline constexpr int kBlankId = 0;
inline constexpr int kSpaceId = 40;

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PhonemeClass { vowel, consonant };

std::string_view to_string(PhonemeClass c);

/// One of the 39 ARPAbet phonemes. Indices follow alphabetical order of the
/// symbol, so token id = index + 1.
class Phoneme {
 public:
  /// Throws std::out_of_range for index outside [0, 39).
  explicit Phoneme(int index);

  static std::optional<Phoneme> from_symbol(std::string_view symbol);
  /// Throws ValidationError if the symbol is not in the inventory.
  static Phoneme parse(std::string_view symbol);

  int index() const { return index_; }
  int token_id() const { return index_ + 1; }
  std::string_view symbol() const;
  PhonemeClass phoneme_class() const;

  friend bool operator==(Phoneme a, Phoneme b) = default;
  friend auto operator<=>(Phoneme a, Phoneme b) = default;

 private:
  std::uint8_t index_;
};

std::ostream& operator<<(std::ostream& os, Phoneme p);

PhonemeClass classify(Phoneme p);

/// The full inventory in id order.
const std::array<Phoneme, kNumPhonemes>& all_phonemes();

/// Element of the 41-symbol recognizer alphabet.
class Token {
 public:
  enum class Kind { phoneme, blank, space };

  static Token blank() { return Token(kBlankId); }
  static Token space() { return Token(kSpaceId); }
  static Token of(Phoneme p) { return Token(p.token_id()); }
  /// Throws std::out_of_range for id outside [0, 41).
  static Token from_id(int id);

  int id() const { return id_; }
  Kind kind() const;
  bool is_phoneme() const { return kind() == Kind::phoneme; }
  /// Precondition: is_phoneme().
  Phoneme phoneme() const { return Phoneme(id_ - 1); }
  std::string_view symbol() const;

  friend bool operator==(Token a, Token b) = default;

 private:
  explicit Token(int id) : id_(id) {}
  int id_;
};

struct PhonemeSegment {
  Phoneme phoneme;
  double onset_ms;
  double offset_ms;
  int word_index;
};

struct Word {
  std::string text;
  int phoneme_count;
};

struct SegmentedUtterance {
  std::string sentence_id;
  std::filesystem::path waveform_path;
  std::vector<PhonemeSegment> segments;
  std::vector<Word> words;

  /// Spoken phoneme sequence in order.
  std::vector<Phoneme> phonemes() const;
  /// Index of the first segment of each word.
  std::vector<int> word_starts() const;
};

/// Checks every segmentation invariant; throws ValidationError naming the
/// offending row.
void validate(const SegmentedUtterance& u);

/// Builds the word list from segment word indices. Word indices must be
/// non-decreasing; gaps in the numbering produce no empty words.
std::vector<Word> words_from_segments(std::span<const PhonemeSegment> segments,
                                      std::span<const std::string> texts = {});

SegmentedUtterance parse_segmentation(std::string_view text);
SegmentedUtterance load_segmentation(const std::filesystem::path& path);

/// Canonical CSV form: header row, shortest round-trip numbers, '\n' endings.
/// The optional `word` column is emitted only when any word has text.
std::string format_segmentation(const SegmentedUtterance& u);
void save_segmentation(const SegmentedUtterance& u,
                       const std::filesystem::path& path);

struct ManifestEntry {
  std::string sentence_id;
  std::filesystem::path wav_path;
  std::filesystem::path seg_path;
};

/// Relative paths are resolved against the manifest's directory.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
void save_manifest(std::span<const ManifestEntry> entries,
                   const std::filesystem::path& path);

struct ClassDurations {
  double vowel_ms = 0.0;
  double consonant_ms = 0.0;

  double for_class(PhonemeClass c) const {
    return c == PhonemeClass::vowel ? vowel_ms : consonant_ms;
  }
};

/// Mean segment duration per phoneme class over a corpus. A class with no
/// segments gets 0.
ClassDurations mean_class_durations(std::span<const SegmentedUtterance> corpus);

/// Shortest decimal form that parses back to the same double.
std::string format_number(double v);

std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace phode
