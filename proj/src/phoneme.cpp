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

#include "phode/phoneme.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <utility>

namespace phode {
namespace {

constexpr std::array<std::string_view, kNumPhonemes> kSymbols = {
    "AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",  "DH",
    "EH", "ER", "EY", "F",  "G",  "HH", "IH", "IY", "JH", "K",
    "L",  "M",  "N",  "NG", "OW", "OY", "P",  "R",  "S",  "SH",
    "T",  "TH", "UH", "UW", "V",  "W",  "Y",  "Z",  "ZH"};

constexpr std::array<std::string_view, 15> kVowels = {
    "AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER",
    "EY", "IH", "IY", "OW", "OY", "UH", "UW"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view field, std::size_t line, const char* name) {
  field = trim(field);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw ParseError(std::string("bad ") + name + " '" + std::string(field) + "'", line);
  return v;
}

int parse_int(std::string_view field, std::size_t line, const char* name) {
  field = trim(field);
  int v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw ParseError(std::string("bad ") + name + " '" + std::string(field) + "'", line);
  return v;
}

std::vector<std::string> read_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    lines.emplace_back(trim(text.substr(start, end - start)));
    start = end + 1;
  }
  return lines;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string_view to_string(PhonemeClass c) {
  return c == PhonemeClass::vowel ? "vowel" : "consonant";
}

Phoneme::Phoneme(int index) {
  if (index < 0 || index >= kNumPhonemes)
    throw std::out_of_range("phoneme index " + std::to_string(index));
  index_ = static_cast<std::uint8_t>(index);
}

std::optional<Phoneme> Phoneme::from_symbol(std::string_view symbol) {
  auto it = std::lower_bound(kSymbols.begin(), kSymbols.end(), symbol);
  if (it == kSymbols.end() || *it != symbol) return std::nullopt;
  return Phoneme(static_cast<int>(it - kSymbols.begin()));
}

Phoneme Phoneme::parse(std::string_view symbol) {
  auto p = from_symbol(symbol);
  if (!p) throw ValidationError("unknown phoneme '" + std::string(symbol) + "'");
  return *p;
}

std::string_view Phoneme::symbol() const { return kSymbols[index_]; }

PhonemeClass Phoneme::phoneme_class() const {
  return std::binary_search(kVowels.begin(), kVowels.end(), symbol())
             ? PhonemeClass::vowel
             : PhonemeClass::consonant;
}

std::ostream& operator<<(std::ostream& os, Phoneme p) { return os << p.symbol(); }

PhonemeClass classify(Phoneme p) { return p.phoneme_class(); }

const std::array<Phoneme, kNumPhonemes>& all_phonemes() {
  static const auto table = []<std::size_t... I>(std::index_sequence<I...>) {
    return std::array<Phoneme, kNumPhonemes>{Phoneme(static_cast<int>(I))...};
  }(std::make_index_sequence<kNumPhonemes>{});
  return table;
}

Token Token::from_id(int id) {
  if (id < 0 || id >= kNumTokens)
    throw std::out_of_range("token id " + std::to_string(id));
  return Token(id);
}

Token::Kind Token::kind() const {
  if (id_ == kBlankId) return Kind::blank;
  if (id_ == kSpaceId) return Kind::space;
  return Kind::phoneme;
}

std::string_view Token::symbol() const {
  switch (kind()) {
    case Kind::blank:
      return "<blank>";
    case Kind::space:
      return "<space>";
    default:
      return phoneme().symbol();
  }
}

std::vector<Phoneme> SegmentedUtterance::phonemes() const {
  std::vector<Phoneme> out;
  out.reserve(segments.size());
  for (const auto& s : segments) out.push_back(s.phoneme);
  return out;
}

std::vector<int> SegmentedUtterance::word_starts() const {
  std::vector<int> starts;
  int pos = 0;
  for (const auto& w : words) {
    starts.push_back(pos);
    pos += w.phoneme_count;
  }
  return starts;
}

void validate(const SegmentedUtterance& u) {
  for (std::size_t i = 0; i < u.segments.size(); ++i) {
    const auto& s = u.segments[i];
    if (!(s.onset_ms < s.offset_ms))
      throw ValidationError("segment " + std::to_string(i) + ": onset " +
                            format_number(s.onset_ms) + " not before offset " +
                            format_number(s.offset_ms));
    if (i > 0) {
      const auto& prev = u.segments[i - 1];
      if (s.onset_ms < prev.offset_ms)
        throw ValidationError("segment " + std::to_string(i) + " overlaps previous segment");
      if (s.word_index < prev.word_index)
        throw ValidationError("segment " + std::to_string(i) + ": word_index decreases");
    }
  }
  int total = 0;
  for (const auto& w : u.words) total += w.phoneme_count;
  if (total != static_cast<int>(u.segments.size()))
    throw ValidationError("word phoneme counts sum to " + std::to_string(total) +
                          " but there are " + std::to_string(u.segments.size()) +
                          " segments");
}

std::vector<Word> words_from_segments(std::span<const PhonemeSegment> segments,
                                      std::span<const std::string> texts) {
  std::vector<Word> words;
  int current = -1;
  for (const auto& s : segments) {
    if (words.empty() || s.word_index != current) {
      current = s.word_index;
      words.push_back({"", 0});
    }
    ++words.back().phoneme_count;
  }
  for (std::size_t i = 0; i < words.size() && i < texts.size(); ++i)
    words[i].text = texts[i];
  return words;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.emplace_back(trim(line.substr(start)));
      break;
    }
    fields.emplace_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return fields;
}

SegmentedUtterance parse_segmentation(std::string_view text) {
  SegmentedUtterance u;
  auto lines = read_lines(text);
  std::size_t first = 0;
  while (first < lines.size() && lines[first].empty()) ++first;
  if (first == lines.size()) return u;

  auto header = split_csv_line(lines[first]);
  const bool has_word_col = header.size() == 5;
  if (header.size() < 4 || header.size() > 5 || header[0] != "phoneme" ||
      header[1] != "onset_ms" || header[2] != "offset_ms" || header[3] != "word_index" ||
      (has_word_col && header[4] != "word"))
    throw ParseError("expected header 'phoneme,onset_ms,offset_ms,word_index[,word]'",
                     first + 1);

  std::vector<std::string> texts;
  for (std::size_t i = first + 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::size_t lineno = i + 1;
    auto f = split_csv_line(lines[i]);
    if (f.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(f.size()),
                       lineno);
    auto p = Phoneme::from_symbol(f[0]);
    if (!p) throw ParseError("unknown phoneme '" + f[0] + "'", lineno);
    PhonemeSegment seg{*p, parse_double(f[1], lineno, "onset_ms"),
                       parse_double(f[2], lineno, "offset_ms"),
                       parse_int(f[3], lineno, "word_index")};
    if (seg.word_index < 0) throw ParseError("negative word_index", lineno);
    if (has_word_col &&
        (u.segments.empty() || u.segments.back().word_index != seg.word_index))
      texts.push_back(f[4]);
    u.segments.push_back(seg);
  }
  u.words = words_from_segments(u.segments, texts);
  validate(u);
  return u;
}

SegmentedUtterance load_segmentation(const std::filesystem::path& path) {
  auto u = parse_segmentation(read_file(path));
  u.sentence_id = path.stem().string();
  return u;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string format_segmentation(const SegmentedUtterance& u) {
  const bool with_text = std::any_of(u.words.begin(), u.words.end(),
                                     [](const Word& w) { return !w.text.empty(); });
  std::string out = with_text ? "phoneme,onset_ms,offset_ms,word_index,word\n"
                              : "phoneme,onset_ms,offset_ms,word_index\n";
  std::size_t word = 0;
  int seen_in_word = 0;
  for (const auto& s : u.segments) {
    out += s.phoneme.symbol();
    out += ',' + format_number(s.onset_ms) + ',' + format_number(s.offset_ms) + ',' +
           std::to_string(s.word_index);
    if (with_text) {
      while (word < u.words.size() && seen_in_word >= u.words[word].phoneme_count) {
        ++word;
        seen_in_word = 0;
      }
      out += ',';
      if (word < u.words.size()) out += u.words[word].text;
      ++seen_in_word;
    }
    out += '\n';
  }
  return out;
}

void save_segmentation(const SegmentedUtterance& u, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format_segmentation(u);
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  auto lines = read_lines(read_file(path));
  const auto base = path.parent_path();
  std::vector<ManifestEntry> entries;
  bool header_seen = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto f = split_csv_line(lines[i]);
    if (!header_seen) {
      if (f.size() != 3 || f[0] != "sentence_id" || f[1] != "wav_path" || f[2] != "seg_path")
        throw ParseError("expected header 'sentence_id,wav_path,seg_path'", i + 1);
      header_seen = true;
      continue;
    }
    if (f.size() != 3) throw ParseError("expected 3 fields", i + 1);
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp : base / fp;
    };
    entries.push_back({f[0], resolve(f[1]), resolve(f[2])});
  }
  return entries;
}

void save_manifest(std::span<const ManifestEntry> entries,
                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "sentence_id,wav_path,seg_path\n";
  for (const auto& e : entries)
    out << e.sentence_id << ',' << e.wav_path.string() << ',' << e.seg_path.string() << '\n';
}

ClassDurations mean_class_durations(std::span<const SegmentedUtterance> corpus) {
  double sum[2] = {0, 0};
  long count[2] = {0, 0};
  for (const auto& u : corpus)
    for (const auto& s : u.segments) {
      int k = s.phoneme.phoneme_class() == PhonemeClass::vowel ? 0 : 1;
      sum[k] += s.offset_ms - s.onset_ms;
      ++count[k];
    }
  ClassDurations d;
  if (count[0]) d.vowel_ms = sum[0] / static_cast<double>(count[0]);
  if (count[1]) d.consonant_ms = sum[1] / static_cast<double>(count[1]);
  return d;
}

}  // namespace phode
