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

#include "phode/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace phode {

std::string_view to_string(PairKind k) {
  switch (k) {
    case PairKind::match: return "match";
    case PairKind::sub: return "sub";
    case PairKind::om: return "om";
    case PairKind::add: return "add";
  }
  return "?";
}

PairKind AlignmentPair::kind() const {
  if (target && predicted)
    return Token::of(target->phoneme) == predicted->token ? PairKind::match : PairKind::sub;
  if (target) return PairKind::om;
  if (predicted) return PairKind::add;
  throw std::logic_error("alignment pair with two gaps");
}

int AlignedSentence::edit_count() const {
  int n = 0;
  for (const auto& p : pairs) n += p.kind() != PairKind::match;
  return n;
}

std::vector<PhonemeSegment> AlignedSentence::target_column() const {
  std::vector<PhonemeSegment> out;
  for (const auto& p : pairs)
    if (p.target) out.push_back(*p.target);
  return out;
}

std::vector<PredictionEvent> AlignedSentence::predicted_column() const {
  std::vector<PredictionEvent> out;
  for (const auto& p : pairs)
    if (p.predicted) out.push_back(*p.predicted);
  return out;
}

AlignedSentence levenshtein_align(std::span<const PhonemeSegment> target,
                                  std::span<const PredictionEvent> predicted) {
  const std::size_t n = target.size(), m = predicted.size();
  for (const auto& e : predicted)
    if (!e.token.is_phoneme())
      throw std::invalid_argument("predictions must not contain blanks or spaces");
  std::vector<int> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> int& { return d[i * (m + 1) + j]; };
  auto same = [&](std::size_t i, std::size_t j) {
    return Token::of(target[i].phoneme) == predicted[j].token;
  };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (same(i - 1, j - 1) ? 0 : 1), at(i - 1, j) + 1,
                           at(i, j - 1) + 1});

  AlignedSentence out;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    AlignmentPair p;
    if (i > 0 && j > 0 && same(i - 1, j - 1) && at(i, j) == at(i - 1, j - 1)) {
      --i, --j;
      p.target = target[i];
      p.target_index = static_cast<int>(i);
      p.predicted = predicted[j];
    } else if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + 1) {
      --i, --j;
      p.target = target[i];
      p.target_index = static_cast<int>(i);
      p.predicted = predicted[j];
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      --i;
      p.target = target[i];
      p.target_index = static_cast<int>(i);
    } else {
      --j;
      p.predicted = predicted[j];
    }
    out.pairs.push_back(std::move(p));
  }
  std::reverse(out.pairs.begin(), out.pairs.end());
  return out;
}

AlignedSentence levenshtein_align(const SegmentedUtterance& target,
                                  std::span<const PredictionEvent> predicted) {
  AlignedSentence a = levenshtein_align(std::span<const PhonemeSegment>(target.segments), predicted);
  a.sentence_id = target.sentence_id;
  return a;
}

namespace {

bool inverted(const AlignmentPair& p) {
  return p.matched() && !(p.target->onset_ms < p.predicted->time_ms);
}

}  // namespace

AlignedSentence correct_alignment(AlignedSentence a) {
  auto& pairs = a.pairs;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!inverted(pairs[i])) continue;
    const PredictionEvent y = *pairs[i].predicted;

    // Run of omission pairs directly before i.
    std::size_t run_begin = i;
    while (run_begin > 0 && pairs[run_begin - 1].kind() == PairKind::om) --run_begin;
    std::optional<std::size_t> best;
    for (std::size_t k = i; k-- > run_begin;) {
      if (!(pairs[k].target->onset_ms < y.time_ms)) continue;
      const bool equal = Token::of(pairs[k].target->phoneme) == y.token;
      if (!best) best = k;
      if (equal) {
        best = k;
        break;
      }
    }
    if (best) {
      pairs[*best].predicted = y;
      pairs[i].predicted.reset();
      continue;
    }
    if (i + 1 < pairs.size() && pairs[i + 1].kind() == PairKind::add &&
        pairs[i].target->onset_ms < pairs[i + 1].predicted->time_ms) {
      pairs[i + 1].target = pairs[i].target;
      pairs[i + 1].target_index = pairs[i].target_index;
      pairs[i].target.reset();
      pairs[i].target_index = -1;
    }
  }
  return a;
}

AlignedSentence exclude_if_inverted(AlignedSentence a) {
  for (const auto& p : a.pairs)
    if (inverted(p)) {
      a.excluded = true;
      a.exclusion_reason = "prediction precedes target";
      break;
    }
  return a;
}

void propagate_exclusion(AlignedSentence& nh, AlignedSentence& ci) {
  if (nh.excluded && !ci.excluded) {
    ci.excluded = true;
    ci.exclusion_reason = nh.exclusion_reason + " (paired condition)";
  } else if (ci.excluded && !nh.excluded) {
    nh.excluded = true;
    nh.exclusion_reason = ci.exclusion_reason + " (paired condition)";
  }
}

std::vector<UtteranceWindow> extract_windows(const AlignedSentence& a, double frame_ms) {
  std::vector<UtteranceWindow> out;
  if (a.excluded) return out;
  for (const auto& p : a.pairs) {
    if (!p.matched()) continue;
    UtteranceWindow w;
    w.sentence_id = a.sentence_id;
    w.target_index = p.target_index;
    w.phoneme = p.target->phoneme;
    w.partner = p.predicted->token.phoneme();
    w.onset_ms = p.target->onset_ms;
    w.prediction_ms = p.predicted->time_ms;
    w.onset_frame = static_cast<int>(std::floor(p.target->onset_ms / frame_ms));
    w.prediction_frame = p.predicted->frame;
    w.confused = w.phoneme != w.partner;
    out.push_back(w);
  }
  return out;
}

int edit_distance(std::span<const int> a, std::span<const int> b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1), prev[j] + 1, cur[j - 1] + 1});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double token_error_rate(const std::vector<std::vector<int>>& references,
                        const std::vector<std::vector<int>>& hypotheses) {
  if (references.size() != hypotheses.size())
    throw std::invalid_argument("reference and hypothesis counts differ");
  long errors = 0, length = 0;
  for (std::size_t i = 0; i < references.size(); ++i) {
    errors += edit_distance(references[i], hypotheses[i]);
    length += static_cast<long>(references[i].size());
  }
  return length ? static_cast<double>(errors) / static_cast<double>(length) : 0.0;
}

std::string alignment_csv_header() {
  return "sentence_id,pair_index,target,predicted,target_onset_ms,pred_time_ms,kind\n";
}

std::string format_alignment_csv(const AlignedSentence& a) {
  std::ostringstream os;
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    const auto& p = a.pairs[i];
    os << a.sentence_id << ',' << i << ',';
    os << (p.target ? p.target->phoneme.symbol() : std::string_view("-")) << ',';
    os << (p.predicted ? p.predicted->token.symbol() : std::string_view("-")) << ',';
    os << (p.target ? format_number(p.target->onset_ms) : "") << ',';
    os << (p.predicted ? format_number(p.predicted->time_ms) : "") << ',';
    os << to_string(p.kind()) << '\n';
  }
  return os.str();
}

}  // namespace phode
