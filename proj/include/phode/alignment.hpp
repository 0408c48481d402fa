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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phode/ctc.hpp"
#include "phode/phoneme.hpp"

namespace phode {

enum class PairKind { match, sub, om, add };
std::string_view to_string(PairKind k);

/// One column pair; at most one side is a gap.
struct AlignmentPair {
  std::optional<PhonemeSegment> target;
  /// Index of the target in the spoken sequence, -1 for a gap.
  int target_index = -1;
  std::optional<PredictionEvent> predicted;

  PairKind kind() const;
  bool matched() const { return target && predicted; }
};

struct AlignedSentence {
  std::string sentence_id;
  std::vector<AlignmentPair> pairs;
  bool excluded = false;
  std::string exclusion_reason;

  /// Substitutions + omissions + additions.
  int edit_count() const;
  std::vector<PhonemeSegment> target_column() const;
  std::vector<PredictionEvent> predicted_column() const;
};

/// Unit-cost Levenshtein alignment. Traceback prefers match, then
/// substitution, then omission (target against a gap), then addition.
AlignedSentence levenshtein_align(std::span<const PhonemeSegment> target,
                                  std::span<const PredictionEvent> predicted);
AlignedSentence levenshtein_align(const SegmentedUtterance& target,
                                  std::span<const PredictionEvent> predicted);

/// Restores "spoken onset precedes prediction" for matched pairs by moving
/// adjacent gaps, scanning left to right. For a violating pair (X, Y):
///  - if Y can take the place of an omitted target from the run of omissions
///    directly before it whose onset precedes Y (same symbol preferred,
///    otherwise the closest), Y is re-paired there and X becomes an omission;
///  - else if the next pair is an addition (gap, Z) with X's onset before Z,
///    the gap moves left: (gap, Y), (X, Z).
/// Pairs with no adjacent gap to move are left for exclude_if_inverted.
AlignedSentence correct_alignment(AlignedSentence a);

/// Marks the sentence excluded if any matched pair still has its prediction
/// at or before the spoken onset.
AlignedSentence exclude_if_inverted(AlignedSentence a);

/// Exclusion of either condition of a sentence excludes both.
void propagate_exclusion(AlignedSentence& nh, AlignedSentence& ci);

struct UtteranceWindow {
  std::string sentence_id;
  int target_index = 0;
  Phoneme phoneme{0};
  Phoneme partner{0};
  int onset_frame = 0;
  int prediction_frame = 0;
  double onset_ms = 0.0;
  double prediction_ms = 0.0;
  bool confused = false;
  /// Set by the dynamics analysis from bigram statistics.
  bool probable = false;

  int span_frames() const { return prediction_frame - onset_frame; }
};

/// One window per matched pair of a retained sentence; onset frame is
/// floor(onset_ms / frame_ms).
std::vector<UtteranceWindow> extract_windows(const AlignedSentence& a, double frame_ms = 10.0);

/// Unit-cost edit distance.
int edit_distance(std::span<const int> a, std::span<const int> b);

/// Total edit distance over total reference length.
double token_error_rate(const std::vector<std::vector<int>>& references,
                        const std::vector<std::vector<int>>& hypotheses);

/// CSV rows sentence_id,pair_index,target,predicted,target_onset_ms,pred_time_ms,kind.
std::string alignment_csv_header();
std::string format_alignment_csv(const AlignedSentence& a);

}  // namespace phode
