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

#include <Eigen/Core>
#include <span>
#include <vector>

#include "phode/model.hpp"
#include "phode/phoneme.hpp"

namespace phode {

struct CtcResult {
  /// -log P(target | log_probs); +inf when the target cannot fit in T frames.
  double loss = 0.0;
  /// d loss / d log_probs (T x K); all zero when infeasible.
  Eigen::MatrixXd grad;
  bool feasible = true;
};

/// Minimum number of frames a CTC path for `target` needs: its length plus
/// one separating blank per adjacent repeated label.
int ctc_min_frames(std::span<const int> target);

/// Forward-backward in the log domain. `log_probs` rows are per-frame
/// log-distributions over K tokens, token 0 is the blank.
CtcResult ctc_loss(const Eigen::Ref<const Eigen::MatrixXd>& log_probs,
                   std::span<const int> target);

/// One emitted token of a greedy decode.
struct PredictionEvent {
  Token token = Token::blank();
  /// Frame of peak probability within the token's repeat run (0-based).
  int frame = 0;
  double time_ms = 0.0;
};

/// Per-frame argmax, collapse repeats, drop blanks and spaces.
std::vector<PredictionEvent> ctc_greedy_decode(const PhonemePosterior& p,
                                               double frame_ms = 10.0);

/// Phoneme tokens with a space token between consecutive words.
std::vector<int> ctc_target(const SegmentedUtterance& u, bool with_spaces = true);

}  // namespace phode
