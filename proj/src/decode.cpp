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

#include "phode/ctc.hpp"

namespace phode {

std::vector<PredictionEvent> ctc_greedy_decode(const PhonemePosterior& p, double frame_ms) {
  std::vector<PredictionEvent> events;
  const Eigen::Index T = p.probs.rows();
  Eigen::Index t = 0;
  while (t < T) {
    Eigen::Index k;
    p.probs.row(t).maxCoeff(&k);
    Eigen::Index end = t + 1, peak = t;
    for (; end < T; ++end) {
      Eigen::Index k2;
      p.probs.row(end).maxCoeff(&k2);
      if (k2 != k) break;
      if (p.probs(end, k) > p.probs(peak, k)) peak = end;
    }
    const Token tok = Token::from_id(static_cast<int>(k));
    if (tok.is_phoneme())
      events.push_back({tok, static_cast<int>(peak), static_cast<double>(peak) * frame_ms});
    t = end;
  }
  return events;
}

}  // namespace phode
