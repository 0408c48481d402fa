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

#include "phode/toy_experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "phode/spectrogram.hpp"

namespace phode {

const ToyCellResult& ToyExperimentResult::cell(Condition c, NoiseLevel n) const {
  for (const auto& r : cells)
    if (r.condition == c && r.noise == n) return r;
  throw std::out_of_range("toy experiment cell not evaluated");
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty sample");
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

ToyExperimentResult run_toy_experiment(const ToyExperimentConfig& cfg,
                                       const std::function<void(const std::string&)>& log) {
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  ToyExperimentResult out;

  const auto train_corpus = generate_toy_corpus(cfg.corpus, 0);
  std::vector<TrainingExample> examples;
  std::vector<Eigen::MatrixXd> frames;
  examples.reserve(train_corpus.size());
  for (const auto& u : train_corpus) {
    auto s = compute_spectrogram(u.waveform);
    examples.push_back({u.segmentation.sentence_id, s.frames, ctc_target(u.segmentation)});
    frames.push_back(std::move(s.frames));
  }

  out.weights = ModelWeights::random(cfg.shape, cfg.model_seed);
  fit_input_normalization(out.weights, frames);
  frames.clear();
  Trainer<float> trainer(out.weights, cfg.train);
  char line[160];
  out.epoch_losses = trainer.fit(examples, [&](int epoch, double loss) {
    std::snprintf(line, sizeof line, "epoch %d loss %.4f", epoch, loss);
    say(line);
    return true;
  });
  examples.clear();

  ToyCorpusConfig held_cfg = cfg.corpus;
  held_cfg.utterances = cfg.held_out;
  const auto held = generate_toy_corpus(held_cfg, cfg.held_out_first_index);

  SentenceOptions opt;
  opt.seed = cfg.pipeline_seed;
  opt.keep_traces = false;
  const std::size_t nc = cfg.conditions.size();
  std::vector<std::vector<ToyCellResult>> grid(nc);
  for (NoiseLevel n : cfg.noise_levels) {
    std::vector<std::vector<std::vector<int>>> refs(nc), hyps(nc);
    std::vector<ToyCellResult> cells(nc);
    for (std::size_t ci = 0; ci < nc; ++ci) cells[ci] = {.condition = cfg.conditions[ci], .noise = n};
    for (const auto& u : held) {
      std::vector<SentenceResult> rs;
      bool any_excluded = false;
      for (Condition c : cfg.conditions) {
        rs.push_back(process_sentence(u.waveform, u.segmentation, out.weights, c, n, opt));
        any_excluded = any_excluded || rs.back().alignment.excluded;
      }
      for (std::size_t ci = 0; ci < nc; ++ci) {
        const auto& r = rs[ci];
        auto& cell = cells[ci];
        std::vector<int> ref, hyp;
        for (const auto& s : r.target.segments) ref.push_back(s.phoneme.token_id());
        for (const auto& p : r.predictions) hyp.push_back(p.token.id());
        refs[ci].push_back(std::move(ref));
        hyps[ci].push_back(std::move(hyp));
        ++cell.sentences;
        // Exclusion in one condition removes the sentence from the timing
        // analyses of every condition at this noise level.
        if (any_excluded) {
          ++cell.excluded;
          continue;
        }
        for (const auto& w : extract_windows(r.alignment, r.input.hop_ms)) {
          const double rt = w.span_frames() * r.input.hop_ms;
          if (w.confused) {
            out.confused_rt_ms.push_back(rt);
            ++cell.confused_windows;
          } else {
            out.nonconfused_rt_ms.push_back(rt);
            ++cell.nonconfused_windows;
          }
        }
      }
    }
    for (std::size_t ci = 0; ci < nc; ++ci) {
      auto& cell = cells[ci];
      cell.token_error_rate = token_error_rate(refs[ci], hyps[ci]);
      std::snprintf(line, sizeof line, "%s %s TER %.4f excluded %d/%d",
                    std::string(to_string(cell.condition)).c_str(), std::string(to_string(n)).c_str(),
                    cell.token_error_rate, cell.excluded, cell.sentences);
      say(line);
      grid[ci].push_back(cell);
    }
  }
  for (auto& row : grid) out.cells.insert(out.cells.end(), row.begin(), row.end());
  return out;
}

}  // namespace phode
