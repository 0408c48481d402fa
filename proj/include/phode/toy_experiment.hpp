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

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "phode/augment.hpp"
#include "phode/model.hpp"
#include "phode/pipeline.hpp"
#include "phode/toy_corpus.hpp"
#include "phode/train.hpp"

namespace phode {

/// Train-and-evaluate recipe on the synthetic toy language.
struct ToyExperimentConfig {
  ToyCorpusConfig corpus{.utterances = 240, .seed = 1};
  int held_out = 60;
  /// Held-out ids start here so they never collide with training ids.
  int held_out_first_index = 10000;
  ModelShape shape{.layers = 3, .hidden = 32};
  std::uint64_t model_seed = 7;
  TrainConfig train{.learning_rate = 2e-3, .batch_size = 16, .epochs = 60, .clip_norm = 5.0, .seed = 3};
  std::uint64_t pipeline_seed = 5;
  std::vector<Condition> conditions{Condition::nh, Condition::ci};
  std::vector<NoiseLevel> noise_levels{NoiseLevel::quiet, NoiseLevel::low, NoiseLevel::mid,
                                       NoiseLevel::high};
};

struct ToyCellResult {
  Condition condition = Condition::nh;
  NoiseLevel noise = NoiseLevel::quiet;
  double token_error_rate = 0.0;
  int sentences = 0;
  /// Sentences excluded in any condition at this noise level.
  int excluded = 0;
  int confused_windows = 0;
  int nonconfused_windows = 0;
};

struct ToyExperimentResult {
  std::vector<double> epoch_losses;
  std::vector<ToyCellResult> cells;
  /// Raw reaction times (onset to prediction) pooled over all cells, from
  /// sentences retained in every condition at their noise level.
  std::vector<double> confused_rt_ms;
  std::vector<double> nonconfused_rt_ms;
  ModelWeights weights;

  /// Throws std::out_of_range for a cell that was not evaluated.
  const ToyCellResult& cell(Condition c, NoiseLevel n) const;
};

double median(std::vector<double> v);

/// Progress lines (one per epoch and per evaluated cell) go to `log` if set.
ToyExperimentResult run_toy_experiment(const ToyExperimentConfig& cfg,
                                       const std::function<void(const std::string&)>& log = {});

}  // namespace phode
