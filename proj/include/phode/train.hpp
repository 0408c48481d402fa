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
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "phode/model.hpp"

namespace phode {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 1.5e-4;
  /// L2 penalty added to the gradient before the Adam moments (coupled decay).
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 64;
  int epochs = 30;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
  double batch_norm_momentum = 0.1;
  std::uint64_t seed = 0;
};

struct TrainingExample {
  std::string id;
  Eigen::MatrixXd frames;
  std::vector<int> target;
};

template <typename S>
struct BatchGradient {
  /// Mean CTC loss over the usable utterances.
  double loss = 0.0;
  int used = 0;
  /// Utterances whose target cannot fit in their frame count.
  int skipped = 0;
  ModelWeightsT<S> grad;
  /// Batch statistics per layer (mean, unbiased variance) for the running
  /// estimates.
  std::vector<VectorX<S>> batch_mean;
  std::vector<VectorX<S>> batch_var;
};

/// Training-mode forward (batch norm over all frames of the batch) and full
/// backpropagation through time.
template <typename S>
BatchGradient<S> batch_gradient(const ModelWeightsT<S>& w,
                                std::span<const TrainingExample* const> batch);

template <typename S>
class Trainer {
 public:
  Trainer(ModelWeightsT<S>& weights, TrainConfig cfg);

  /// One Adam update; returns the batch loss. Throws TrainingError on a
  /// non-finite loss or gradient.
  double step(std::span<const TrainingExample* const> batch);

  /// Shuffled mini-batch epochs; returns the mean loss of every epoch.
  /// `on_epoch(epoch, loss)` may return false to stop early.
  std::vector<double> fit(const std::vector<TrainingExample>& data,
                          const std::function<bool(int, double)>& on_epoch = {});

  const ModelWeightsT<S>& weights() const { return w_; }
  long steps() const { return t_; }

 private:
  ModelWeightsT<S>& w_;
  TrainConfig cfg_;
  ModelWeightsT<S> m_, v_;
  long t_ = 0;
};

}  // namespace phode
