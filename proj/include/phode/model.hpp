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
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "phode/phoneme.hpp"
#include "phode/spectrogram.hpp"

namespace phode {

/// Raised for malformed weights, shape mismatches and non-finite activations.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelShape {
  int layers = 5;
  int hidden = 500;
  int input = kSpectrogramChannels;
  int output = kNumTokens;

  /// Number of activation traces: input, LSTM/batch-norm pairs, logits.
  int num_traces() const { return 2 * layers + 2; }
  int logits_trace() const { return 2 * layers + 1; }
  /// Width of trace `index` (input, hidden or output size).
  int trace_width(int index) const;
  bool operator==(const ModelShape&) const = default;
};

template <typename S>
using MatrixX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VectorX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// One unidirectional LSTM layer. Gate rows are stacked input, forget, cell,
/// output (4H rows); `bias` is the sum of input and recurrent biases.
template <typename S>
struct LstmWeights {
  MatrixX<S> w_ih;
  MatrixX<S> w_hh;
  VectorX<S> bias;
};

template <typename S>
struct BatchNormWeights {
  VectorX<S> gamma;
  VectorX<S> beta;
  VectorX<S> running_mean;
  VectorX<S> running_var;
};

inline constexpr double kBatchNormEps = 1e-5;

/// LSTM stack -> batch norm after every LSTM -> fully connected -> softmax.
/// Spectrogram frames are standardized per channel as (x - input_shift) *
/// input_scale before the first layer.
template <typename S>
struct ModelWeightsT {
  ModelShape shape;
  VectorX<S> input_shift;
  VectorX<S> input_scale;
  std::vector<LstmWeights<S>> lstm;
  std::vector<BatchNormWeights<S>> norm;
  MatrixX<S> fc_w;
  VectorX<S> fc_b;

  static ModelWeightsT zeros(const ModelShape& shape);
  /// Uniform(-1/sqrt(H), 1/sqrt(H)) recurrent and output weights, identity
  /// batch norm and input normalization.
  static ModelWeightsT random(const ModelShape& shape, std::uint64_t seed);

  /// Throws ModelError on inconsistent shapes or non-positive running variance.
  void validate() const;

  template <typename T>
  ModelWeightsT<T> cast() const;

  /// Visits every trainable tensor in file order (batch-norm running
  /// statistics and input normalization are not trainable).
  template <typename F>
  void for_each_parameter(F&& f);
  template <typename F>
  void for_each_parameter(F&& f) const;
};

using ModelWeights = ModelWeightsT<float>;

/// Activations of one layer, rows are frames.
template <typename S>
struct LayerActivationTraceT {
  int layer_index = 0;
  MatrixX<S> values;
};
using LayerActivationTrace = LayerActivationTraceT<float>;

/// Per-frame token distribution (frames x 41).
struct PhonemePosterior {
  Eigen::MatrixXd probs;
  Eigen::MatrixXd log_probs;

  Eigen::Index num_frames() const { return probs.rows(); }
};

/// Numerically stable row-wise softmax in double precision.
PhonemePosterior softmax_rows(const Eigen::Ref<const Eigen::MatrixXd>& logits);

template <typename S>
struct ForwardResultT {
  std::vector<LayerActivationTraceT<S>> traces;
  PhonemePosterior posterior;
};
using ForwardResult = ForwardResultT<float>;

struct ForwardOptions {
  bool capture_traces = true;
};

/// Causal inference pass; batch norm uses running statistics. Each frame is
/// computed from that frame's input and the previous state only, so a prefix
/// of the input yields a bit-identical prefix of every trace.
template <typename S>
ForwardResultT<S> forward(const Eigen::Ref<const Eigen::MatrixXd>& frames,
                          const ModelWeightsT<S>& w, const ForwardOptions& opt = {});

template <typename S>
ForwardResultT<S> forward(const Spectrogram& x, const ModelWeightsT<S>& w,
                          const ForwardOptions& opt = {}) {
  return forward<S>(x.frames, w, opt);
}

/// Sets input normalization to the per-channel mean and 1/std over all frames.
template <typename S>
void fit_input_normalization(ModelWeightsT<S>& w, const std::vector<Eigen::MatrixXd>& frames);

/// Weight file: "PHODE1", u32 layers, hidden, input, output, then float32
/// row-major tensors: input_shift, input_scale, per layer w_ih, w_hh, bias,
/// gamma, beta, running_mean, running_var, then fc_w, fc_b.
void save_weights(const ModelWeights& w, const std::filesystem::path& path);
ModelWeights load_weights(const std::filesystem::path& path);

/// Activation dump: "PHODEACT", u32 trace count, then per trace u32 layer
/// index, u32 rows, u32 cols and float32 row-major values.
void save_activations(const std::vector<LayerActivationTrace>& traces,
                      const std::filesystem::path& path);
std::vector<LayerActivationTrace> load_activations(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

template <typename S>
template <typename T>
ModelWeightsT<T> ModelWeightsT<S>::cast() const {
  ModelWeightsT<T> out;
  out.shape = shape;
  out.input_shift = input_shift.template cast<T>();
  out.input_scale = input_scale.template cast<T>();
  for (const auto& l : lstm)
    out.lstm.push_back({l.w_ih.template cast<T>(), l.w_hh.template cast<T>(),
                        l.bias.template cast<T>()});
  for (const auto& n : norm)
    out.norm.push_back({n.gamma.template cast<T>(), n.beta.template cast<T>(),
                        n.running_mean.template cast<T>(), n.running_var.template cast<T>()});
  out.fc_w = fc_w.template cast<T>();
  out.fc_b = fc_b.template cast<T>();
  return out;
}

template <typename S>
template <typename F>
void ModelWeightsT<S>::for_each_parameter(F&& f) {
  for (std::size_t i = 0; i < lstm.size(); ++i) {
    f(lstm[i].w_ih);
    f(lstm[i].w_hh);
    f(lstm[i].bias);
    f(norm[i].gamma);
    f(norm[i].beta);
  }
  f(fc_w);
  f(fc_b);
}

template <typename S>
template <typename F>
void ModelWeightsT<S>::for_each_parameter(F&& f) const {
  const_cast<ModelWeightsT&>(*this).for_each_parameter(
      [&](const auto& t) { f(t); });
}

}  // namespace phode
