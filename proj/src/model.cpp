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

#include <cmath>
#include <string>

#include "phode/model.hpp"
#include "phode/rng.hpp"

namespace phode {

int ModelShape::trace_width(int index) const {
  if (index < 0 || index >= num_traces())
    throw std::out_of_range("trace index " + std::to_string(index));
  if (index == 0) return input;
  if (index == logits_trace()) return output;
  return hidden;
}

template <typename S>
ModelWeightsT<S> ModelWeightsT<S>::zeros(const ModelShape& shape) {
  if (shape.layers < 1 || shape.hidden < 1 || shape.input < 1 || shape.output < 1)
    throw ModelError("model dimensions must be positive");
  ModelWeightsT w;
  w.shape = shape;
  const int h = shape.hidden;
  w.input_shift = VectorX<S>::Zero(shape.input);
  w.input_scale = VectorX<S>::Ones(shape.input);
  for (int l = 0; l < shape.layers; ++l) {
    const int in = l == 0 ? shape.input : h;
    w.lstm.push_back({MatrixX<S>::Zero(4 * h, in), MatrixX<S>::Zero(4 * h, h),
                      VectorX<S>::Zero(4 * h)});
    w.norm.push_back({VectorX<S>::Ones(h), VectorX<S>::Zero(h), VectorX<S>::Zero(h),
                      VectorX<S>::Ones(h)});
  }
  w.fc_w = MatrixX<S>::Zero(shape.output, h);
  w.fc_b = VectorX<S>::Zero(shape.output);
  return w;
}

template <typename S>
ModelWeightsT<S> ModelWeightsT<S>::random(const ModelShape& shape, std::uint64_t seed) {
  ModelWeightsT w = zeros(shape);
  Rng rng(derive_seed(seed, "model-init"));
  const double k = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
  auto fill = [&](auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(rng.uniform(-k, k));
  };
  for (auto& l : w.lstm) {
    fill(l.w_ih);
    fill(l.w_hh);
    fill(l.bias);
  }
  fill(w.fc_w);
  fill(w.fc_b);
  return w;
}

template <typename S>
void ModelWeightsT<S>::validate() const {
  const int h = shape.hidden;
  auto fail = [](const std::string& what) { throw ModelError("invalid weights: " + what); };
  if (static_cast<int>(lstm.size()) != shape.layers || static_cast<int>(norm.size()) != shape.layers)
    fail("layer count");
  if (input_shift.size() != shape.input || input_scale.size() != shape.input)
    fail("input normalization size");
  for (int l = 0; l < shape.layers; ++l) {
    const int in = l == 0 ? shape.input : h;
    const auto& L = lstm[l];
    if (L.w_ih.rows() != 4 * h || L.w_ih.cols() != in) fail("w_ih of layer " + std::to_string(l));
    if (L.w_hh.rows() != 4 * h || L.w_hh.cols() != h) fail("w_hh of layer " + std::to_string(l));
    if (L.bias.size() != 4 * h) fail("bias of layer " + std::to_string(l));
    const auto& N = norm[l];
    if (N.gamma.size() != h || N.beta.size() != h || N.running_mean.size() != h ||
        N.running_var.size() != h)
      fail("batch norm of layer " + std::to_string(l));
    if (!(N.running_var.array() > S(0)).all())
      fail("non-positive running variance in layer " + std::to_string(l));
  }
  if (fc_w.rows() != shape.output || fc_w.cols() != h || fc_b.size() != shape.output)
    fail("output layer");
}

PhonemePosterior softmax_rows(const Eigen::Ref<const Eigen::MatrixXd>& logits) {
  PhonemePosterior p;
  p.log_probs.resize(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const double m = logits.row(t).maxCoeff();
    const double lse = m + std::log((logits.row(t).array() - m).exp().sum());
    p.log_probs.row(t) = logits.row(t).array() - lse;
  }
  p.probs = p.log_probs.array().exp();
  return p;
}

namespace {

template <typename S>
S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

template <typename S>
void check_finite(const Eigen::Ref<const VectorX<S>>& v, int layer, Eigen::Index frame) {
  if (!v.allFinite())
    throw ModelError("non-finite activation in layer " + std::to_string(layer) + " at frame " +
                     std::to_string(frame));
}

}  // namespace

template <typename S>
ForwardResultT<S> forward(const Eigen::Ref<const Eigen::MatrixXd>& frames,
                          const ModelWeightsT<S>& w, const ForwardOptions& opt) {
  w.validate();
  const ModelShape& shape = w.shape;
  if (frames.cols() != shape.input)
    throw ModelError("input has " + std::to_string(frames.cols()) + " channels, model expects " +
                     std::to_string(shape.input));
  const Eigen::Index T = frames.rows();
  const int H = shape.hidden;

  ForwardResultT<S> out;
  if (opt.capture_traces) {
    out.traces.resize(shape.num_traces());
    for (int i = 0; i < shape.num_traces(); ++i) {
      out.traces[i].layer_index = i;
      out.traces[i].values.resize(T, shape.trace_width(i));
    }
    out.traces[0].values = frames.cast<S>();
  }

  std::vector<VectorX<S>> h(shape.layers, VectorX<S>::Zero(H));
  std::vector<VectorX<S>> c(shape.layers, VectorX<S>::Zero(H));
  std::vector<VectorX<S>> bn_scale(shape.layers);
  for (int l = 0; l < shape.layers; ++l)
    bn_scale[l] = w.norm[l].gamma.array() /
                  (w.norm[l].running_var.array() + S(kBatchNormEps)).sqrt();

  Eigen::MatrixXd logits(T, shape.output);
  VectorX<S> x, gates(4 * H), y;
  for (Eigen::Index t = 0; t < T; ++t) {
    x = ((frames.row(t).transpose().cast<S>() - w.input_shift).array() * w.input_scale.array())
            .matrix();
    check_finite<S>(x, 0, t);
    for (int l = 0; l < shape.layers; ++l) {
      const auto& L = w.lstm[l];
      gates.noalias() = L.w_ih * x;
      gates.noalias() += L.w_hh * h[l];
      gates += L.bias;
      for (int j = 0; j < H; ++j) {
        const S ig = sigmoid(gates[j]);
        const S fg = sigmoid(gates[H + j]);
        const S gg = std::tanh(gates[2 * H + j]);
        const S og = sigmoid(gates[3 * H + j]);
        c[l][j] = fg * c[l][j] + ig * gg;
        h[l][j] = og * std::tanh(c[l][j]);
      }
      check_finite<S>(h[l], 2 * l + 1, t);
      const auto& N = w.norm[l];
      y = ((h[l] - N.running_mean).array() * bn_scale[l].array() + N.beta.array()).matrix();
      check_finite<S>(y, 2 * l + 2, t);
      if (opt.capture_traces) {
        out.traces[2 * l + 1].values.row(t) = h[l].transpose();
        out.traces[2 * l + 2].values.row(t) = y.transpose();
      }
      x.swap(y);
    }
    VectorX<S> z = w.fc_b;
    z.noalias() += w.fc_w * x;
    check_finite<S>(z, shape.logits_trace(), t);
    if (opt.capture_traces) out.traces[shape.logits_trace()].values.row(t) = z.transpose();
    logits.row(t) = z.transpose().template cast<double>();
  }
  out.posterior = softmax_rows(logits);
  return out;
}

template <typename S>
void fit_input_normalization(ModelWeightsT<S>& w, const std::vector<Eigen::MatrixXd>& frames) {
  const int C = w.shape.input;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(C), sq = Eigen::VectorXd::Zero(C);
  double n = 0;
  for (const auto& f : frames) {
    if (f.cols() != C) throw ModelError("normalization data has wrong channel count");
    sum += f.colwise().sum().transpose();
    sq += f.array().square().colwise().sum().matrix().transpose();
    n += static_cast<double>(f.rows());
  }
  if (n < 2) throw ModelError("need at least two frames to fit input normalization");
  const Eigen::VectorXd mean = sum / n;
  const Eigen::VectorXd var = (sq / n - mean.cwiseAbs2()).cwiseMax(0.0);
  w.input_shift = mean.cast<S>();
  w.input_scale = (var.array() + 1e-6).rsqrt().matrix().cast<S>();
}

template struct ModelWeightsT<float>;
template struct ModelWeightsT<double>;
template ForwardResultT<float> forward(const Eigen::Ref<const Eigen::MatrixXd>&,
                                       const ModelWeightsT<float>&, const ForwardOptions&);
template ForwardResultT<double> forward(const Eigen::Ref<const Eigen::MatrixXd>&,
                                        const ModelWeightsT<double>&, const ForwardOptions&);
template void fit_input_normalization(ModelWeightsT<float>&, const std::vector<Eigen::MatrixXd>&);
template void fit_input_normalization(ModelWeightsT<double>&, const std::vector<Eigen::MatrixXd>&);

}  // namespace phode
