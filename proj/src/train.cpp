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

#include "phode/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "phode/ctc.hpp"
#include "phode/rng.hpp"

namespace phode {

namespace {

// Activations of one LSTM + batch-norm layer for a padded, time-major batch:
// row t * B + b holds frame t of utterance b.
template <typename S>
struct LayerCache {
  MatrixX<S> input;   // N x in
  MatrixX<S> gates;   // N x 4H, post-activation i, f, g, o
  MatrixX<S> cell;    // N x H
  MatrixX<S> hidden;  // N x H
  MatrixX<S> xhat;    // N x H
  VectorX<S> inv_std;
};

template <typename S>
S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

template <typename S>
void collect(ModelWeightsT<S>& w, std::vector<Eigen::Map<VectorX<S>>>& out) {
  w.for_each_parameter([&](auto& t) { out.emplace_back(t.data(), t.size()); });
}

}  // namespace

template <typename S>
BatchGradient<S> batch_gradient(const ModelWeightsT<S>& w,
                                std::span<const TrainingExample* const> batch) {
  w.validate();
  const ModelShape& shape = w.shape;
  const int H = shape.hidden;
  const int K = shape.output;

  BatchGradient<S> out;
  out.grad = ModelWeightsT<S>::zeros(shape);
  out.grad.for_each_parameter([](auto& t) { t.setZero(); });

  std::vector<const TrainingExample*> items;
  for (const TrainingExample* ex : batch) {
    if (ex->frames.cols() != shape.input)
      throw ModelError("training example " + ex->id + " has wrong channel count");
    if (!ex->frames.allFinite())
      throw TrainingError("non-finite input frames in utterance '" + ex->id + "'");
    if (ex->frames.rows() >= ctc_min_frames(ex->target) && ex->frames.rows() > 0)
      items.push_back(ex);
    else
      ++out.skipped;
  }
  out.used = static_cast<int>(items.size());
  if (items.empty()) return out;

  const Eigen::Index B = out.used;
  Eigen::Index tmax = 0;
  for (auto* ex : items) tmax = std::max(tmax, ex->frames.rows());
  const Eigen::Index N = tmax * B;
  std::vector<char> mask(N, 0);
  MatrixX<S> x = MatrixX<S>::Zero(N, shape.input);
  for (Eigen::Index b = 0; b < B; ++b)
    for (Eigen::Index t = 0; t < items[b]->frames.rows(); ++t) {
      mask[t * B + b] = 1;
      x.row(t * B + b) = ((items[b]->frames.row(t).transpose().template cast<S>() - w.input_shift)
                              .array() *
                          w.input_scale.array())
                             .matrix()
                             .transpose();
    }
  Eigen::Index valid = 0;
  for (char m : mask) valid += m;

  std::vector<LayerCache<S>> cache(shape.layers);
  for (int l = 0; l < shape.layers; ++l) {
    auto& C = cache[l];
    const auto& L = w.lstm[l];
    C.input = std::move(x);
    C.gates.resize(N, 4 * H);
    C.gates.noalias() = C.input * L.w_ih.transpose();
    C.gates.rowwise() += L.bias.transpose();
    C.cell.resize(N, H);
    C.hidden.resize(N, H);
    MatrixX<S> h_prev = MatrixX<S>::Zero(B, H), c_prev = MatrixX<S>::Zero(B, H);
    for (Eigen::Index t = 0; t < tmax; ++t) {
      auto g = C.gates.middleRows(t * B, B);
      g.noalias() += h_prev * L.w_hh.transpose();
      for (Eigen::Index b = 0; b < B; ++b)
        for (int j = 0; j < H; ++j) {
          const S ig = sigmoid(g(b, j));
          const S fg = sigmoid(g(b, H + j));
          const S gg = std::tanh(g(b, 2 * H + j));
          const S og = sigmoid(g(b, 3 * H + j));
          g(b, j) = ig;
          g(b, H + j) = fg;
          g(b, 2 * H + j) = gg;
          g(b, 3 * H + j) = og;
          const S c = fg * c_prev(b, j) + ig * gg;
          c_prev(b, j) = c;
          h_prev(b, j) = og * std::tanh(c);
        }
      C.cell.middleRows(t * B, B) = c_prev;
      C.hidden.middleRows(t * B, B) = h_prev;
    }

    VectorX<S> mean = VectorX<S>::Zero(H), var = VectorX<S>::Zero(H);
    for (Eigen::Index r = 0; r < N; ++r)
      if (mask[r]) mean += C.hidden.row(r).transpose();
    mean /= static_cast<S>(valid);
    for (Eigen::Index r = 0; r < N; ++r)
      if (mask[r]) var += (C.hidden.row(r).transpose() - mean).cwiseAbs2();
    const VectorX<S> biased = var / static_cast<S>(valid);
    out.batch_mean.push_back(mean);
    out.batch_var.push_back(valid > 1 ? VectorX<S>(var / static_cast<S>(valid - 1)) : biased);
    C.inv_std = (biased.array() + S(kBatchNormEps)).rsqrt().matrix();
    C.xhat = ((C.hidden.rowwise() - mean.transpose()).array().rowwise() *
              C.inv_std.transpose().array())
                 .matrix();
    const auto& Nw = w.norm[l];
    x = ((C.xhat.array().rowwise() * Nw.gamma.transpose().array()).rowwise() +
         Nw.beta.transpose().array())
            .matrix();
  }

  MatrixX<S> z = x * w.fc_w.transpose();
  z.rowwise() += w.fc_b.transpose();

  MatrixX<S> dz = MatrixX<S>::Zero(N, K);
  double loss_sum = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const Eigen::Index T = items[b]->frames.rows();
    Eigen::MatrixXd logits(T, K);
    for (Eigen::Index t = 0; t < T; ++t) logits.row(t) = z.row(t * B + b).template cast<double>();
    const PhonemePosterior post = softmax_rows(logits);
    const CtcResult ctc = ctc_loss(post.log_probs, items[b]->target);
    if (!std::isfinite(ctc.loss)) {
      std::ostringstream msg;
      msg << "non-finite CTC loss for utterance '" << items[b]->id << "' (" << T
          << " frames, target length " << items[b]->target.size()
          << ", max |logit| = " << logits.cwiseAbs().maxCoeff() << ")";
      throw TrainingError(msg.str());
    }
    loss_sum += ctc.loss;
    for (Eigen::Index t = 0; t < T; ++t) {
      const double gsum = ctc.grad.row(t).sum();
      for (int k = 0; k < K; ++k)
        dz(t * B + b, k) =
            static_cast<S>((ctc.grad(t, k) - post.probs(t, k) * gsum) / static_cast<double>(B));
    }
  }
  out.loss = loss_sum / static_cast<double>(B);

  auto& G = out.grad;
  G.fc_w.noalias() = dz.transpose() * x;
  G.fc_b = dz.colwise().sum().transpose();
  MatrixX<S> dy = dz * w.fc_w;

  for (int l = shape.layers - 1; l >= 0; --l) {
    auto& C = cache[l];
    const auto& L = w.lstm[l];
    const auto& Nw = w.norm[l];

    G.norm[l].gamma = (dy.array() * C.xhat.array()).colwise().sum().transpose();
    G.norm[l].beta = dy.colwise().sum().transpose();
    const MatrixX<S> dxhat = (dy.array().rowwise() * Nw.gamma.transpose().array()).matrix();
    const VectorX<S> sum_dxhat = dxhat.colwise().sum().transpose();
    const VectorX<S> sum_dxhat_xhat =
        (dxhat.array() * C.xhat.array()).colwise().sum().matrix().transpose();
    const S n = static_cast<S>(valid);
    MatrixX<S> dh_out(N, H);
    for (Eigen::Index r = 0; r < N; ++r) {
      if (!mask[r]) {
        dh_out.row(r).setZero();
        continue;
      }
      dh_out.row(r) = ((n * dxhat.row(r).array() - sum_dxhat.transpose().array() -
                        C.xhat.row(r).array() * sum_dxhat_xhat.transpose().array()) *
                       C.inv_std.transpose().array() / n)
                          .matrix();
    }

    MatrixX<S> dpre(N, 4 * H);
    MatrixX<S> dh_next = MatrixX<S>::Zero(B, H), dc_next = MatrixX<S>::Zero(B, H);
    for (Eigen::Index t = tmax - 1; t >= 0; --t) {
      for (Eigen::Index b = 0; b < B; ++b) {
        const Eigen::Index r = t * B + b;
        for (int j = 0; j < H; ++j) {
          const S ig = C.gates(r, j), fg = C.gates(r, H + j);
          const S gg = C.gates(r, 2 * H + j), og = C.gates(r, 3 * H + j);
          const S c = C.cell(r, j);
          const S c_prev = t > 0 ? C.cell(r - B, j) : S(0);
          const S tc = std::tanh(c);
          const S dh = dh_out(r, j) + dh_next(b, j);
          const S dc = dh * og * (S(1) - tc * tc) + dc_next(b, j);
          dpre(r, j) = dc * gg * ig * (S(1) - ig);
          dpre(r, H + j) = dc * c_prev * fg * (S(1) - fg);
          dpre(r, 2 * H + j) = dc * ig * (S(1) - gg * gg);
          dpre(r, 3 * H + j) = dh * tc * og * (S(1) - og);
          dc_next(b, j) = dc * fg;
        }
      }
      dh_next.noalias() = dpre.middleRows(t * B, B) * L.w_hh;
    }

    G.lstm[l].w_ih.noalias() = dpre.transpose() * C.input;
    if (tmax > 1)
      G.lstm[l].w_hh.noalias() =
          dpre.bottomRows(N - B).transpose() * C.hidden.topRows(N - B);
    G.lstm[l].bias = dpre.colwise().sum().transpose();
    if (l > 0) dy = dpre * L.w_ih;
  }
  return out;
}

template <typename S>
Trainer<S>::Trainer(ModelWeightsT<S>& weights, TrainConfig cfg)
    : w_(weights), cfg_(cfg), m_(ModelWeightsT<S>::zeros(weights.shape)),
      v_(ModelWeightsT<S>::zeros(weights.shape)) {
  m_.for_each_parameter([](auto& t) { t.setZero(); });
  v_.for_each_parameter([](auto& t) { t.setZero(); });
  if (cfg_.batch_size < 1) throw std::invalid_argument("batch size must be positive");
  if (!(cfg_.learning_rate >= 0) || !(cfg_.weight_decay >= 0))
    throw std::invalid_argument("learning rate and weight decay must be non-negative");
}

template <typename S>
double Trainer<S>::step(std::span<const TrainingExample* const> batch) {
  BatchGradient<S> g = batch_gradient(w_, batch);
  if (g.used == 0) return 0.0;
  if (!std::isfinite(g.loss))
    throw TrainingError("non-finite loss at step " + std::to_string(t_ + 1));

  std::vector<Eigen::Map<VectorX<S>>> params, grads, m, v;
  collect(w_, params);
  collect(g.grad, grads);
  collect(m_, m);
  collect(v_, v);

  double norm2 = 0.0;
  for (auto& gr : grads) {
    if (!gr.allFinite())
      throw TrainingError("non-finite gradient at step " + std::to_string(t_ + 1) +
                          " (loss " + std::to_string(g.loss) + ")");
    norm2 += static_cast<double>(gr.squaredNorm());
  }
  if (cfg_.clip_norm > 0 && std::sqrt(norm2) > cfg_.clip_norm) {
    const S scale = static_cast<S>(cfg_.clip_norm / std::sqrt(norm2));
    for (auto& gr : grads) gr *= scale;
  }

  ++t_;
  const S lr = static_cast<S>(cfg_.learning_rate);
  const S wd = static_cast<S>(cfg_.weight_decay);
  const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
  const S c1 = static_cast<S>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
  const S c2 = static_cast<S>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
  const S eps = static_cast<S>(cfg_.adam_eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const VectorX<S> gi = grads[i] + wd * p;
    m[i] = b1 * m[i] + (S(1) - b1) * gi;
    v[i] = b2 * v[i] + (S(1) - b2) * gi.cwiseAbs2();
    if (lr != S(0))
      p.array() -= lr * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + eps);
  }

  const S mom = static_cast<S>(cfg_.batch_norm_momentum);
  for (int l = 0; l < w_.shape.layers; ++l) {
    auto& N = w_.norm[l];
    N.running_mean = (S(1) - mom) * N.running_mean + mom * g.batch_mean[l];
    N.running_var = (S(1) - mom) * N.running_var + mom * g.batch_var[l];
  }
  return g.loss;
}

template <typename S>
std::vector<double> Trainer<S>::fit(const std::vector<TrainingExample>& data,
                                    const std::function<bool(int, double)>& on_epoch) {
  std::vector<double> curve;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    Rng rng(derive_seed(cfg_.seed, "epoch", static_cast<std::uint64_t>(epoch)));
    shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    int batches = 0;
    std::vector<const TrainingExample*> batch;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(cfg_.batch_size)) {
      batch.clear();
      for (std::size_t j = i; j < std::min(order.size(), i + cfg_.batch_size); ++j)
        batch.push_back(&data[order[j]]);
      total += step(batch);
      ++batches;
    }
    curve.push_back(batches ? total / batches : 0.0);
    if (on_epoch && !on_epoch(epoch, curve.back())) break;
  }
  return curve;
}

template BatchGradient<float> batch_gradient(const ModelWeightsT<float>&,
                                             std::span<const TrainingExample* const>);
template BatchGradient<double> batch_gradient(const ModelWeightsT<double>&,
                                              std::span<const TrainingExample* const>);
template class Trainer<float>;
template class Trainer<double>;

}  // namespace phode
