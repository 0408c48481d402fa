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

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace phode {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

int ctc_min_frames(std::span<const int> target) {
  int n = static_cast<int>(target.size());
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

CtcResult ctc_loss(const Eigen::Ref<const Eigen::MatrixXd>& log_probs,
                   std::span<const int> target) {
  const Eigen::Index T = log_probs.rows();
  const Eigen::Index K = log_probs.cols();
  for (int k : target)
    if (k <= 0 || k >= K) throw std::invalid_argument("CTC target label out of range");

  CtcResult r;
  r.grad = Eigen::MatrixXd::Zero(T, K);
  if (T < ctc_min_frames(target)) {
    r.loss = std::numeric_limits<double>::infinity();
    r.feasible = false;
    return r;
  }

  // Extended label sequence: blank, l1, blank, l2, ..., blank.
  const Eigen::Index S = 2 * static_cast<Eigen::Index>(target.size()) + 1;
  std::vector<int> ext(S, 0);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  auto can_skip = [&](Eigen::Index s) { return s >= 2 && ext[s] != 0 && ext[s] != ext[s - 2]; };

  Eigen::MatrixXd alpha = Eigen::MatrixXd::Constant(T, S, kNegInf);
  Eigen::MatrixXd beta = Eigen::MatrixXd::Constant(T, S, kNegInf);
  alpha(0, 0) = log_probs(0, ext[0]);
  if (S > 1) alpha(0, 1) = log_probs(0, ext[1]);
  for (Eigen::Index t = 1; t < T; ++t)
    for (Eigen::Index s = 0; s < S; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = log_add(a, alpha(t - 1, s - 1));
      if (can_skip(s)) a = log_add(a, alpha(t - 1, s - 2));
      alpha(t, s) = a == kNegInf ? kNegInf : a + log_probs(t, ext[s]);
    }

  beta(T - 1, S - 1) = log_probs(T - 1, ext[S - 1]);
  if (S > 1) beta(T - 1, S - 2) = log_probs(T - 1, ext[S - 2]);
  for (Eigen::Index t = T - 2; t >= 0; --t)
    for (Eigen::Index s = 0; s < S; ++s) {
      double b = beta(t + 1, s);
      if (s + 1 < S) b = log_add(b, beta(t + 1, s + 1));
      if (s + 2 < S && ext[s + 2] != 0 && ext[s + 2] != ext[s]) b = log_add(b, beta(t + 1, s + 2));
      beta(t, s) = b == kNegInf ? kNegInf : b + log_probs(t, ext[s]);
    }

  double log_p = alpha(T - 1, S - 1);
  if (S > 1) log_p = log_add(log_p, alpha(T - 1, S - 2));
  if (log_p == kNegInf) {
    r.loss = std::numeric_limits<double>::infinity();
    r.feasible = false;
    return r;
  }
  r.loss = -log_p;

  // alpha and beta both include the emission at t, so their sum counts it
  // twice; occupancy per token is exp(lse(alpha+beta) - x_t(k) - log_p).
  std::vector<double> acc(K);
  for (Eigen::Index t = 0; t < T; ++t) {
    std::fill(acc.begin(), acc.end(), kNegInf);
    for (Eigen::Index s = 0; s < S; ++s)
      acc[ext[s]] = log_add(acc[ext[s]], alpha(t, s) + beta(t, s));
    for (Eigen::Index k = 0; k < K; ++k)
      if (acc[k] != kNegInf) r.grad(t, k) = -std::exp(acc[k] - log_probs(t, k) - log_p);
  }
  return r;
}

std::vector<int> ctc_target(const SegmentedUtterance& u, bool with_spaces) {
  std::vector<int> out;
  for (std::size_t i = 0; i < u.segments.size(); ++i) {
    if (with_spaces && i > 0 && u.segments[i].word_index != u.segments[i - 1].word_index)
      out.push_back(kSpaceId);
    out.push_back(Token::of(u.segments[i].phoneme).id());
  }
  return out;
}

}  // namespace phode
