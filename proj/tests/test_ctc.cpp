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
#include <limits>

#include "doctest.h"
#include "phode/ctc.hpp"
#include "phode/rng.hpp"

using namespace phode;

namespace {

// Sums the probability of every length-T path that collapses to `target`.
double brute_force_loss(const Eigen::MatrixXd& log_probs, const std::vector<int>& target) {
  const int T = static_cast<int>(log_probs.rows());
  const int K = static_cast<int>(log_probs.cols());
  std::vector<int> path(T, 0);
  double total = 0.0;
  while (true) {
    std::vector<int> collapsed;
    int prev = -1;
    double lp = 0.0;
    for (int t = 0; t < T; ++t) {
      lp += log_probs(t, path[t]);
      if (path[t] != prev && path[t] != 0) collapsed.push_back(path[t]);
      prev = path[t];
    }
    if (collapsed == target) total += std::exp(lp);
    int t = 0;
    while (t < T && ++path[t] == K) path[t++] = 0;
    if (t == T) break;
  }
  return -std::log(total);
}

Eigen::MatrixXd random_log_probs(Rng& rng, int T, int K) {
  Eigen::MatrixXd x(T, K);
  for (int t = 0; t < T; ++t) {
    for (int k = 0; k < K; ++k) x(t, k) = rng.gaussian() * 1.5;
    const double m = x.row(t).maxCoeff();
    x.row(t).array() -= m + std::log((x.row(t).array() - m).exp().sum());
  }
  return x;
}

std::vector<int> random_target(Rng& rng, int L, int K) {
  std::vector<int> t(L);
  for (auto& v : t) v = static_cast<int>(rng.uniform_int(1, K - 1));
  return t;
}

}  // namespace

TEST_CASE("certain single-frame path has zero loss") {
  Eigen::MatrixXd lp = Eigen::MatrixXd::Constant(1, kNumTokens, -std::numeric_limits<double>::infinity());
  lp(0, 7) = 0.0;
  const std::vector<int> target{7};
  const auto r = ctc_loss(lp, target);
  CHECK(r.feasible);
  CHECK(r.loss == doctest::Approx(0.0));
  CHECK(r.grad(0, 7) == doctest::Approx(-1.0));
}

TEST_CASE("two uniform frames, one label") {
  const Eigen::MatrixXd lp = Eigen::MatrixXd::Constant(2, 41, -std::log(41.0));
  const std::vector<int> target{3};
  CHECK(ctc_loss(lp, target).loss == doctest::Approx(-std::log(3.0 / (41.0 * 41.0))).epsilon(1e-12));
}

TEST_CASE("matches brute-force enumeration") {
  Rng rng(11);
  SUBCASE("T=5, L=2 over the full token set") {
    const auto lp = random_log_probs(rng, 5, 41);
    const auto target = random_target(rng, 2, 41);
    CHECK(std::abs(ctc_loss(lp, target).loss - brute_force_loss(lp, target)) < 1e-8);
  }
  SUBCASE("100 random small instances") {
    int checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const int T = static_cast<int>(rng.uniform_int(1, 6));
      const int L = static_cast<int>(rng.uniform_int(1, 3));
      const int K = 4;
      const auto lp = random_log_probs(rng, T, K);
      auto target = random_target(rng, L, K);
      if (rng.bernoulli(0.3) && L >= 2) target[1] = target[0];
      const auto r = ctc_loss(lp, target);
      if (T < ctc_min_frames(target)) {
        CHECK_FALSE(r.feasible);
        CHECK(std::isinf(r.loss));
        CHECK(r.grad.isZero(0.0));
        continue;
      }
      CHECK(std::abs(r.loss - brute_force_loss(lp, target)) < 1e-8);
      ++checked;
    }
    CHECK(checked > 50);
  }
}

TEST_CASE("gradient matches central differences") {
  Rng rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int T = static_cast<int>(rng.uniform_int(3, 8));
    const int K = static_cast<int>(rng.uniform_int(3, 6));
    const int L = static_cast<int>(rng.uniform_int(1, std::min(3, T)));
    Eigen::MatrixXd lp = random_log_probs(rng, T, K);
    std::vector<int> target = random_target(rng, L, K);
    if (T < ctc_min_frames(target)) target.resize(1);
    const auto r = ctc_loss(lp, target);
    Eigen::MatrixXd numeric(T, K);
    const double h = 1e-6;
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < K; ++k) {
        Eigen::MatrixXd a = lp, b = lp;
        a(t, k) += h;
        b(t, k) -= h;
        numeric(t, k) = (ctc_loss(a, target).loss - ctc_loss(b, target).loss) / (2 * h);
      }
    const double scale = numeric.cwiseAbs().maxCoeff();
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < K; ++k) {
        const double denom = std::max({std::abs(numeric(t, k)), std::abs(r.grad(t, k)), 1e-2 * scale});
        worst = std::max(worst, std::abs(numeric(t, k) - r.grad(t, k)) / denom);
      }
    // Occupancies over tokens sum to one at every frame.
    CHECK((r.grad.rowwise().sum().array() + 1.0).abs().maxCoeff() < 1e-9);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("infeasible target is flagged, not thrown") {
  const Eigen::MatrixXd lp = Eigen::MatrixXd::Constant(2, 41, -std::log(41.0));
  const std::vector<int> target{5, 5};
  CHECK(ctc_min_frames(target) == 3);
  const auto r = ctc_loss(lp, target);
  CHECK_FALSE(r.feasible);
  CHECK(r.loss == std::numeric_limits<double>::infinity());
  const std::vector<int> bad{41};
  CHECK_THROWS_AS(ctc_loss(lp, bad), std::invalid_argument);
}

namespace {

PhonemePosterior from_argmax(const std::vector<int>& ids, const std::vector<double>& peak) {
  PhonemePosterior p;
  p.probs = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(ids.size()), 41, 0.001);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    p.probs(t, ids[t]) = peak.empty() ? 0.9 : peak[t];
    p.probs.row(t) /= p.probs.row(t).sum();
  }
  p.log_probs = p.probs.array().log();
  return p;
}

}  // namespace

TEST_CASE("greedy decode") {
  const int ah = Token::of(Phoneme::parse("AH")).id();
  const int b = Token::of(Phoneme::parse("B")).id();
  const int k = Token::of(Phoneme::parse("K")).id();
  CHECK(ctc_greedy_decode(from_argmax({0, 0, 0}, {})).empty());

  const auto ev = ctc_greedy_decode(from_argmax({0, ah, ah, 0, b}, {0.9, 0.6, 0.8, 0.9, 0.7}));
  REQUIRE(ev.size() == 2);
  CHECK(ev[0].token.id() == ah);
  CHECK(ev[0].frame == 2);
  CHECK(ev[0].time_ms == 20.0);
  CHECK(ev[1].token.id() == b);
  CHECK(ev[1].frame == 4);

  const auto rep = ctc_greedy_decode(from_argmax({k, k, 0, k}, {}));
  REQUIRE(rep.size() == 2);
  CHECK(rep[0].token.id() == k);
  CHECK(rep[1].token.id() == k);
  CHECK(rep[1].frame == 3);

  const auto spaced = ctc_greedy_decode(from_argmax({k, kSpaceId, k, kSpaceId}, {}));
  CHECK(spaced.size() == 2);

  // Frames strictly increase.
  Rng rng(3);
  std::vector<int> ids(200);
  for (auto& id : ids) id = static_cast<int>(rng.uniform_int(0, 40));
  const auto many = ctc_greedy_decode(from_argmax(ids, {}));
  for (std::size_t i = 1; i < many.size(); ++i) CHECK(many[i].frame > many[i - 1].frame);
}

TEST_CASE("targets carry word spaces") {
  SegmentedUtterance u;
  u.segments = {{Phoneme::parse("K"), 0, 50, 0},
                {Phoneme::parse("AE"), 50, 100, 0},
                {Phoneme::parse("T"), 100, 150, 1}};
  u.words = words_from_segments(u.segments);
  const auto with = ctc_target(u);
  CHECK(with == std::vector<int>{Token::of(Phoneme::parse("K")).id(),
                                 Token::of(Phoneme::parse("AE")).id(), kSpaceId,
                                 Token::of(Phoneme::parse("T")).id()});
  CHECK(ctc_target(u, false).size() == 3);
}
