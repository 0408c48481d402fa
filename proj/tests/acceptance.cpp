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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. `--only N[,M...]` restricts the run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unsupported/Eigen/FFT>
#include <vector>

#include "phode/alignment.hpp"
#include "phode/ctc.hpp"
#include "phode/dynamics.hpp"
#include "phode/error_analysis.hpp"
#include "phode/rng.hpp"
#include "phode/toy_experiment.hpp"
#include "phode/vocoder.hpp"
#include "test_support.hpp"

using namespace phode;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// ---------------------------------------------------------------- oracles

Eigen::MatrixXd random_log_probs(Rng& rng, int T, int K) {
  Eigen::MatrixXd x(T, K);
  for (int t = 0; t < T; ++t) {
    for (int k = 0; k < K; ++k) x(t, k) = 1.5 * rng.gaussian();
    const double m = x.row(t).maxCoeff();
    x.row(t).array() -= m + std::log((x.row(t).array() - m).exp().sum());
  }
  return x;
}

std::vector<int> random_labels(Rng& rng, int L, int K) {
  std::vector<int> t(static_cast<std::size_t>(L));
  for (auto& v : t) v = static_cast<int>(rng.uniform_int(1, K - 1));
  return t;
}

double log_add(double a, double b) {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Enumerates all K^T paths; returns -log of the summed probability of the
// paths that collapse onto the target.
double brute_force_ctc(const Eigen::MatrixXd& lp, const std::vector<int>& target) {
  const int T = static_cast<int>(lp.rows()), K = static_cast<int>(lp.cols());
  std::vector<int> path(static_cast<std::size_t>(T), 0);
  double total = -INFINITY;
  for (;;) {
    std::vector<int> collapsed;
    int prev = -1;
    double score = 0.0;
    for (int t = 0; t < T; ++t) {
      const int k = path[static_cast<std::size_t>(t)];
      score += lp(t, k);
      if (k != prev && k != 0) collapsed.push_back(k);
      prev = k;
    }
    if (collapsed == target) total = log_add(total, score);
    int t = 0;
    while (t < T && ++path[static_cast<std::size_t>(t)] == K) path[static_cast<std::size_t>(t++)] = 0;
    if (t == T) break;
  }
  return -total;
}

int recursive_edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<std::size_t, std::size_t>, int> memo;
  std::function<int(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> int {
    if (i == a.size()) return static_cast<int>(b.size() - j);
    if (j == b.size()) return static_cast<int>(a.size() - i);
    const auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    const int r = std::min({go(i + 1, j + 1) + (a[i] != b[j]), go(i + 1, j) + 1, go(i, j + 1) + 1});
    return memo[key] = r;
  };
  return go(0, 0);
}

double ks_uniform_p(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    d = std::max(d, static_cast<double>(i + 1) / n - xs[i]);
    d = std::max(d, xs[i] - static_cast<double>(i) / n);
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double q = 0.0;
  for (int k = 1; k <= 100; ++k) q += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(q, 0.0, 1.0);
}

Eigen::VectorXd hilbert_envelope(const Eigen::VectorXd& x, double lo, double hi, int fs, int smooth,
                                 int step) {
  const Eigen::Index n = x.size();
  Eigen::FFT<double> fft;
  std::vector<double> in(x.data(), x.data() + n);
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, in);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(n);
    const auto i = static_cast<std::size_t>(k);
    spec[i] = (k == 0 || k * 2 >= n || f < lo || f >= hi) ? std::complex<double>{} : 2.0 * spec[i];
  }
  std::vector<std::complex<double>> analytic;
  fft.inv(analytic, spec);
  Eigen::VectorXd mag(n);
  for (Eigen::Index i = 0; i < n; ++i) mag[i] = std::abs(analytic[static_cast<std::size_t>(i)]);
  const Eigen::Index frames = (n - smooth) / step + 1;
  Eigen::VectorXd out(frames);
  for (Eigen::Index t = 0; t < frames; ++t) out[t] = mag.segment(t * step, smooth).mean();
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------- criteria

Outcome ctc_oracle() {
  Rng rng(101);
  constexpr int K = 5;
  double worst = 0.0;
  int feasible = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int T = static_cast<int>(rng.uniform_int(1, 6));
    const int L = static_cast<int>(rng.uniform_int(1, 3));
    const auto lp = random_log_probs(rng, T, K);
    auto target = random_labels(rng, L, K);
    if (L >= 2 && rng.bernoulli(0.3)) target[1] = target[0];
    const auto r = ctc_loss(lp, target);
    const double ref = brute_force_ctc(lp, target);
    if (std::isinf(ref)) {
      if (r.feasible || !std::isinf(r.loss)) return {false, "infeasible instance not flagged"};
      continue;
    }
    ++feasible;
    worst = std::max(worst, std::abs(r.loss - ref));
  }
  return {worst < 1e-8 && feasible > 0,
          "max |loss - brute force| " + fmt(worst) + " over " + std::to_string(feasible) + " feasible of 100"};
}

Outcome ctc_gradient() {
  Rng rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int T = static_cast<int>(rng.uniform_int(3, 8));
    const int K = static_cast<int>(rng.uniform_int(3, 6));
    const Eigen::MatrixXd lp = random_log_probs(rng, T, K);
    auto target = random_labels(rng, static_cast<int>(rng.uniform_int(1, 3)), K);
    if (T < ctc_min_frames(target)) target.resize(1);
    const auto r = ctc_loss(lp, target);
    const double h = 1e-6;
    Eigen::MatrixXd numeric(T, K);
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
  }
  return {worst < 1e-4, "max relative error " + fmt(worst) + " over 20 instances"};
}

Outcome alignment_oracle() {
  Rng rng(303);
  int agree = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(0, 8)), m = static_cast<int>(rng.uniform_int(0, 8));
    std::vector<PhonemeSegment> t;
    std::vector<PredictionEvent> p;
    std::vector<int> ti, pi;
    for (int i = 0; i < n; ++i) {
      const Phoneme x(static_cast<int>(rng.uniform_int(0, 4)));
      t.push_back({x, i * 50.0, i * 50.0 + 50, 0});
      ti.push_back(x.token_id());
    }
    for (int j = 0; j < m; ++j) {
      const Phoneme x(static_cast<int>(rng.uniform_int(0, 4)));
      p.push_back({Token::of(x), 10 + 5 * j, (10 + 5 * j) * 10.0});
      pi.push_back(x.token_id());
    }
    agree += levenshtein_align(t, p).edit_count() == recursive_edit_distance(ti, pi);
  }

  int retained = 0, retained_pairs = 0, ordered_pairs = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(1, 10));
    std::vector<PhonemeSegment> t;
    double onset = rng.uniform(0, 200);
    for (int i = 0; i < n; ++i) {
      t.push_back({Phoneme(static_cast<int>(rng.uniform_int(0, 5))), onset, onset + 60, 0});
      onset += rng.uniform(30, 130);
    }
    std::vector<PredictionEvent> p;
    for (const auto& s : t) {
      if (rng.bernoulli(0.15)) continue;
      const Phoneme x = rng.bernoulli(0.2) ? Phoneme(static_cast<int>(rng.uniform_int(0, 5))) : s.phoneme;
      const int frame = std::max(0, static_cast<int>((s.onset_ms + rng.uniform(-90, 160)) / 10));
      if (!p.empty() && frame <= p.back().frame) continue;
      p.push_back({Token::of(x), frame, frame * 10.0});
      if (rng.bernoulli(0.1)) {
        const int extra = frame + static_cast<int>(rng.uniform_int(1, 4));
        p.push_back({Token::of(Phoneme(static_cast<int>(rng.uniform_int(0, 5)))), extra, extra * 10.0});
      }
    }
    const auto a = exclude_if_inverted(correct_alignment(levenshtein_align(t, p)));
    if (a.excluded) continue;
    ++retained;
    for (const auto& pair : a.pairs) {
      if (!pair.matched()) continue;
      ++retained_pairs;
      ordered_pairs += pair.target->onset_ms < pair.predicted->time_ms;
    }
  }
  const bool pass = agree == 200 && retained > 0 && ordered_pairs == retained_pairs;
  return {pass, std::to_string(agree) + "/200 distances agree; " + std::to_string(ordered_pairs) + "/" +
                    std::to_string(retained_pairs) + " matched pairs ordered in " + std::to_string(retained) +
                    "/1000 retained fixtures"};
}

Outcome confusion_metrics() {
  std::vector<Phoneme> subset;
  for (int i = 0; i < 8; ++i) subset.push_back(Phoneme(i * 4));
  auto random_matrix = [&](Rng& rng) {
    ConfusionMatrix c = ConfusionMatrix::empty(subset);
    for (Eigen::Index i = 0; i < c.counts.rows(); ++i)
      for (Eigen::Index j = 0; j < c.counts.cols(); ++j)
        c.counts(i, j) = std::floor(rng.uniform(0, 30)) + (i == j ? 20 : 0);
    return c;
  };

  Rng rng(404);
  double corr_err = 0.0, kl = 0.0, manhattan = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = random_matrix(rng);
    const auto r = similarity_metrics(c, c);
    corr_err = std::max({corr_err, std::abs(r.diag_corr - 1.0), std::abs(r.offdiag_corr - 1.0),
                         std::abs(r.overall_corr - 1.0)});
    kl = std::max(kl, std::abs(r.row_kl_mean));
    manhattan = std::max(manhattan, r.manhattan);
  }
  const bool self_ok = corr_err <= 1e-12 && kl <= 1e-9 && manhattan <= 1e-12;

  Rng hr(405);
  const auto human = random_matrix(hr);
  double worst_p = 1.0;
  std::string worst_metric;
  for (auto metric : kAllSimilarityMetrics) {
    std::vector<double> ps;
    for (int run = 0; run < 200; ++run) {
      Rng r(derive_seed(4060, "null", static_cast<std::uint64_t>(run)));
      const double p = shuffle_test(random_matrix(r), human, metric, 199, static_cast<std::uint64_t>(run));
      // The permutation p-value lives on the grid k/200; spreading it over
      // its grid cell makes it continuous uniform under the null, as KS assumes.
      ps.push_back(p - r.uniform() / 200.0);
    }
    const double p = ks_uniform_p(ps);
    if (p < worst_p) worst_p = p, worst_metric = std::string(to_string(metric));
  }
  return {self_ok && worst_p > 0.01, "self-similarity corr err " + fmt(corr_err) + ", row_kl " + fmt(kl) +
                                         ", manhattan " + fmt(manhattan) + "; min null KS p " + fmt(worst_p) +
                                         " (" + worst_metric + ")"};
}

Outcome vocoder_energy() {
  const auto fb = FilterbankSpec::log_spaced();
  double min_fraction = 1.0;
  for (int ch = 0; ch < kElectrodes; ++ch) {
    const auto e = encode(testing::tone(fb.center_hz(ch), 1.0), fb);
    min_fraction = std::min(min_fraction, e.pulses.row(ch).squaredNorm() / e.pulses.squaredNorm());
  }
  const auto w = testing::speech_like(3.0, 2024);
  const auto v = resynthesize(encode(w, fb), fb, 1, "fixture");
  const Eigen::VectorXd vs = v.samples.head(std::min(v.size(), w.size()));
  const Eigen::VectorXd ws = w.samples.head(vs.size());
  double min_r = 1.0;
  for (int ch = 0; ch < kElectrodes; ++ch) {
    const auto a = hilbert_envelope(ws, fb.lower_hz(ch), fb.upper_hz(ch), 16000, 480, 160);
    const auto b = hilbert_envelope(vs, fb.lower_hz(ch), fb.upper_hz(ch), 16000, 480, 160);
    min_r = std::min(min_r, testing::pearson(a, b));
  }
  return {min_fraction >= 0.8 && min_r >= 0.9,
          "min in-channel energy " + fmt(min_fraction) + ", min envelope r " + fmt(min_r)};
}

Outcome interpolation_dynamics() {
  Rng rng(606);
  Eigen::MatrixXd trace(100, 5);
  for (Eigen::Index i = 0; i < trace.rows(); ++i)
    for (Eigen::Index j = 0; j < trace.cols(); ++j) trace(i, j) = rng.gaussian();
  UtteranceWindow w;
  w.onset_frame = 30;
  w.prediction_frame = 30 + kWindowSteps - 1;
  WindowConfig raw{.pre_fraction = 0.0, .post_fraction = 0.0, .zscore = false};
  const auto iw = interpolate_window(trace, w, 0, raw);
  const double identity_err = (iw.values - trace.middleRows(30, kWindowSteps)).cwiseAbs().maxCoeff();

  Eigen::VectorXd curve(kWindowSteps);
  for (int k = 0; k < kWindowSteps; ++k) curve(k) = 1.0 + 0.01 * (k - 25) * (k - 25) + 0.001 * k;
  const int t_peak = find_t_peak(curve);

  const double h = 2.5;
  Eigen::VectorXd step = Eigen::VectorXd::Zero(kWindowSteps);
  step.tail(kWindowSteps - 20).setConstant(h);
  const auto la = latency_amplitude(step);

  const bool pass = identity_err <= 1e-9 && t_peak == 25 && la.latency_ms == 200.0 && la.amplitude == h;
  return {pass, "identity err " + fmt(identity_err) + ", t_peak " + std::to_string(t_peak) + ", step -> (" +
                    fmt(la.latency_ms) + " ms, " + fmt(la.amplitude) + ")"};
}

Outcome toy_end_to_end() {
  const ToyExperimentConfig cfg;
  const auto r = run_toy_experiment(cfg, [](const std::string& line) { std::fprintf(stderr, "  %s\n", line.c_str()); });
  auto ter = [&](Condition c, NoiseLevel n) { return r.cell(c, n).token_error_rate; };

  const double nh_quiet = ter(Condition::nh, NoiseLevel::quiet);
  const bool a = nh_quiet < 0.20;

  bool b = true;
  for (std::size_t i = 1; i < cfg.noise_levels.size(); ++i)
    b = b && ter(Condition::nh, cfg.noise_levels[i - 1]) < ter(Condition::nh, cfg.noise_levels[i]);

  // At the high level both conditions sit near chance for five phonemes and the
  // order is not stable, so it is reported but not asserted.
  bool c = true;
  for (auto n : {NoiseLevel::quiet, NoiseLevel::low, NoiseLevel::mid})
    c = c && ter(Condition::ci, n) > ter(Condition::nh, n);

  const bool have_rt = !r.confused_rt_ms.empty() && !r.nonconfused_rt_ms.empty();
  const double med_c = have_rt ? median(r.confused_rt_ms) : NAN;
  const double med_nc = have_rt ? median(r.nonconfused_rt_ms) : NAN;
  const bool d = have_rt && med_c >= med_nc;

  std::string detail = "(a) NH quiet TER " + fmt(nh_quiet) + (a ? " ok" : " FAIL") + "; (b) NH TER";
  for (auto n : cfg.noise_levels) detail += " " + fmt(ter(Condition::nh, n));
  detail += std::string(b ? " ok" : " FAIL") + "; (c) CI TER";
  for (auto n : cfg.noise_levels) detail += " " + fmt(ter(Condition::ci, n));
  detail += std::string(c ? " ok" : " FAIL") + " (quiet, low, mid asserted; high " +
            (ter(Condition::ci, NoiseLevel::high) > ter(Condition::nh, NoiseLevel::high) ? "also" : "not") +
            " above NH); (d) median RT confused " + fmt(med_c) + " ms vs " + fmt(med_nc) +
            " ms" + (d ? " ok" : " FAIL");
  return {a && b && c && d, detail};
}

Outcome decoder_sanity() {
  Rng rng(808);
  const int k = 4, per = 150, dims = 6;
  Eigen::MatrixXd centers(k, dims);
  for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = 10.0 * rng.gaussian();
  Eigen::MatrixXd x(k * per, dims);
  std::vector<int> y;
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < per; ++i) {
      for (int d = 0; d < dims; ++d) x(c * per + i, d) = centers(c, d) + 0.3 * rng.gaussian();
      y.push_back(c);
    }
  DecodeConfig cfg;
  cfg.folds = 10;
  cfg.seed = 1;
  const auto sep = linear_decode(x, y, cfg);
  const bool sep_ok = sep.fold_accuracy.size() == 10 &&
                      std::all_of(sep.fold_accuracy.begin(), sep.fold_accuracy.end(), [](double a) { return a == 1.0; });

  std::vector<int> shuffled = y;
  shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto null = linear_decode(x, shuffled, cfg);
  const double chance = 1.0 / k;
  const double n_test = (1.0 - cfg.train_fraction) * k * per;
  const double sd = std::sqrt(chance * (1 - chance) / n_test);
  const bool null_ok = null.fold_accuracy.size() == 10 && std::abs(null.mean - chance) <= 3.0 * sd;
  return {sep_ok && null_ok, "separable accuracy " + fmt(sep.mean) + " over " +
                                 std::to_string(sep.fold_accuracy.size()) + " folds; shuffled " + fmt(null.mean) +
                                 " vs chance " + fmt(chance) + " +/- " + fmt(3 * sd)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) != "--only") continue;
    std::stringstream ss(argv[i + 1]);
    for (std::string item; std::getline(ss, item, ',');) only.insert(std::stoi(item));
  }

  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    Outcome (*fn)();
  };
  const Criterion criteria[] = {
      {1, "ctc oracle equivalence", 5, ctc_oracle},
      {2, "ctc gradient check", 10, ctc_gradient},
      {3, "alignment oracle and ordering", 60, alignment_oracle},
      {4, "confusion metrics and null calibration", 60, confusion_metrics},
      {5, "vocoder energy placement and envelopes", 30, vocoder_energy},
      {6, "interpolation and dynamics fixtures", 5, interpolation_dynamics},
      {7, "toy end-to-end experiment", 900, toy_end_to_end},
      {8, "decoder sanity", 30, decoder_sanity},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = secs < c.budget_s;
    const bool pass = o.pass && in_budget;
    failed += !pass;
    std::printf("criterion %d %s: %s (%s; %.2f s of %.0f s budget%s)\n", c.id, c.name, pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs, c.budget_s, in_budget ? "" : ", over budget");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
