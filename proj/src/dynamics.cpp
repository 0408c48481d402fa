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

#include "phode/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "phode/rng.hpp"

namespace phode {

using nlohmann::json;

bool BigramModel::is_probable(std::optional<Phoneme> previous, Phoneme next) const {
  if (!previous) return false;
  const auto& set = probable[static_cast<std::size_t>(previous->token_id())];
  return std::find(set.begin(), set.end(), next.token_id()) != set.end();
}

BigramModel fit_bigram(std::span<const std::vector<Phoneme>> sequences) {
  BigramModel m;
  for (const auto& seq : sequences)
    for (std::size_t i = 1; i < seq.size(); ++i) m.counts(seq[i - 1].token_id(), seq[i].token_id()) += 1;
  for (int prev = 0; prev < kNumTokens; ++prev) {
    std::vector<int> successors;
    for (int next = 0; next < kNumTokens; ++next)
      if (m.counts(prev, next) > 0) successors.push_back(next);
    if (successors.empty()) continue;
    std::stable_sort(successors.begin(), successors.end(),
                     [&](int a, int b) { return m.counts(prev, a) > m.counts(prev, b); });
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(successors.size()) - 1e-12)));
    successors.resize(keep);
    m.probable[static_cast<std::size_t>(prev)] = std::move(successors);
  }
  return m;
}

void label_probable(std::span<UtteranceWindow> windows, const SegmentedUtterance& u,
                    const BigramModel& bigram) {
  for (auto& w : windows) {
    if (w.target_index < 0 || w.target_index >= static_cast<int>(u.segments.size()))
      throw std::invalid_argument("window target index outside the segmentation");
    std::optional<Phoneme> prev;
    if (w.target_index > 0) prev = u.segments[static_cast<std::size_t>(w.target_index - 1)].phoneme;
    w.probable = bigram.is_probable(prev, w.phoneme);
  }
}

std::string_view to_string(WindowCategory c) {
  switch (c) {
    case WindowCategory::c_p: return "C-P";
    case WindowCategory::c_np: return "C-NP";
    case WindowCategory::nc_p: return "NC-P";
    case WindowCategory::nc_np: return "NC-NP";
  }
  return "?";
}

WindowCategory category_of(const UtteranceWindow& w) {
  if (w.confused) return w.probable ? WindowCategory::c_p : WindowCategory::c_np;
  return w.probable ? WindowCategory::nc_p : WindowCategory::nc_np;
}

namespace {

void zscore_columns(Eigen::MatrixXd& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double mean = m.col(c).mean();
    const double var = (m.col(c).array() - mean).square().mean();
    const double range = m.col(c).maxCoeff() - m.col(c).minCoeff();
    if (!(var > 0) || range <= 1e-12 * std::max(1.0, std::abs(mean))) {
      m.col(c).setZero();
    } else {
      m.col(c) = (m.col(c).array() - mean) / std::sqrt(var);
    }
  }
}

}  // namespace

InterpolatedWindow interpolate_window(const Eigen::MatrixXd& trace, const UtteranceWindow& w,
                                      int layer_index, const WindowConfig& cfg) {
  if (trace.rows() == 0) throw std::invalid_argument("empty activation trace");
  const double length = static_cast<double>(w.prediction_frame - w.onset_frame);
  double start = w.onset_frame - cfg.pre_fraction * length;
  double end = w.prediction_frame + cfg.post_fraction * length;
  const double last = static_cast<double>(trace.rows() - 1);

  InterpolatedWindow out;
  out.sentence_id = w.sentence_id;
  out.phoneme = w.phoneme;
  out.category = category_of(w);
  out.layer_index = layer_index;
  if (start < 0 || end > last || start > last || end < 0) out.clamped = true;
  start = std::clamp(start, 0.0, last);
  end = std::clamp(end, 0.0, last);

  out.values.resize(kWindowSteps, trace.cols());
  for (int k = 0; k < kWindowSteps; ++k) {
    const double t = start + (end - start) * k / (kWindowSteps - 1);
    const auto lo = static_cast<Eigen::Index>(std::floor(t));
    const double frac = t - static_cast<double>(lo);
    if (frac == 0.0 || lo + 1 > trace.rows() - 1)
      out.values.row(k) = trace.row(lo);
    else
      out.values.row(k) = (1.0 - frac) * trace.row(lo) + frac * trace.row(lo + 1);
  }
  if (cfg.zscore) zscore_columns(out.values);
  return out;
}

InterpolatedWindow interpolate_window(const LayerActivationTrace& trace, const UtteranceWindow& w,
                                      const WindowConfig& cfg) {
  return interpolate_window(trace.values.cast<double>().eval(), w, trace.layer_index, cfg);
}

std::vector<ExemplarSet> collect_exemplars(std::span<const InterpolatedWindow> windows,
                                           const ExemplarConfig& cfg) {
  std::map<int, ExemplarSet> by_phoneme;
  for (const auto& w : windows) {
    auto& set = by_phoneme[w.phoneme.index()];
    set.phoneme = w.phoneme;
    auto& bucket = set.by_category[static_cast<std::size_t>(w.category)];
    if (static_cast<int>(bucket.size()) < cfg.max_per_category) bucket.push_back(w);
  }
  std::vector<ExemplarSet> out;
  for (auto& [idx, set] : by_phoneme) {
    bool enough = true;
    for (const auto& bucket : set.by_category)
      enough = enough && static_cast<int>(bucket.size()) >= cfg.min_per_category;
    if (enough) out.push_back(std::move(set));
  }
  return out;
}

Eigen::MatrixXd PCSpace::project(const Eigen::MatrixXd& rows) const {
  return (rows.rowwise() - mean.transpose()) * components;
}

Eigen::MatrixXd PCSpace::reconstruct(const Eigen::MatrixXd& scores) const {
  return (scores * components.transpose()).rowwise() + mean.transpose();
}

PCSpace fit_pca(const Eigen::MatrixXd& rows, double threshold) {
  if (rows.rows() < 2) throw std::invalid_argument("PCA needs at least two samples");
  if (!(threshold > 0 && threshold <= 1)) throw std::invalid_argument("PCA threshold must be in (0, 1]");
  PCSpace s;
  s.mean = rows.colwise().mean().transpose();
  const Eigen::MatrixXd centered = rows.rowwise() - s.mean.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd var = svd.singularValues().array().square();
  const double total = var.sum();
  s.explained = total > 0 ? Eigen::VectorXd(var / total) : Eigen::VectorXd::Zero(var.size());
  double cumulative = 0.0;
  s.retained = 0;
  if (total > 0) {
    while (s.retained < s.explained.size()) {
      cumulative += s.explained(s.retained);
      ++s.retained;
      if (cumulative >= threshold - 1e-12) break;
    }
  }
  s.components = svd.matrixV().leftCols(s.retained);
  return s;
}

PCSpace fit_pca(std::span<const InterpolatedWindow> windows, double threshold) {
  if (windows.size() < 2) throw std::invalid_argument("PCA needs at least two windows");
  const Eigen::Index units = windows.front().values.cols();
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(windows.size()) * kWindowSteps, units);
  Eigen::Index r = 0;
  for (const auto& w : windows) {
    if (w.values.cols() != units || w.values.rows() != kWindowSteps)
      throw std::invalid_argument("windows differ in shape");
    rows.middleRows(r, kWindowSteps) = w.values;
    r += kWindowSteps;
  }
  return fit_pca(rows, threshold);
}

Eigen::VectorXd mean_pairwise_distance(std::span<const Eigen::MatrixXd> t) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(t.empty() ? kWindowSteps : t.front().rows());
  long pairs = 0;
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = i + 1; j < t.size(); ++j, ++pairs)
      sum += (t[i] - t[j]).rowwise().norm();
  return pairs ? Eigen::VectorXd(sum / static_cast<double>(pairs)) : sum;
}

Eigen::VectorXd mean_cross_distance(std::span<const Eigen::MatrixXd> a,
                                    std::span<const Eigen::MatrixXd> b) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(a.empty() ? kWindowSteps : a.front().rows());
  long pairs = 0;
  for (const auto& x : a)
    for (const auto& y : b) {
      sum += (x - y).rowwise().norm();
      ++pairs;
    }
  return pairs ? Eigen::VectorXd(sum / static_cast<double>(pairs)) : sum;
}

Eigen::VectorXd zscore(const Eigen::VectorXd& v) {
  if (v.size() == 0) return v;
  const double mean = v.mean();
  const double sd = std::sqrt((v.array() - mean).square().mean());
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) return Eigen::VectorXd::Zero(v.size());
  return (v.array() - mean) / sd;
}

namespace {

std::vector<Eigen::MatrixXd> project_all(const std::vector<InterpolatedWindow>& ws,
                                         const PCSpace& space) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(ws.size());
  for (const auto& w : ws) out.push_back(space.project(w.values));
  return out;
}

DistanceCurve finish(std::string label, Eigen::VectorXd sum, int phonemes) {
  DistanceCurve c;
  c.label = std::move(label);
  c.phonemes = phonemes;
  c.degenerate = phonemes == 0;
  c.distance = phonemes ? Eigen::VectorXd(sum / phonemes) : Eigen::VectorXd::Zero(kWindowSteps);
  c.z = zscore(c.distance);
  return c;
}

}  // namespace

std::vector<DistanceCurve> distance_curves(std::span<const ExemplarSet> exemplars,
                                           const PCSpace& space, DistanceMode mode) {
  std::vector<DistanceCurve> out;
  if (mode == DistanceMode::within_category) {
    for (auto cat : kAllWindowCategories) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(kWindowSteps);
      int used = 0;
      for (const auto& e : exemplars) {
        if (e[cat].size() < 2) continue;
        sum += mean_pairwise_distance(project_all(e[cat], space));
        ++used;
      }
      out.push_back(finish(std::string(to_string(cat)), sum, used));
    }
    return out;
  }
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(kWindowSteps);
  int used = 0;
  for (const auto& e : exemplars) {
    auto nc = project_all(e[WindowCategory::nc_p], space);
    auto nc_np = project_all(e[WindowCategory::nc_np], space);
    nc.insert(nc.end(), nc_np.begin(), nc_np.end());
    auto c = project_all(e[WindowCategory::c_p], space);
    auto c_np = project_all(e[WindowCategory::c_np], space);
    c.insert(c.end(), c_np.begin(), c_np.end());
    if (nc.empty() || c.empty()) continue;
    sum += mean_cross_distance(nc, c);
    ++used;
  }
  out.push_back(finish("NC-vs-C", sum, used));
  return out;
}

int find_t_peak(const Eigen::VectorXd& curve) {
  if (curve.size() == 0) throw std::invalid_argument("empty curve");
  int best = 0;
  for (int i = 1; i < curve.size(); ++i)
    if (curve(i) < curve(best)) best = i;
  return best;
}

LatencyAmplitude latency_amplitude(const Eigen::VectorXd& signal, double step_ms,
                                   double peak_fraction) {
  if (signal.size() <= kBaselineSteps)
    throw std::invalid_argument("signal shorter than the baseline");
  if (!(peak_fraction > 0 && peak_fraction <= 1))
    throw std::invalid_argument("peak fraction must be in (0, 1]");
  const double baseline = signal.head(kBaselineSteps).mean();
  const Eigen::ArrayXd dev = (signal.tail(signal.size() - kBaselineSteps).array() - baseline).abs();
  LatencyAmplitude r;
  r.amplitude = dev.maxCoeff();
  for (Eigen::Index i = 0; i < dev.size(); ++i)
    if (dev(i) >= peak_fraction * r.amplitude) {
      r.step = static_cast<int>(i) + kBaselineSteps;
      break;
    }
  r.latency_ms = r.step * step_ms;
  return r;
}

Eigen::VectorXd mean_activation_curve(std::span<const InterpolatedWindow> windows) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(kWindowSteps);
  if (windows.empty()) return sum;
  for (const auto& w : windows) sum += w.values.rowwise().mean();
  return sum / static_cast<double>(windows.size());
}

DecodeResult linear_decode(const Eigen::MatrixXd& features, std::span<const int> labels,
                           const DecodeConfig& cfg) {
  const auto n = features.rows();
  if (static_cast<std::size_t>(n) != labels.size())
    throw std::invalid_argument("feature and label counts differ");
  if (n < 2) throw std::invalid_argument("decoding needs at least two frames");
  if (cfg.folds < 1) throw std::invalid_argument("fold count must be positive");

  std::vector<int> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  auto class_col = [&](int label) {
    return static_cast<Eigen::Index>(std::lower_bound(classes.begin(), classes.end(), label) -
                                     classes.begin());
  };
  const auto k = static_cast<Eigen::Index>(classes.size());
  const auto d = features.cols();
  const auto n_train = std::clamp<Eigen::Index>(
      static_cast<Eigen::Index>(std::llround(cfg.train_fraction * static_cast<double>(n))), 1, n - 1);

  DecodeResult res;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (int fold = 0; fold < cfg.folds; ++fold) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng rng(derive_seed(cfg.seed, "decode-fold", static_cast<std::uint64_t>(fold)));
    shuffle(order.begin(), order.end(), rng);

    Eigen::MatrixXd x(n_train, d + 1);
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n_train, k);
    std::vector<bool> seen(static_cast<std::size_t>(k), false);
    for (Eigen::Index i = 0; i < n_train; ++i) {
      const auto src = order[static_cast<std::size_t>(i)];
      x.row(i).head(d) = features.row(src);
      x(i, d) = 1.0;
      const auto c = class_col(labels[static_cast<std::size_t>(src)]);
      y(i, c) = 1.0;
      seen[static_cast<std::size_t>(c)] = true;
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd s = svd.singularValues();
    const Eigen::VectorXd damp = s.array() / (s.array().square() + cfg.ridge);
    const Eigen::MatrixXd w =
        svd.matrixV() * damp.asDiagonal() * (svd.matrixU().transpose() * y);

    std::set<int> unseen;
    long correct = 0, scored = 0;
    for (Eigen::Index i = n_train; i < n; ++i) {
      const auto src = order[static_cast<std::size_t>(i)];
      const int label = labels[static_cast<std::size_t>(src)];
      if (!seen[static_cast<std::size_t>(class_col(label))]) {
        unseen.insert(label);
        continue;
      }
      Eigen::RowVectorXd score = features.row(src) * w.topRows(d) + w.row(d);
      Eigen::Index best = -1;
      for (Eigen::Index c = 0; c < k; ++c)
        if (seen[static_cast<std::size_t>(c)] && (best < 0 || score(c) > score(best))) best = c;
      correct += classes[static_cast<std::size_t>(best)] == label;
      ++scored;
    }
    res.fold_accuracy.push_back(scored ? static_cast<double>(correct) / static_cast<double>(scored)
                                       : std::numeric_limits<double>::quiet_NaN());
    res.unseen_classes.emplace_back(unseen.begin(), unseen.end());
  }
  std::vector<double> finite;
  for (double a : res.fold_accuracy)
    if (std::isfinite(a)) finite.push_back(a);
  if (finite.empty()) {
    res.mean = res.sd = std::numeric_limits<double>::quiet_NaN();
  } else {
    res.mean = std::accumulate(finite.begin(), finite.end(), 0.0) / static_cast<double>(finite.size());
    double ss = 0.0;
    for (double a : finite) ss += (a - res.mean) * (a - res.mean);
    res.sd = finite.size() > 1 ? std::sqrt(ss / static_cast<double>(finite.size() - 1)) : 0.0;
  }
  return res;
}

std::vector<int> frame_labels(const SegmentedUtterance& u, int frames, double frame_ms) {
  std::vector<int> out(static_cast<std::size_t>(std::max(frames, 0)), -1);
  std::size_t seg = 0;
  for (int t = 0; t < frames; ++t) {
    const double time = t * frame_ms;
    while (seg < u.segments.size() && u.segments[seg].offset_ms <= time) ++seg;
    if (seg < u.segments.size() && u.segments[seg].onset_ms <= time)
      out[static_cast<std::size_t>(t)] = u.segments[seg].phoneme.index();
  }
  return out;
}

DynamicsEntry make_entry(int layer, std::string condition, std::string noise, DistanceCurve c) {
  DynamicsEntry e;
  e.layer = layer;
  e.condition = std::move(condition);
  e.noise = std::move(noise);
  e.t_peak = find_t_peak(c.distance);
  e.response = latency_amplitude(c.distance);
  e.curve = std::move(c);
  return e;
}

namespace {

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string dynamics_json(const DynamicsReport& r) {
  json doc = json::object();
  json entries = json::array();
  for (const auto& e : r.entries) {
    json j = json::object();
    j["layer"] = e.layer;
    j["condition"] = e.condition;
    j["noise"] = e.noise;
    j["category"] = e.curve.label;
    j["phonemes"] = e.curve.phonemes;
    j["degenerate"] = e.curve.degenerate;
    j["t_peak"] = e.t_peak;
    j["latency_ms"] = e.response.latency_ms;
    j["amplitude"] = e.response.amplitude;
    j["distance"] = vec_json(e.curve.distance);
    j["z"] = vec_json(e.curve.z);
    entries.push_back(j);
  }
  doc["curves"] = entries;
  json dec = json::array();
  for (const auto& e : r.decoding) {
    json j = json::object();
    j["layer"] = e.layer;
    j["condition"] = e.condition;
    j["noise"] = e.noise;
    j["mean"] = finite_or_null(e.result.mean);
    j["sd"] = finite_or_null(e.result.sd);
    json folds = json::array();
    for (double a : e.result.fold_accuracy) folds.push_back(finite_or_null(a));
    j["folds"] = folds;
    j["unseen_classes"] = e.result.unseen_classes;
    dec.push_back(j);
  }
  doc["decoding"] = dec;
  doc["compared_phonemes"] = r.compared_phonemes;
  doc["warnings"] = r.warnings;
  return doc.dump(2) + "\n";
}

std::string dynamics_summary_csv(const DynamicsReport& r) {
  std::ostringstream os;
  os << "layer,condition,noise,category,t_peak,latency_ms,amplitude\n";
  for (const auto& e : r.entries)
    os << e.layer << ',' << e.condition << ',' << e.noise << ',' << e.curve.label << ','
       << e.t_peak << ',' << format_number(e.response.latency_ms) << ','
       << format_number(e.response.amplitude) << '\n';
  return os.str();
}

std::string dynamics_curves_csv(const DynamicsReport& r) {
  std::ostringstream os;
  os << "layer,condition,noise,category,step,distance,z\n";
  for (const auto& e : r.entries)
    for (Eigen::Index k = 0; k < e.curve.distance.size(); ++k)
      os << e.layer << ',' << e.condition << ',' << e.noise << ',' << e.curve.label << ',' << k
         << ',' << format_number(e.curve.distance(k)) << ',' << format_number(e.curve.z(k)) << '\n';
  return os.str();
}

std::string decoding_csv(const DynamicsReport& r) {
  std::ostringstream os;
  os << "layer,condition,noise,mean,sd,folds\n";
  for (const auto& e : r.decoding)
    os << e.layer << ',' << e.condition << ',' << e.noise << ',' << format_number(e.result.mean)
       << ',' << format_number(e.result.sd) << ',' << e.result.fold_accuracy.size() << '\n';
  return os.str();
}

}  // namespace phode
