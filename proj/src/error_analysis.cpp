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

#include "phode/error_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "phode/rng.hpp"

namespace phode {

using nlohmann::json;

ConfusionMatrix ConfusionMatrix::empty(std::span<const Phoneme> subset) {
  if (subset.empty()) throw std::invalid_argument("confusion subset is empty");
  ConfusionMatrix m;
  m.phonemes.assign(subset.begin(), subset.end());
  for (std::size_t i = 0; i < subset.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (subset[i] == subset[j])
        throw std::invalid_argument("duplicate phoneme in subset: " +
                                    std::string(subset[i].symbol()));
  const auto n = static_cast<Eigen::Index>(subset.size());
  m.counts = Eigen::MatrixXd::Zero(n, n);
  m.omissions = Eigen::VectorXd::Zero(n);
  m.additions = Eigen::VectorXd::Zero(n);
  return m;
}

int ConfusionMatrix::index_of(Phoneme p) const {
  auto it = std::find(phonemes.begin(), phonemes.end(), p);
  return it == phonemes.end() ? -1 : static_cast<int>(it - phonemes.begin());
}

Eigen::MatrixXd row_normalize(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double total = m.row(r).sum();
    if (total > 0) out.row(r) /= total;
    else out.row(r).setZero();
  }
  return out;
}

Eigen::MatrixXd ConfusionMatrix::normalized() const { return row_normalize(counts); }

std::vector<int> ConfusionMatrix::zero_rows() const {
  std::vector<int> out;
  for (Eigen::Index r = 0; r < counts.rows(); ++r)
    if (!(counts.row(r).sum() > 0)) out.push_back(static_cast<int>(r));
  return out;
}

ConfusionMatrix ConfusionMatrix::restrict_to(std::span<const Phoneme> subset) const {
  ConfusionMatrix out = empty(subset);
  std::vector<int> src(subset.size());
  for (std::size_t i = 0; i < subset.size(); ++i) {
    src[i] = index_of(subset[i]);
    if (src[i] < 0)
      throw std::invalid_argument("phoneme " + std::string(subset[i].symbol()) +
                                  " is not in the matrix");
  }
  for (std::size_t i = 0; i < subset.size(); ++i) {
    out.omissions(i) = omissions(src[i]);
    out.additions(i) = additions(src[i]);
    for (std::size_t j = 0; j < subset.size(); ++j) out.counts(i, j) = counts(src[i], src[j]);
  }
  return out;
}

ConfusionMatrix build_confusion(std::span<const AlignedSentence> sentences,
                                std::span<const Phoneme> subset) {
  ConfusionMatrix m = ConfusionMatrix::empty(subset);
  for (const auto& s : sentences) {
    if (s.excluded) continue;
    for (const auto& p : s.pairs) {
      const int spoken = p.target ? m.index_of(p.target->phoneme) : -1;
      const int said = p.predicted ? m.index_of(p.predicted->token.phoneme()) : -1;
      switch (p.kind()) {
        case PairKind::match:
        case PairKind::sub:
          if (spoken >= 0 && said >= 0) m.counts(spoken, said) += 1;
          break;
        case PairKind::om:
          if (spoken >= 0) m.omissions(spoken) += 1;
          break;
        case PairKind::add:
          if (said >= 0) m.additions(said) += 1;
          break;
      }
    }
  }
  return m;
}

ConfusionMatrix parse_confusion_csv(std::string_view text) {
  std::vector<std::string> lines;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  std::size_t first = 0;
  while (first < lines.size() && lines[first].empty()) ++first;
  if (first == lines.size()) throw ParseError("empty confusion matrix", 1);

  auto header = split_csv_line(lines[first]);
  std::vector<Phoneme> labels;
  for (std::size_t c = 1; c < header.size(); ++c) {
    auto p = Phoneme::from_symbol(header[c]);
    if (!p) throw ParseError("unknown phoneme '" + header[c] + "' in header", first + 1);
    labels.push_back(*p);
  }
  ConfusionMatrix m;
  try {
    m = ConfusionMatrix::empty(labels);
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), first + 1);
  }

  std::size_t row = 0;
  for (std::size_t i = first + 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::size_t lineno = i + 1;
    auto f = split_csv_line(lines[i]);
    if (f.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(f.size()),
                       lineno);
    if (row >= labels.size()) throw ParseError("more rows than columns", lineno);
    if (f[0] != labels[row].symbol())
      throw ParseError("row label '" + f[0] + "' does not match column '" +
                           std::string(labels[row].symbol()) + "'",
                       lineno);
    for (std::size_t c = 1; c < f.size(); ++c) {
      double v = 0.0;
      std::size_t used = 0;
      try {
        v = std::stod(f[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != f[c].size() || f[c].empty() || !std::isfinite(v) || v < 0)
        throw ParseError("invalid count '" + f[c] + "'", lineno);
      m.counts(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c - 1)) = v;
    }
    ++row;
  }
  if (row != labels.size())
    throw ParseError("expected " + std::to_string(labels.size()) + " rows, got " +
                         std::to_string(row),
                     lines.size());
  return m;
}

ConfusionMatrix load_confusion_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_confusion_csv(ss.str());
}

std::string format_confusion_csv(const ConfusionMatrix& m, bool normalized) {
  const Eigen::MatrixXd v = normalized ? m.normalized() : m.counts;
  std::ostringstream os;
  os << "spoken";
  for (auto p : m.phonemes) os << ',' << p.symbol();
  os << '\n';
  for (int r = 0; r < m.size(); ++r) {
    os << m.phonemes[r].symbol();
    for (int c = 0; c < m.size(); ++c) os << ',' << format_number(v(r, c));
    os << '\n';
  }
  return os.str();
}

std::string_view to_string(SimilarityMetric m) {
  switch (m) {
    case SimilarityMetric::diag_corr: return "diag_corr";
    case SimilarityMetric::offdiag_corr: return "offdiag_corr";
    case SimilarityMetric::row_kl: return "row_kl";
    case SimilarityMetric::overall_corr: return "overall_corr";
    case SimilarityMetric::manhattan: return "manhattan";
  }
  return "?";
}

bool higher_is_better(SimilarityMetric m) {
  return m != SimilarityMetric::row_kl && m != SimilarityMetric::manhattan;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
  const double n = static_cast<double>(a.size());
  if (a.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0) || !(sbb > 0)) return std::numeric_limits<double>::quiet_NaN();
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

namespace {

struct KlResult {
  double mean;
  std::vector<double> rows;
};

KlResult row_kl(const Eigen::MatrixXd& sim, const Eigen::MatrixXd& human) {
  KlResult out{0.0, std::vector<double>(static_cast<std::size_t>(sim.rows()),
                                        std::numeric_limits<double>::quiet_NaN())};
  int used = 0;
  for (Eigen::Index r = 0; r < sim.rows(); ++r) {
    if (!(sim.row(r).sum() > 0) || !(human.row(r).sum() > 0)) continue;
    Eigen::RowVectorXd q = sim.row(r).array() + kKlSmoothing;
    Eigen::RowVectorXd p = human.row(r).array() + kKlSmoothing;
    q /= q.sum();
    p /= p.sum();
    double kl = 0.0;
    for (Eigen::Index c = 0; c < p.size(); ++c) kl += p(c) * std::log(p(c) / q(c));
    out.rows[static_cast<std::size_t>(r)] = std::max(kl, 0.0);
    out.mean += std::max(kl, 0.0);
    ++used;
  }
  out.mean = used ? out.mean / used : std::numeric_limits<double>::quiet_NaN();
  return out;
}

std::vector<double> diagonal(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(m(i, i));
  return out;
}

std::vector<double> off_diagonal(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (i != j) out.push_back(m(i, j));
  return out;
}

std::vector<double> all_entries(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  return out;
}

void require_same_subset(const ConfusionMatrix& sim, const ConfusionMatrix& human) {
  if (sim.phonemes != human.phonemes)
    throw std::invalid_argument("simulated and human matrices cover different phoneme subsets");
}

std::size_t metric_slot(SimilarityMetric m) { return static_cast<std::size_t>(m); }

}  // namespace

double similarity_metric(const Eigen::MatrixXd& sim, const Eigen::MatrixXd& human,
                         SimilarityMetric m) {
  if (sim.rows() != human.rows() || sim.cols() != human.cols())
    throw std::invalid_argument("matrix shapes differ");
  switch (m) {
    case SimilarityMetric::diag_corr: return pearson(diagonal(sim), diagonal(human));
    case SimilarityMetric::offdiag_corr: return pearson(off_diagonal(sim), off_diagonal(human));
    case SimilarityMetric::overall_corr: return pearson(all_entries(sim), all_entries(human));
    case SimilarityMetric::manhattan: return (sim - human).cwiseAbs().sum();
    case SimilarityMetric::row_kl: return row_kl(sim, human).mean;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

double SimilarityReport::value(SimilarityMetric m) const {
  switch (m) {
    case SimilarityMetric::diag_corr: return diag_corr;
    case SimilarityMetric::offdiag_corr: return offdiag_corr;
    case SimilarityMetric::overall_corr: return overall_corr;
    case SimilarityMetric::manhattan: return manhattan;
    case SimilarityMetric::row_kl: return row_kl_mean;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

SimilarityReport similarity_metrics(const ConfusionMatrix& sim, const ConfusionMatrix& human) {
  require_same_subset(sim, human);
  const Eigen::MatrixXd s = sim.normalized(), h = human.normalized();
  SimilarityReport r;
  r.phonemes = sim.phonemes;
  r.diag_corr = similarity_metric(s, h, SimilarityMetric::diag_corr);
  r.offdiag_corr = similarity_metric(s, h, SimilarityMetric::offdiag_corr);
  r.overall_corr = similarity_metric(s, h, SimilarityMetric::overall_corr);
  r.manhattan = similarity_metric(s, h, SimilarityMetric::manhattan);
  auto kl = row_kl(s, h);
  r.row_kl_mean = kl.mean;
  r.row_kl = std::move(kl.rows);
  r.shuffle_p.fill(std::numeric_limits<double>::quiet_NaN());
  if (!sim.zero_rows().empty()) r.warnings.push_back("simulated matrix has all-zero rows");
  if (!human.zero_rows().empty()) r.warnings.push_back("human matrix has all-zero rows");
  return r;
}

double shuffle_test(const ConfusionMatrix& sim, const ConfusionMatrix& human,
                    const MatrixScore& score, bool higher_better, int n, std::uint64_t seed,
                    std::string_view stream) {
  require_same_subset(sim, human);
  if (n <= 0) throw std::invalid_argument("shuffle count must be positive");
  const Eigen::MatrixXd s = sim.normalized(), h = human.normalized();
  const double observed = score(s, h);
  const auto size = s.rows();

  Rng rng(derive_seed(seed, "shuffle", stream));
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(size));
  Eigen::MatrixXd shuffled(size, size);
  int count = 0;
  for (int k = 0; k < n; ++k) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    shuffle(perm.begin(), perm.end(), rng);
    for (Eigen::Index i = 0; i < size; ++i)
      for (Eigen::Index j = 0; j < size; ++j)
        shuffled(i, j) = s(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    const double v = score(shuffled, h);
    if (higher_better ? v >= observed : v <= observed) ++count;
  }
  return static_cast<double>(count + 1) / static_cast<double>(n + 1);
}

double shuffle_test(const ConfusionMatrix& sim, const ConfusionMatrix& human,
                    SimilarityMetric metric, int n, std::uint64_t seed) {
  return shuffle_test(
      sim, human,
      [metric](const Eigen::MatrixXd& s, const Eigen::MatrixXd& h) {
        return similarity_metric(s, h, metric);
      },
      higher_is_better(metric), n, seed, to_string(metric));
}

SimilarityReport compare_to_human(const ConfusionMatrix& sim, const ConfusionMatrix& human,
                                  int n_shuffles, std::uint64_t seed) {
  SimilarityReport r = similarity_metrics(sim, human);
  r.n_shuffles = n_shuffles;
  if (n_shuffles < 100)
    r.warnings.push_back("only " + std::to_string(n_shuffles) +
                         " shuffles; p-values are coarse below 100");
  for (auto m : kAllSimilarityMetrics)
    r.shuffle_p[metric_slot(m)] = shuffle_test(sim, human, m, n_shuffles, seed);
  return r;
}

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string similarity_json(const SimilarityReport& r) {
  json doc = json::object();
  json phonemes = json::array();
  for (auto p : r.phonemes) phonemes.push_back(std::string(p.symbol()));
  doc["phonemes"] = phonemes;
  json metrics = json::object(), pvals = json::object();
  for (auto m : kAllSimilarityMetrics) {
    metrics[std::string(to_string(m))] = number_or_null(r.value(m));
    pvals[std::string(to_string(m))] = number_or_null(r.shuffle_p[metric_slot(m)]);
  }
  doc["metrics"] = metrics;
  doc["shuffle_p"] = pvals;
  json per_row = json::object();
  for (std::size_t i = 0; i < r.phonemes.size() && i < r.row_kl.size(); ++i)
    per_row[std::string(r.phonemes[i].symbol())] = number_or_null(r.row_kl[i]);
  doc["row_kl"] = per_row;
  doc["n_shuffles"] = r.n_shuffles;
  doc["warnings"] = r.warnings;
  return doc.dump(2) + "\n";
}

std::string_view to_string(WordErrorCategory c) {
  switch (c) {
    case WordErrorCategory::correct: return "Correct";
    case WordErrorCategory::sub: return "Sub";
    case WordErrorCategory::add: return "Add";
    case WordErrorCategory::om: return "Om";
    case WordErrorCategory::failed: return "Failed";
    case WordErrorCategory::sub_om: return "Sub-Om";
    case WordErrorCategory::sub_add: return "Sub-Add";
    case WordErrorCategory::om_add: return "Om-Add";
    case WordErrorCategory::s_o_a: return "S-O-A";
  }
  return "?";
}

namespace {

struct WordSpan {
  int first_segment;
  int length;
  double onset_ms;
  double offset_ms;
};

std::vector<WordSpan> word_spans(const SegmentedUtterance& u) {
  std::vector<WordSpan> spans;
  for (std::size_t i = 0; i < u.segments.size(); ++i) {
    const auto& s = u.segments[i];
    if (i == 0 || s.word_index != u.segments[i - 1].word_index)
      spans.push_back({static_cast<int>(i), 0, s.onset_ms, s.offset_ms});
    spans.back().length += 1;
    spans.back().offset_ms = s.offset_ms;
  }
  return spans;
}

WordErrorCategory categorize(bool s, bool o, bool a) {
  if (s && o && a) return WordErrorCategory::s_o_a;
  if (s && o) return WordErrorCategory::sub_om;
  if (s && a) return WordErrorCategory::sub_add;
  if (o && a) return WordErrorCategory::om_add;
  if (s) return WordErrorCategory::sub;
  if (o) return WordErrorCategory::om;
  if (a) return WordErrorCategory::add;
  return WordErrorCategory::correct;
}

}  // namespace

std::vector<WordErrorRecord> classify_word_errors(const AlignedSentence& a,
                                                  const SegmentedUtterance& u) {
  std::vector<WordErrorRecord> out;
  if (a.excluded) return out;
  const auto spans = word_spans(u);
  if (spans.empty()) return out;

  std::vector<int> word_of_segment(u.segments.size());
  for (std::size_t w = 0; w < spans.size(); ++w)
    for (int k = 0; k < spans[w].length; ++k)
      word_of_segment[static_cast<std::size_t>(spans[w].first_segment + k)] = static_cast<int>(w);

  auto word_for_time = [&](double t) {
    for (std::size_t w = 0; w < spans.size(); ++w)
      if (spans[w].onset_ms <= t && t <= spans[w].offset_ms) return static_cast<int>(w);
    int best = 0;
    for (std::size_t w = 0; w < spans.size(); ++w)
      if (spans[w].onset_ms < t) best = static_cast<int>(w);
    return best;
  };

  struct Flags {
    bool sub = false, om = false, add = false;
    int errored_targets = 0;
  };
  std::vector<Flags> flags(spans.size());
  for (const auto& p : a.pairs) {
    const PairKind k = p.kind();
    if (k == PairKind::match) continue;
    if (k == PairKind::add) {
      flags[static_cast<std::size_t>(word_for_time(p.predicted->time_ms))].add = true;
      continue;
    }
    if (p.target_index < 0 || p.target_index >= static_cast<int>(u.segments.size()))
      throw std::invalid_argument("alignment target index outside the segmentation");
    auto& f = flags[static_cast<std::size_t>(word_of_segment[static_cast<std::size_t>(p.target_index)])];
    (k == PairKind::sub ? f.sub : f.om) = true;
    f.errored_targets += 1;
  }

  for (std::size_t w = 0; w < spans.size(); ++w) {
    if (spans[w].length != 3) continue;
    WordErrorRecord r;
    r.sentence_id = a.sentence_id.empty() ? u.sentence_id : a.sentence_id;
    r.word_index = u.segments[static_cast<std::size_t>(spans[w].first_segment)].word_index;
    if (w < u.words.size()) r.word = u.words[w].text;
    const auto& f = flags[w];
    r.category = f.errored_targets >= 3 ? WordErrorCategory::failed
                                        : categorize(f.sub, f.om, f.add);
    out.push_back(std::move(r));
  }
  return out;
}

std::map<WordErrorCategory, int> tally(std::span<const WordErrorRecord> records) {
  std::map<WordErrorCategory, int> out;
  for (auto c : kAllWordErrorCategories) out[c] = 0;
  for (const auto& r : records) out[r.category] += 1;
  return out;
}

RtRecord reaction_time(const UtteranceWindow& w, const ClassDurations& means,
                       std::string condition, std::string noise, double frame_ms) {
  RtRecord r;
  r.sentence_id = w.sentence_id;
  r.phoneme = w.phoneme;
  r.phoneme_class = classify(w.phoneme);
  r.condition = std::move(condition);
  r.noise = std::move(noise);
  r.confused = w.confused;
  r.raw_rt_ms = static_cast<double>(w.span_frames()) * frame_ms;
  r.adjusted_rt_ms = r.raw_rt_ms - means.for_class(r.phoneme_class);
  return r;
}

std::vector<CdfPoint> empirical_cdf(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("empirical CDF of an empty group");
  std::sort(values.begin(), values.end());
  std::vector<CdfPoint> out;
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i + 1 < values.size() && values[i + 1] == values[i]) continue;
    out.push_back({values[i], static_cast<double>(i + 1) / n});
  }
  return out;
}

std::map<RtGroup, std::vector<CdfPoint>> rt_cdf(std::span<const RtRecord> records,
                                                bool adjusted) {
  std::map<RtGroup, std::vector<double>> groups;
  for (const auto& r : records)
    groups[{r.condition, r.confused, r.noise}].push_back(adjusted ? r.adjusted_rt_ms
                                                                  : r.raw_rt_ms);
  std::map<RtGroup, std::vector<CdfPoint>> out;
  for (auto& [key, values] : groups) out[key] = empirical_cdf(std::move(values));
  return out;
}

std::string rt_csv_header() {
  return "sentence_id,phoneme,class,condition,noise,confused,raw_rt_ms,adjusted_rt_ms\n";
}

std::string format_rt_csv(std::span<const RtRecord> records) {
  std::ostringstream os;
  for (const auto& r : records)
    os << r.sentence_id << ',' << r.phoneme.symbol() << ',' << to_string(r.phoneme_class) << ','
       << r.condition << ',' << r.noise << ',' << (r.confused ? 1 : 0) << ','
       << format_number(r.raw_rt_ms) << ',' << format_number(r.adjusted_rt_ms) << '\n';
  return os.str();
}

}  // namespace phode
