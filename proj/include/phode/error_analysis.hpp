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

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "phode/alignment.hpp"
#include "phode/phoneme.hpp"

namespace phode {

/// Spoken x predicted counts over an ordered phoneme subset, with omission
/// and addition margins kept apart from the square core.
struct ConfusionMatrix {
  std::vector<Phoneme> phonemes;
  Eigen::MatrixXd counts;
  Eigen::VectorXd omissions;
  Eigen::VectorXd additions;

  static ConfusionMatrix empty(std::span<const Phoneme> subset);

  int size() const { return static_cast<int>(phonemes.size()); }
  /// -1 if the phoneme is not in the subset.
  int index_of(Phoneme p) const;
  /// Row-stochastic core; rows with zero total stay all-zero.
  Eigen::MatrixXd normalized() const;
  /// Indices of rows whose total is zero.
  std::vector<int> zero_rows() const;
  /// Keeps the listed phonemes (in the given order) without recounting.
  ConfusionMatrix restrict_to(std::span<const Phoneme> subset) const;
};

/// Row normalization of an arbitrary nonnegative matrix.
Eigen::MatrixXd row_normalize(const Eigen::MatrixXd& m);

/// Accumulates matched pairs, omissions and additions of every non-excluded
/// sentence. Entries involving phonemes outside the subset are ignored.
/// Throws std::invalid_argument for an empty subset.
ConfusionMatrix build_confusion(std::span<const AlignedSentence> sentences,
                                std::span<const Phoneme> subset);

/// CSV with a label header row and a label first column. The first header
/// cell is ignored; row and column labels must list the same phonemes in the
/// same order. Margins are absent and loaded as zeros.
ConfusionMatrix parse_confusion_csv(std::string_view text);
ConfusionMatrix load_confusion_csv(const std::filesystem::path& path);
std::string format_confusion_csv(const ConfusionMatrix& m, bool normalized);

enum class SimilarityMetric { diag_corr, offdiag_corr, row_kl, overall_corr, manhattan };
inline constexpr std::array<SimilarityMetric, 5> kAllSimilarityMetrics = {
    SimilarityMetric::diag_corr, SimilarityMetric::offdiag_corr, SimilarityMetric::row_kl,
    SimilarityMetric::overall_corr, SimilarityMetric::manhattan};
std::string_view to_string(SimilarityMetric m);
/// True when larger values mean closer agreement.
bool higher_is_better(SimilarityMetric m);

inline constexpr double kKlSmoothing = 1e-6;
inline constexpr int kDefaultShuffles = 1000;

struct SimilarityReport {
  std::vector<Phoneme> phonemes;
  double diag_corr = 0.0;
  double offdiag_corr = 0.0;
  double overall_corr = 0.0;
  double manhattan = 0.0;
  /// Mean over rows that are nonzero in both matrices.
  double row_kl_mean = 0.0;
  /// Per phoneme; NaN where either row is all-zero.
  std::vector<double> row_kl;
  std::array<double, 5> shuffle_p{};
  int n_shuffles = 0;
  std::vector<std::string> warnings;

  double value(SimilarityMetric m) const;
};

/// Evaluates one metric on two row-normalized matrices of equal size.
double similarity_metric(const Eigen::MatrixXd& sim, const Eigen::MatrixXd& human,
                         SimilarityMetric m);

/// Pearson correlation; NaN when either side has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

/// Metrics without the shuffle test. Throws std::invalid_argument when the
/// phoneme subsets differ.
SimilarityReport similarity_metrics(const ConfusionMatrix& sim, const ConfusionMatrix& human);

/// Relabels the simulated matrix with a random permutation applied to rows
/// and columns together, n times, and returns (count + 1) / (n + 1) where
/// count is the number of relabelings scoring at least as well as observed.
double shuffle_test(const ConfusionMatrix& sim, const ConfusionMatrix& human,
                    SimilarityMetric metric, int n, std::uint64_t seed);

using MatrixScore = std::function<double(const Eigen::MatrixXd& sim, const Eigen::MatrixXd& human)>;

/// Same test with an arbitrary score on the row-normalized matrices. The
/// stream name keys the permutation sequence; the named-metric overload uses
/// the metric's name.
double shuffle_test(const ConfusionMatrix& sim, const ConfusionMatrix& human,
                    const MatrixScore& score, bool higher_better, int n, std::uint64_t seed,
                    std::string_view stream);

/// Metrics plus a shuffle p-value for each; n below 100 adds a warning.
SimilarityReport compare_to_human(const ConfusionMatrix& sim, const ConfusionMatrix& human,
                                  int n_shuffles, std::uint64_t seed);

std::string similarity_json(const SimilarityReport& r);

enum class WordErrorCategory { correct, sub, add, om, failed, sub_om, sub_add, om_add, s_o_a };
inline constexpr std::array<WordErrorCategory, 9> kAllWordErrorCategories = {
    WordErrorCategory::correct, WordErrorCategory::sub,    WordErrorCategory::add,
    WordErrorCategory::om,      WordErrorCategory::failed, WordErrorCategory::sub_om,
    WordErrorCategory::sub_add, WordErrorCategory::om_add, WordErrorCategory::s_o_a};
std::string_view to_string(WordErrorCategory c);

struct WordErrorRecord {
  std::string sentence_id;
  int word_index = 0;
  std::string word;
  WordErrorCategory category = WordErrorCategory::correct;
};

/// Scores every three-phoneme word. Substitutions and omissions belong to the
/// word of their target; an addition belongs to the word whose time span
/// contains it (the earlier word on a shared boundary), otherwise to the last
/// word starting before it, or the first word if none does.
std::vector<WordErrorRecord> classify_word_errors(const AlignedSentence& a,
                                                  const SegmentedUtterance& u);

std::map<WordErrorCategory, int> tally(std::span<const WordErrorRecord> records);

struct RtRecord {
  std::string sentence_id;
  Phoneme phoneme{0};
  PhonemeClass phoneme_class = PhonemeClass::vowel;
  std::string condition;
  std::string noise;
  bool confused = false;
  double raw_rt_ms = 0.0;
  double adjusted_rt_ms = 0.0;
};

RtRecord reaction_time(const UtteranceWindow& w, const ClassDurations& means,
                       std::string condition, std::string noise, double frame_ms = 10.0);

struct CdfPoint {
  double rt_ms;
  double fraction;
};

/// Distinct sorted values with the fraction of samples at or below each.
/// Throws std::invalid_argument when empty.
std::vector<CdfPoint> empirical_cdf(std::vector<double> values);

using RtGroup = std::tuple<std::string, bool, std::string>;  // condition, confused, noise

std::map<RtGroup, std::vector<CdfPoint>> rt_cdf(std::span<const RtRecord> records,
                                                bool adjusted = false);

std::string rt_csv_header();
std::string format_rt_csv(std::span<const RtRecord> records);

}  // namespace phode
