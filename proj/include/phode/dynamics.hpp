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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phode/alignment.hpp"
#include "phode/model.hpp"
#include "phode/phoneme.hpp"

namespace phode {

inline constexpr int kWindowSteps = 40;
inline constexpr int kBaselineSteps = 3;

/// Successor statistics over token ids (blank and space rows stay empty).
struct BigramModel {
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(kNumTokens, kNumTokens);
  /// Per predecessor token id: the probable successor token ids.
  std::vector<std::vector<int>> probable = std::vector<std::vector<int>>(kNumTokens);

  /// The first phoneme of a sentence (no predecessor) and successors of an
  /// unseen predecessor are not probable.
  bool is_probable(std::optional<Phoneme> previous, Phoneme next) const;
};

/// Counts transitions within each sequence. A predecessor's probable set is
/// its ceil(10%) most frequent distinct successors (at least one); equal
/// counts are broken by lower token id.
BigramModel fit_bigram(std::span<const std::vector<Phoneme>> sequences);

/// Sets the `probable` flag of each window from its spoken predecessor.
void label_probable(std::span<UtteranceWindow> windows, const SegmentedUtterance& u,
                    const BigramModel& bigram);

enum class WindowCategory { c_p, c_np, nc_p, nc_np };
inline constexpr std::array<WindowCategory, 4> kAllWindowCategories = {
    WindowCategory::c_p, WindowCategory::c_np, WindowCategory::nc_p, WindowCategory::nc_np};
std::string_view to_string(WindowCategory c);
WindowCategory category_of(const UtteranceWindow& w);

struct WindowConfig {
  double pre_fraction = 0.2;
  double post_fraction = 0.25;
  bool zscore = true;
};

struct InterpolatedWindow {
  std::string sentence_id;
  Phoneme phoneme{0};
  WindowCategory category = WindowCategory::nc_np;
  int layer_index = 0;
  /// kWindowSteps x units.
  Eigen::MatrixXd values;
  /// The expanded span reached past the trace and was clamped.
  bool clamped = false;
};

/// Resamples [onset - pre*L, prediction + post*L] (L = prediction - onset in
/// frames) of a frames x units trace to kWindowSteps points by linear
/// interpolation, then z-scores each unit over the steps (population sd;
/// constant units become zero).
InterpolatedWindow interpolate_window(const Eigen::MatrixXd& trace, const UtteranceWindow& w,
                                      int layer_index, const WindowConfig& cfg = {});
InterpolatedWindow interpolate_window(const LayerActivationTrace& trace, const UtteranceWindow& w,
                                      const WindowConfig& cfg = {});

struct ExemplarSet {
  Phoneme phoneme{0};
  std::array<std::vector<InterpolatedWindow>, 4> by_category;

  const std::vector<InterpolatedWindow>& operator[](WindowCategory c) const {
    return by_category[static_cast<std::size_t>(c)];
  }
};

struct ExemplarConfig {
  int max_per_category = 50;
  int min_per_category = 2;
};

/// Keeps the first max_per_category windows of each category in input order;
/// phonemes short of min_per_category in any category are dropped.
std::vector<ExemplarSet> collect_exemplars(std::span<const InterpolatedWindow> windows,
                                           const ExemplarConfig& cfg = {});

struct PCSpace {
  Eigen::VectorXd mean;
  /// units x retained, orthonormal columns.
  Eigen::MatrixXd components;
  /// Fraction of total variance per singular direction, non-increasing.
  Eigen::VectorXd explained;
  int retained = 0;

  /// Rows are observations: (rows x units) -> (rows x retained).
  Eigen::MatrixXd project(const Eigen::MatrixXd& rows) const;
  Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& scores) const;
};

/// PCA over every step row of every window. Keeps the fewest components
/// whose cumulative explained variance reaches `threshold`.
PCSpace fit_pca(std::span<const InterpolatedWindow> windows, double threshold = 0.9);
PCSpace fit_pca(const Eigen::MatrixXd& rows, double threshold = 0.9);

/// Mean Euclidean distance over all unordered pairs at each step.
Eigen::VectorXd mean_pairwise_distance(std::span<const Eigen::MatrixXd> trajectories);
/// Mean Euclidean distance over all (a, b) pairs at each step.
Eigen::VectorXd mean_cross_distance(std::span<const Eigen::MatrixXd> a,
                                    std::span<const Eigen::MatrixXd> b);

enum class DistanceMode { within_category, between_nc_and_c };

struct DistanceCurve {
  std::string label;
  Eigen::VectorXd distance;
  /// distance z-scored across steps.
  Eigen::VectorXd z;
  int phonemes = 0;
  /// Fewer than two trajectories for every phoneme: the curve is zero.
  bool degenerate = false;
};

/// Curves averaged across phonemes. Within-category mode yields one curve
/// per category; the between mode yields one NC-vs-C curve where NC and C
/// pool their P and NP sets.
std::vector<DistanceCurve> distance_curves(std::span<const ExemplarSet> exemplars,
                                           const PCSpace& space, DistanceMode mode);

Eigen::VectorXd zscore(const Eigen::VectorXd& v);

/// Index of the minimum, earliest on ties.
int find_t_peak(const Eigen::VectorXd& curve);

struct LatencyAmplitude {
  double latency_ms = 0.0;
  double amplitude = 0.0;
  int step = 0;
};

/// Baseline is the mean of the first kBaselineSteps steps. Amplitude is the
/// largest absolute deviation over the remaining steps; latency is the
/// earliest of those steps whose deviation reaches peak_fraction of it
/// (1.0 selects the first exact maximum).
LatencyAmplitude latency_amplitude(const Eigen::VectorXd& signal, double step_ms = 10.0,
                                   double peak_fraction = 0.9);

/// Mean over windows and units at each step.
Eigen::VectorXd mean_activation_curve(std::span<const InterpolatedWindow> windows);

struct DecodeConfig {
  int folds = 10;
  double train_fraction = 0.8;
  double ridge = 1e-6;
  std::uint64_t seed = 0;
};

struct DecodeResult {
  std::vector<double> fold_accuracy;
  double mean = 0.0;
  double sd = 0.0;
  /// Per fold, the classes present in the test split but absent from training.
  std::vector<std::vector<int>> unseen_classes;
};

/// One-vs-all least squares on class indicators with a bias column, solved
/// through the SVD of the training design with Tikhonov damping. Test frames
/// of classes unseen in training are left out of that fold's score.
DecodeResult linear_decode(const Eigen::MatrixXd& features, std::span<const int> labels,
                           const DecodeConfig& cfg = {});

/// Phoneme index active at each frame (frame time = index * frame_ms), -1
/// outside every segment.
std::vector<int> frame_labels(const SegmentedUtterance& u, int frames, double frame_ms = 10.0);

struct DynamicsEntry {
  int layer = 0;
  std::string condition;
  std::string noise;
  DistanceCurve curve;
  int t_peak = 0;
  LatencyAmplitude response;
};

struct DecodeEntry {
  int layer = 0;
  std::string condition;
  std::string noise;
  DecodeResult result;
};

struct DynamicsReport {
  std::vector<DynamicsEntry> entries;
  std::vector<DecodeEntry> decoding;
  /// Phonemes with enough exemplars, per (condition, noise, layer).
  std::map<std::string, std::vector<std::string>> compared_phonemes;
  std::vector<std::string> warnings;
};

/// Builds the entries for one curve: t_peak and latency/amplitude are taken
/// from the raw distance curve.
DynamicsEntry make_entry(int layer, std::string condition, std::string noise, DistanceCurve c);

std::string dynamics_json(const DynamicsReport& r);
/// layer,condition,noise,category,t_peak,latency_ms,amplitude
std::string dynamics_summary_csv(const DynamicsReport& r);
/// Long format: layer,condition,noise,category,step,distance,z
std::string dynamics_curves_csv(const DynamicsReport& r);
/// layer,condition,noise,mean,sd,folds
std::string decoding_csv(const DynamicsReport& r);

}  // namespace phode
