// Copyright 2026 The Weight Surgery Authors.
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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ws/detect.hpp"
#include "ws/model.hpp"
#include "ws/simulator.hpp"
#include "ws/surgery.hpp"

namespace ws {

struct LabeledDistance {
  double distance = 0.0;
  bool matched = false;
};

struct ThresholdChoice {
  double threshold = 0.0;
  double accuracy = 0.0;
};

// Fraction of pairs classified correctly when distance <= threshold predicts
// "matched".
double accuracy_at(std::span<const LabeledDistance> pairs, double threshold);

// Maximizes training accuracy over the midpoints between adjacent distinct
// distances plus one sentinel below the minimum (min - 1) and one above the
// maximum (max + 1). Ties go to the smallest candidate.
ThresholdChoice pick_threshold(std::span<const LabeledDistance> train);

struct CrossValidation {
  double ba = 0.0;
  std::vector<double> thresholds;
  std::vector<double> fold_accuracies;
};

// Labeled feature distances for every fold, using columns of `features`.
std::vector<std::vector<LabeledDistance>> fold_distances(const Matrix& features,
                                                         std::span<const PairFold> folds);

// Threshold trained on every fold except `held_out`.
ThresholdChoice fold_threshold(std::span<const std::vector<LabeledDistance>> per_fold,
                               std::size_t held_out);

CrossValidation cross_validate(std::span<const std::vector<LabeledDistance>> per_fold);

CrossValidation cross_validated_ba(const WeightMatrix& w, const EmbeddingSet& samples,
                                   std::span<const PairFold> folds);

// Fraction of same-class test pairs pushed above the threshold.
double asr_sc(const WeightMatrix& w, double threshold, const EmbeddingSet& backdoor_test);
double asr_sc_features(const Matrix& features, double threshold);

// Fraction of cross-class test pairs pulled to or below the threshold.
double asr_mc(const WeightMatrix& w, double threshold, const EmbeddingSet& test_1,
              const EmbeddingSet& test_2);
double asr_mc_features(const Matrix& features_1, const Matrix& features_2, double threshold);

inline constexpr std::size_t kAngleBins = 90;
inline constexpr double kAngleBinWidth = 2.0;

struct Histogram {
  std::string name;
  std::vector<double> bin_centers;
  std::vector<std::size_t> counts;
};

struct NamedPairs {
  std::string name;
  std::vector<SamplePair> pairs;
};

double feature_angle_degrees(const Vector& f1, const Vector& f2);

// 90 bins of 2 degrees over [0, 180]; 180 itself lands in the last bin.
Histogram histogram_of_angles(std::string name, std::span<const double> degrees);

std::vector<Histogram> angle_histogram(const WeightMatrix& w, const EmbeddingSet& samples,
                                       std::span<const NamedPairs> sets);

struct ExperimentConfig {
  std::size_t folds = 10;
  std::size_t pairs_per_fold = 300;
  std::vector<BackdoorRequest> attacks;  // installed as one sequence per attack
  std::size_t repetitions = 10;
  bool hide = false;
  bool detect = false;
  bool histograms = true;
  std::uint64_t seed = 1;
  // Kept out of the benign folds in addition to the attacked classes, so
  // different attack lists can be compared on identical folds.
  std::vector<ClassId> reserved_classes;
};

struct BackdoorOutcome {
  std::string id;
  BackdoorKind kind = BackdoorKind::kShatteredClass;
  std::vector<ClassId> class_ids;
  double asr = 0.0;
  std::vector<double> asr_per_attack;
  std::optional<double> hidden_asr;
  std::vector<double> hidden_asr_per_attack;
};

struct DetectionSummary {
  std::size_t scanned = 0;
  std::size_t flagged = 0;
  std::optional<double> mean_ks_distance;
};

struct SeedRecord {
  std::uint64_t master = 0;
  std::optional<std::uint64_t> world;
  std::uint64_t pairs = 0;
  std::vector<std::uint64_t> attacks;
};

struct ExperimentReport {
  double clean_ba = 0.0;
  double backdoored_ba = 0.0;
  std::vector<double> clean_fold_accuracies;
  std::vector<double> thresholds_per_fold;
  std::vector<double> backdoored_ba_per_attack;
  std::vector<BackdoorOutcome> per_backdoor_asr;
  std::optional<double> hidden_ba;
  std::optional<DetectionSummary> detection_backdoored;
  std::optional<DetectionSummary> detection_hidden;
  std::vector<Histogram> histograms;
  SeedRecord seeds;
  std::size_t folds = 0;
  std::size_t repetitions = 0;
};

// repetitions x folds attacks. Attack (r, f) installs the configured sequence
// on w0 with fresh attack/test splits, re-picks the threshold on the folds
// other than f, and measures fold-f accuracy plus every backdoor's ASR.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const WeightMatrix& w0,
                                const EmbeddingSet& samples);

}  // namespace ws
