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

#include "ws/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <string>

#include "ws/errors.hpp"
#include "ws/seeding.hpp"

namespace ws {

namespace {

enum Stream : std::uint64_t { kPairs = 11, kAttack = 12, kHide = 13 };

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

Matrix unit_columns(const Matrix& features) {
  Matrix out(features.rows(), features.cols());
  for (Eigen::Index i = 0; i < features.cols(); ++i) out.col(i) = normalize(features.col(i));
  return out;
}

double unit_distance(const Matrix& units, std::size_t a, std::size_t b) {
  return (units.col(static_cast<Eigen::Index>(a)) - units.col(static_cast<Eigen::Index>(b))).squaredNorm();
}

std::string plan_id(std::size_t index, const BackdoorRequest& r) {
  std::string id = std::to_string(index) + ":" + std::string(backdoor_kind_name(r.kind));
  for (ClassId c : r.class_ids) id += ":" + std::to_string(c);
  if (r.kind == BackdoorKind::kMergedClasses && !r.stretch) id += ":nostretch";
  return id;
}

}  // namespace

double accuracy_at(std::span<const LabeledDistance> pairs, double threshold) {
  if (pairs.empty()) throw Error(ErrorCode::kEmptyPairs, "accuracy of an empty pair list");
  std::size_t correct = 0;
  for (const auto& p : pairs) {
    if ((p.distance <= threshold) == p.matched) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

ThresholdChoice pick_threshold(std::span<const LabeledDistance> train) {
  std::vector<LabeledDistance> sorted(train.begin(), train.end());
  const auto matched_total = static_cast<std::size_t>(
      std::count_if(sorted.begin(), sorted.end(), [](const auto& p) { return p.matched; }));
  if (matched_total == 0 || matched_total == sorted.size()) {
    throw Error(ErrorCode::kEmptyPairs, "threshold selection needs matched and mismatched pairs");
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& x, const auto& y) { return x.distance < y.distance; });

  // Below every distance all pairs are predicted mismatched.
  std::size_t correct = sorted.size() - matched_total;
  std::size_t best_correct = correct;
  double best_threshold = sorted.front().distance - 1.0;

  std::size_t i = 0;
  while (i < sorted.size()) {
    const double v = sorted[i].distance;
    while (i < sorted.size() && sorted[i].distance == v) {
      if (sorted[i].matched) {
        ++correct;
      } else {
        --correct;
      }
      ++i;
    }
    const double candidate = i < sorted.size() ? v + (sorted[i].distance - v) / 2.0 : v + 1.0;
    if (correct > best_correct) {
      best_correct = correct;
      best_threshold = candidate;
    }
  }
  return {best_threshold, static_cast<double>(best_correct) / static_cast<double>(sorted.size())};
}

std::vector<std::vector<LabeledDistance>> fold_distances(const Matrix& features,
                                                         std::span<const PairFold> folds) {
  const Matrix units = unit_columns(features);
  std::vector<std::vector<LabeledDistance>> out;
  out.reserve(folds.size());
  for (const PairFold& fold : folds) {
    std::vector<LabeledDistance> labeled;
    labeled.reserve(fold.matched.size() + fold.mismatched.size());
    for (const auto& p : fold.matched) labeled.push_back({unit_distance(units, p.a, p.b), true});
    for (const auto& p : fold.mismatched) labeled.push_back({unit_distance(units, p.a, p.b), false});
    out.push_back(std::move(labeled));
  }
  return out;
}

ThresholdChoice fold_threshold(std::span<const std::vector<LabeledDistance>> per_fold,
                               std::size_t held_out) {
  std::vector<LabeledDistance> train;
  for (std::size_t f = 0; f < per_fold.size(); ++f) {
    if (f != held_out) train.insert(train.end(), per_fold[f].begin(), per_fold[f].end());
  }
  return pick_threshold(train);
}

CrossValidation cross_validate(std::span<const std::vector<LabeledDistance>> per_fold) {
  if (per_fold.size() < 2) {
    throw Error(ErrorCode::kTooFewFolds, "cross-validation needs at least 2 folds");
  }
  CrossValidation cv;
  for (std::size_t f = 0; f < per_fold.size(); ++f) {
    const ThresholdChoice choice = fold_threshold(per_fold, f);
    cv.thresholds.push_back(choice.threshold);
    cv.fold_accuracies.push_back(accuracy_at(per_fold[f], choice.threshold));
  }
  cv.ba = mean(cv.fold_accuracies);
  return cv;
}

CrossValidation cross_validated_ba(const WeightMatrix& w, const EmbeddingSet& samples,
                                   std::span<const PairFold> folds) {
  if (folds.size() < 2) throw Error(ErrorCode::kTooFewFolds, "cross-validation needs at least 2 folds");
  const auto per_fold = fold_distances(w.matrix() * samples.vectors(), folds);
  return cross_validate(per_fold);
}

double asr_sc_features(const Matrix& features, double threshold) {
  const Eigen::Index n = features.cols();
  if (n < 2) throw Error(ErrorCode::kTooFewSamples, "SC success rate needs at least 2 test samples");
  const Matrix units = unit_columns(features);
  std::size_t success = 0;
  std::size_t total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if ((units.col(i) - units.col(j)).squaredNorm() > threshold) ++success;
      ++total;
    }
  }
  return static_cast<double>(success) / static_cast<double>(total);
}

double asr_sc(const WeightMatrix& w, double threshold, const EmbeddingSet& backdoor_test) {
  if (backdoor_test.dim() != w.m()) throw Error(ErrorCode::kDimensionMismatch, "test samples do not fit the layer");
  return asr_sc_features(w.matrix() * backdoor_test.vectors(), threshold);
}

double asr_mc_features(const Matrix& features_1, const Matrix& features_2, double threshold) {
  if (features_1.cols() == 0 || features_2.cols() == 0) {
    throw Error(ErrorCode::kEmptySamples, "MC success rate needs test samples from both classes");
  }
  const Matrix u1 = unit_columns(features_1);
  const Matrix u2 = unit_columns(features_2);
  std::size_t success = 0;
  for (Eigen::Index i = 0; i < u1.cols(); ++i) {
    for (Eigen::Index j = 0; j < u2.cols(); ++j) {
      if ((u1.col(i) - u2.col(j)).squaredNorm() <= threshold) ++success;
    }
  }
  return static_cast<double>(success) / static_cast<double>(u1.cols() * u2.cols());
}

double asr_mc(const WeightMatrix& w, double threshold, const EmbeddingSet& test_1,
              const EmbeddingSet& test_2) {
  if (test_1.dim() != w.m() || test_2.dim() != w.m()) {
    throw Error(ErrorCode::kDimensionMismatch, "test samples do not fit the layer");
  }
  return asr_mc_features(w.matrix() * test_1.vectors(), w.matrix() * test_2.vectors(), threshold);
}

double feature_angle_degrees(const Vector& f1, const Vector& f2) {
  const double c = std::clamp(normalize(f1).dot(normalize(f2)), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

Histogram histogram_of_angles(std::string name, std::span<const double> degrees) {
  Histogram h;
  h.name = std::move(name);
  h.counts.assign(kAngleBins, 0);
  for (std::size_t b = 0; b < kAngleBins; ++b) {
    h.bin_centers.push_back((static_cast<double>(b) + 0.5) * kAngleBinWidth);
  }
  for (double a : degrees) {
    if (!(a >= 0.0 && a <= 180.0)) throw Error(ErrorCode::kInvalidArgument, "angle outside [0, 180]");
    const auto bin = std::min(kAngleBins - 1, static_cast<std::size_t>(a / kAngleBinWidth));
    ++h.counts[bin];
  }
  return h;
}

std::vector<Histogram> angle_histogram(const WeightMatrix& w, const EmbeddingSet& samples,
                                       std::span<const NamedPairs> sets) {
  if (sets.empty()) throw Error(ErrorCode::kEmptyPairs, "no pair sets to histogram");
  const Matrix features = w.matrix() * samples.vectors();
  std::vector<Histogram> out;
  for (const NamedPairs& set : sets) {
    if (set.pairs.empty()) throw Error(ErrorCode::kEmptyPairs, "pair set '" + set.name + "' is empty");
    std::vector<double> angles;
    angles.reserve(set.pairs.size());
    for (const auto& p : set.pairs) {
      angles.push_back(feature_angle_degrees(features.col(static_cast<Eigen::Index>(p.a)),
                                             features.col(static_cast<Eigen::Index>(p.b))));
    }
    out.push_back(histogram_of_angles(set.name, angles));
  }
  return out;
}

namespace {

struct AttackOutcome {
  double ba = 0.0;
  std::vector<double> asr;
  std::optional<double> hidden_ba;
  std::vector<double> hidden_asr;
  std::optional<bool> flagged;
  std::optional<bool> hidden_flagged;
  std::optional<double> hidden_ks;
};

struct BackdoorTestSets {
  std::vector<std::vector<std::size_t>> test;  // per class id of the request
};

// `features` holds one column per sample of the experiment's embedding set.
std::vector<double> measure_asr(const Matrix& features, std::span<const BackdoorRequest> attacks,
                                std::span<const BackdoorTestSets> tests, double threshold) {
  std::vector<double> out;
  for (std::size_t i = 0; i < attacks.size(); ++i) {
    auto features_of = [&](const std::vector<std::size_t>& idx) {
      Matrix picked(features.rows(), static_cast<Eigen::Index>(idx.size()));
      for (std::size_t k = 0; k < idx.size(); ++k) {
        picked.col(static_cast<Eigen::Index>(k)) = features.col(static_cast<Eigen::Index>(idx[k]));
      }
      return picked;
    };
    if (attacks[i].kind == BackdoorKind::kShatteredClass) {
      out.push_back(asr_sc_features(features_of(tests[i].test[0]), threshold));
    } else {
      out.push_back(asr_mc_features(features_of(tests[i].test[0]), features_of(tests[i].test[1]), threshold));
    }
  }
  return out;
}

std::vector<Histogram> experiment_histograms(const ExperimentConfig& cfg, const WeightMatrix& w0,
                                             const WeightMatrix& backdoored, const EmbeddingSet& samples,
                                             const PairFold& fold) {
  std::vector<NamedPairs> benign{{"benign_matched", fold.matched}, {"benign_mismatched", fold.mismatched}};
  std::vector<NamedPairs> backdoor;
  for (std::size_t i = 0; i < cfg.attacks.size(); ++i) {
    const BackdoorRequest& r = cfg.attacks[i];
    NamedPairs set{"backdoor_" + plan_id(i, r), {}};
    if (r.kind == BackdoorKind::kShatteredClass) {
      const auto idx = samples.indices_of(r.class_ids[0]);
      for (std::size_t a = 0; a < idx.size(); ++a) {
        for (std::size_t b = a + 1; b < idx.size(); ++b) set.pairs.push_back({idx[a], idx[b]});
      }
    } else {
      for (std::size_t a : samples.indices_of(r.class_ids[0])) {
        for (std::size_t b : samples.indices_of(r.class_ids[1])) set.pairs.push_back({a, b});
      }
    }
    if (!set.pairs.empty()) backdoor.push_back(std::move(set));
  }

  std::vector<Histogram> out;
  auto append = [&](const WeightMatrix& w, std::span<const NamedPairs> sets, const std::string& suffix) {
    if (sets.empty()) return;
    for (Histogram& h : angle_histogram(w, samples, sets)) {
      h.name += suffix;
      out.push_back(std::move(h));
    }
  };
  append(w0, benign, "_clean");
  append(w0, backdoor, "_clean");
  if (!cfg.attacks.empty()) {
    append(backdoored, benign, "_backdoored");
    append(backdoored, backdoor, "_backdoored");
  }
  return out;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg, const WeightMatrix& w0,
                                const EmbeddingSet& samples) {
  if (cfg.folds < 2) throw Error(ErrorCode::kTooFewFolds, "an experiment needs at least 2 folds");
  if (cfg.repetitions < 1) throw Error(ErrorCode::kInvalidConfig, "repetitions must be positive");
  if (samples.space() != EmbeddingSpace::kPenultimate || samples.dim() != w0.m()) {
    throw Error(ErrorCode::kDimensionMismatch, "experiment samples must be penultimate vectors of size " +
                                                   std::to_string(w0.m()));
  }

  std::vector<ClassId> excluded = cfg.reserved_classes;
  for (const BackdoorRequest& r : cfg.attacks) {
    const std::size_t expected = r.kind == BackdoorKind::kShatteredClass ? 1 : 2;
    if (r.class_ids.size() != expected) {
      throw Error(ErrorCode::kInvalidConfig, std::string(backdoor_kind_name(r.kind)) + " attack needs " +
                                                 std::to_string(expected) + " class ids");
    }
    for (ClassId c : r.class_ids) {
      if (!samples.has_class(c)) throw Error(ErrorCode::kUnknownClass, "class " + std::to_string(c) + " not in embeddings");
      excluded.push_back(c);
    }
  }

  ExperimentReport report;
  report.folds = cfg.folds;
  report.repetitions = cfg.repetitions;
  report.seeds.master = cfg.seed;
  report.seeds.pairs = derive_seed(cfg.seed, {kPairs});

  const std::vector<PairFold> folds =
      make_pairs(samples, cfg.folds, cfg.pairs_per_fold, report.seeds.pairs, excluded);
  const Matrix clean_features = w0.matrix() * samples.vectors();
  const auto clean_distances = fold_distances(clean_features, folds);
  const CrossValidation clean = cross_validate(clean_distances);
  report.clean_ba = clean.ba;
  report.clean_fold_accuracies = clean.fold_accuracies;
  report.thresholds_per_fold = clean.thresholds;

  if (cfg.attacks.empty()) {
    report.backdoored_ba = report.clean_ba;
    if (cfg.histograms) report.histograms = experiment_histograms(cfg, w0, w0, samples, folds.front());
    return report;
  }

  const SingularSpectrum reference = singular_values(w0.matrix());
  std::vector<AttackOutcome> outcomes;
  std::optional<WeightMatrix> first_backdoored;

  for (std::size_t r = 0; r < cfg.repetitions; ++r) {
    for (std::size_t f = 0; f < cfg.folds; ++f) {
      const std::uint64_t attack_seed = derive_seed(cfg.seed, {kAttack, r, f});
      report.seeds.attacks.push_back(attack_seed);

      // Splits depend only on (master, r, f, class) so the same class gets the
      // same split whatever else is attacked alongside it.
      std::vector<std::size_t> attack_idx;
      std::vector<BackdoorTestSets> tests(cfg.attacks.size());
      std::vector<std::pair<ClassId, AttackTestSplit>> splits;
      auto split_for = [&](ClassId c) -> const AttackTestSplit& {
        for (const auto& [cls, s] : splits) {
          if (cls == c) return s;
        }
        splits.emplace_back(c, attack_test_split(samples.indices_of(c), derive_seed(attack_seed, {c})));
        const AttackTestSplit& s = splits.back().second;
        attack_idx.insert(attack_idx.end(), s.attack.begin(), s.attack.end());
        return s;
      };
      for (std::size_t i = 0; i < cfg.attacks.size(); ++i) {
        for (ClassId c : cfg.attacks[i].class_ids) tests[i].test.push_back(split_for(c).test);
      }
      const EmbeddingSet attack_samples = samples.subset(attack_idx);

      AttackOutcome outcome;
      const SequenceResult chain = install_sequence(w0, attack_samples, cfg.attacks);
      const Matrix features = chain.feature_transform * clean_features;
      const auto distances = fold_distances(features, folds);
      const double threshold = fold_threshold(distances, f).threshold;
      outcome.ba = accuracy_at(distances[f], threshold);
      outcome.asr = measure_asr(features, cfg.attacks, tests, threshold);
      if (cfg.detect) outcome.flagged = scan(chain.weights.matrix()).verdict == Verdict::kSuspectedSurgery;

      if (cfg.hide) {
        // Hide after every install, feeding the hidden layer into the next one.
        WeightMatrix hidden = w0;
        for (std::size_t i = 0; i < cfg.attacks.size(); ++i) {
          SequenceResult step =
              install_sequence(hidden, attack_samples, std::span(&cfg.attacks[i], 1));
          hidden = ws::hide(step.weights, step.plans.front(), reference,
                            derive_seed(attack_seed, {kHide, i}));
        }
        const Matrix hidden_features = hidden.matrix() * samples.vectors();
        const auto hidden_distances = fold_distances(hidden_features, folds);
        const double hidden_threshold = fold_threshold(hidden_distances, f).threshold;
        outcome.hidden_ba = accuracy_at(hidden_distances[f], hidden_threshold);
        outcome.hidden_asr = measure_asr(hidden_features, cfg.attacks, tests, hidden_threshold);
        if (cfg.detect) {
          const DetectionReport det = scan(hidden.matrix(), &reference);
          outcome.hidden_flagged = det.verdict == Verdict::kSuspectedSurgery;
          outcome.hidden_ks = det.ks_distance;
        }
      }
      if (!first_backdoored) first_backdoored = chain.weights;
      outcomes.push_back(std::move(outcome));
    }
  }

  for (const AttackOutcome& o : outcomes) report.backdoored_ba_per_attack.push_back(o.ba);
  report.backdoored_ba = mean(report.backdoored_ba_per_attack);

  for (std::size_t i = 0; i < cfg.attacks.size(); ++i) {
    BackdoorOutcome b;
    b.id = plan_id(i, cfg.attacks[i]);
    b.kind = cfg.attacks[i].kind;
    b.class_ids = cfg.attacks[i].class_ids;
    for (const AttackOutcome& o : outcomes) b.asr_per_attack.push_back(o.asr[i]);
    b.asr = mean(b.asr_per_attack);
    if (cfg.hide) {
      for (const AttackOutcome& o : outcomes) b.hidden_asr_per_attack.push_back(o.hidden_asr[i]);
      b.hidden_asr = mean(b.hidden_asr_per_attack);
    }
    report.per_backdoor_asr.push_back(std::move(b));
  }

  if (cfg.hide) {
    std::vector<double> hidden_ba;
    for (const AttackOutcome& o : outcomes) hidden_ba.push_back(*o.hidden_ba);
    report.hidden_ba = mean(hidden_ba);
  }
  if (cfg.detect) {
    DetectionSummary plain{outcomes.size(), 0, std::nullopt};
    for (const AttackOutcome& o : outcomes) plain.flagged += *o.flagged ? 1 : 0;
    report.detection_backdoored = plain;
    if (cfg.hide) {
      DetectionSummary hidden{outcomes.size(), 0, std::nullopt};
      std::vector<double> ks;
      for (const AttackOutcome& o : outcomes) {
        hidden.flagged += *o.hidden_flagged ? 1 : 0;
        if (o.hidden_ks) ks.push_back(*o.hidden_ks);
      }
      if (!ks.empty()) hidden.mean_ks_distance = mean(ks);
      report.detection_hidden = hidden;
    }
  }
  if (cfg.histograms) {
    report.histograms = experiment_histograms(cfg, w0, *first_backdoored, samples, folds.front());
  }
  return report;
}

}  // namespace ws
