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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "test_support.hpp"
#include "ws/errors.hpp"
#include "ws/harness.hpp"

using namespace ws;

namespace {

bool throws_code(ErrorCode expected, auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code() == expected;
  }
  return false;
}

std::vector<LabeledDistance> labeled(std::initializer_list<double> matched, std::initializer_list<double> mismatched) {
  std::vector<LabeledDistance> out;
  for (double d : matched) out.push_back({d, true});
  for (double d : mismatched) out.push_back({d, false});
  return out;
}

const World& default_world() {
  static const World world = generate_world(WorldConfig{});
  return world;
}

EmbeddingSet class_samples(const World& world, ClassId c) {
  return world.embeddings.subset(world.embeddings.indices_of(c));
}

double mean_clean_threshold() {
  static const double t = [] {
    const auto folds = make_pairs(default_world().embeddings, 10, 300, 99);
    const CrossValidation cv = cross_validated_ba(default_world().w0, default_world().embeddings, folds);
    return std::accumulate(cv.thresholds.begin(), cv.thresholds.end(), 0.0) / 10.0;
  }();
  return t;
}

// Exhaustive oracle: every distinct distance, every midpoint and both sentinels.
double brute_force_best(const std::vector<LabeledDistance>& pairs) {
  std::vector<double> d;
  for (const auto& p : pairs) d.push_back(p.distance);
  std::sort(d.begin(), d.end());
  std::vector<double> candidates{d.front() - 1.0, d.back() + 1.0};
  for (std::size_t i = 0; i < d.size(); ++i) {
    candidates.push_back(d[i]);
    if (i + 1 < d.size()) candidates.push_back((d[i] + d[i + 1]) / 2.0);
  }
  double best = 0.0;
  for (double t : candidates) best = std::max(best, accuracy_at(pairs, t));
  return best;
}

}  // namespace

TEST_CASE("accuracy_at counts distances at the threshold as matched") {
  const auto pairs = labeled({0.5}, {0.5});
  CHECK(accuracy_at(pairs, 0.5) == 0.5);
  CHECK(accuracy_at(labeled({0.5}, {}), 0.5) == 1.0);
  CHECK(accuracy_at(labeled({}, {0.5}), 0.49) == 1.0);
}

TEST_CASE("pick_threshold examples") {
  SUBCASE("separable") {
    const ThresholdChoice c = pick_threshold(labeled({0.1, 0.2}, {0.5, 0.6}));
    CHECK(c.threshold == doctest::Approx(0.35));
    CHECK(c.accuracy == 1.0);
  }
  SUBCASE("all distances identical") {
    // Majority matched: only the above-max sentinel reaches the prior.
    const ThresholdChoice c = pick_threshold(labeled({0.7, 0.7}, {0.7}));
    CHECK(c.accuracy == doctest::Approx(2.0 / 3.0));
    CHECK(c.threshold > 0.7);
    // Balanced: both sentinels tie and the smaller one wins.
    const ThresholdChoice e = pick_threshold(labeled({0.7}, {0.7}));
    CHECK(e.accuracy == 0.5);
    CHECK(e.threshold < 0.7);
    const ThresholdChoice d = pick_threshold(labeled({0.7}, {0.7, 0.7}));
    CHECK(d.accuracy == doctest::Approx(2.0 / 3.0));
    CHECK(d.threshold < 0.7);
  }
  SUBCASE("inverted pair") {
    const ThresholdChoice c = pick_threshold(labeled({0.3}, {0.1}));
    CHECK(c.accuracy == 0.5);
    CHECK(c.threshold < 0.1);
  }
  SUBCASE("errors") {
    CHECK(throws_code(ErrorCode::kEmptyPairs, [] { pick_threshold(labeled({0.1}, {})); }));
    CHECK(throws_code(ErrorCode::kEmptyPairs, [] { pick_threshold(labeled({}, {0.1})); }));
    CHECK(throws_code(ErrorCode::kEmptyPairs, [] { pick_threshold(std::vector<LabeledDistance>{}); }));
  }
}

TEST_CASE("pick_threshold matches a brute-force optimum") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> size(1, 25);
  std::uniform_int_distribution<int> coarse(0, 12);
  std::uniform_real_distribution<double> fine(0.0, 4.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<LabeledDistance> pairs;
    const bool ties = trial % 2 == 0;
    const int nm = size(rng);
    const int nn = size(rng);
    for (int i = 0; i < nm + nn; ++i) {
      const double d = ties ? coarse(rng) / 3.0 : fine(rng);
      pairs.push_back({d, i < nm});
    }
    const ThresholdChoice c = pick_threshold(pairs);
    const double best = brute_force_best(pairs);
    CHECK(c.accuracy == doctest::Approx(best).epsilon(1e-15));
    CHECK(accuracy_at(pairs, c.threshold) == c.accuracy);
  }
}

TEST_CASE("pick_threshold breaks ties toward the smallest candidate") {
  // Thresholds 0.15 and 0.45 both reach 3/4.
  const ThresholdChoice c = pick_threshold(labeled({0.1, 0.5}, {0.2, 0.6}));
  CHECK(c.accuracy == 0.75);
  CHECK(c.threshold == doctest::Approx(0.15));
}

TEST_CASE("cross_validate") {
  SUBCASE("perfectly separable folds") {
    std::vector<std::vector<LabeledDistance>> folds(4, labeled({0.1, 0.3}, {1.2, 1.5}));
    folds[2] = labeled({0.2, 0.25}, {1.0, 1.9});
    const CrossValidation cv = cross_validate(folds);
    CHECK(cv.ba == 1.0);
    CHECK(cv.thresholds.size() == 4);
    CHECK(cv.fold_accuracies.size() == 4);
  }
  SUBCASE("identical folds give identical accuracies") {
    const std::vector<std::vector<LabeledDistance>> folds(5, labeled({0.1, 0.9, 0.4}, {0.3, 1.2, 1.1}));
    const CrossValidation cv = cross_validate(folds);
    for (double a : cv.fold_accuracies) CHECK(a == cv.fold_accuracies.front());
    for (double t : cv.thresholds) CHECK(t == cv.thresholds.front());
    CHECK(cv.ba == cv.fold_accuracies.front());
  }
  SUBCASE("held-out fold does not influence its own threshold") {
    std::vector<std::vector<LabeledDistance>> folds(3, labeled({0.1}, {1.0}));
    const double before = fold_threshold(folds, 0).threshold;
    folds[0] = labeled({5.0}, {0.0});
    CHECK(fold_threshold(folds, 0).threshold == before);
  }
  SUBCASE("too few folds") {
    const std::vector<std::vector<LabeledDistance>> one(1, labeled({0.1}, {1.0}));
    CHECK(throws_code(ErrorCode::kTooFewFolds, [&] { cross_validate(one); }));
  }
}

TEST_CASE("default world clean BA") {
  const World& w = default_world();
  const auto folds = make_pairs(w.embeddings, 10, 300, 1);
  const CrossValidation cv = cross_validated_ba(w.w0, w.embeddings, folds);
  CHECK(cv.ba >= 0.98);
  CHECK(cv.thresholds.size() == 10);
  for (double t : cv.thresholds) {
    CHECK(t >= 0.0);
    CHECK(t <= 4.0);
  }
}

TEST_CASE("asr_sc") {
  const World& w = default_world();
  const double threshold = mean_clean_threshold();
  SUBCASE("tight cone on a clean layer") {
    WorldConfig cfg;
    cfg.num_classes = 3;
    cfg.kappa = 1e4;
    const World tight = generate_world(cfg);
    CHECK(asr_sc(tight.w0, threshold, class_samples(tight, 0)) < 0.01);
  }
  SUBCASE("after install_sc") {
    const EmbeddingSet s = class_samples(w, 8);
    const AttackTestSplit split = attack_test_split(w.embeddings.indices_of(8), 3);
    const SurgeryResult r = install_sc(w.w0, w.embeddings.subset(split.attack));
    CHECK(asr_sc(r.weights, threshold, s) >= 0.95);
  }
  SUBCASE("two samples give 0 or 1") {
    const auto idx = w.embeddings.indices_of(8);
    const std::vector<std::size_t> two{idx[0], idx[1]};
    const double a = asr_sc(w.w0, threshold, w.embeddings.subset(two));
    CHECK((a == 0.0 || a == 1.0));
    const std::vector<std::size_t> one{idx[0]};
    CHECK(throws_code(ErrorCode::kTooFewSamples, [&] { asr_sc(w.w0, threshold, w.embeddings.subset(one)); }));
  }
  SUBCASE("scale invariance") {
    const EmbeddingSet s = class_samples(w, 9);
    const SurgeryResult r = install_sc(w.w0, s);
    const Matrix f = r.weights.matrix() * s.vectors();
    for (double scale : {1e-3, 0.5, 7.0, 1e4}) {
      CHECK(asr_sc_features(f * scale, threshold) == asr_sc_features(f, threshold));
    }
  }
}

TEST_CASE("asr_mc") {
  const World& w = default_world();
  const double threshold = mean_clean_threshold();
  SUBCASE("same-class control") {
    const EmbeddingSet s = class_samples(w, 14);
    CHECK(asr_mc(w.w0, threshold, s, s) >= 0.99);
  }
  SUBCASE("stretching beats plain projection") {
    const EmbeddingSet a = class_samples(w, 6);
    const EmbeddingSet b = class_samples(w, 7);
    CHECK(asr_mc(w.w0, threshold, a, b) == 0.0);
    double with = 0.0;
    double without = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const AttackTestSplit sa = attack_test_split(w.embeddings.indices_of(6), seed);
      const AttackTestSplit sb = attack_test_split(w.embeddings.indices_of(7), seed + 100);
      const EmbeddingSet ta = w.embeddings.subset(sa.test);
      const EmbeddingSet tb = w.embeddings.subset(sb.test);
      const EmbeddingSet aa = w.embeddings.subset(sa.attack);
      const EmbeddingSet ab = w.embeddings.subset(sb.attack);
      with += asr_mc(install_mc(w.w0, aa, ab).weights, threshold, ta, tb);
      without += asr_mc(install_mc(w.w0, aa, ab, MergeOptions{false}).weights, threshold, ta, tb);
    }
    CHECK(with / 10.0 >= 0.90);
    CHECK(without <= with);
  }
  SUBCASE("errors and scale invariance") {
    const EmbeddingSet s = class_samples(w, 14);
    const EmbeddingSet empty(EmbeddingSpace::kPenultimate, w.w0.m());
    CHECK(throws_code(ErrorCode::kEmptySamples, [&] { asr_mc(w.w0, threshold, s, empty); }));
    CHECK(throws_code(ErrorCode::kEmptySamples, [&] { asr_mc(w.w0, threshold, empty, s); }));
    const Matrix f1 = w.w0.matrix() * s.vectors();
    const Matrix f2 = w.w0.matrix() * class_samples(w, 15).vectors();
    for (double scale : {1e-3, 3.0}) {
      CHECK(asr_mc_features(f1 * scale, f2, threshold) == asr_mc_features(f1, f2, threshold));
    }
  }
}

TEST_CASE("angle histograms") {
  SUBCASE("fixed binning") {
    const std::vector<double> degrees{0.0, 1.99, 2.0, 90.0, 179.0, 180.0};
    const Histogram h = histogram_of_angles("x", degrees);
    CHECK(h.name == "x");
    REQUIRE(h.counts.size() == kAngleBins);
    REQUIRE(h.bin_centers.size() == kAngleBins);
    CHECK(h.bin_centers.front() == 1.0);
    CHECK(h.bin_centers.back() == 179.0);
    CHECK(h.counts[0] == 2);
    CHECK(h.counts[1] == 1);
    CHECK(h.counts[45] == 1);
    CHECK(h.counts[89] == 2);
    CHECK(std::accumulate(h.counts.begin(), h.counts.end(), std::size_t{0}) == degrees.size());
  }
  SUBCASE("identical vectors land in the first bin") {
    const Vector v = Vector::LinSpaced(5, 1.0, 2.0);
    CHECK(feature_angle_degrees(v, v) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(feature_angle_degrees(v, -v) == doctest::Approx(180.0));
    CHECK(feature_angle_degrees(v, 3.0 * v) < 2.0);
  }
  SUBCASE("random high-dimensional pairs concentrate near 90 degrees") {
    std::mt19937_64 rng(5);
    std::vector<double> degrees;
    for (int i = 0; i < 2000; ++i) {
      degrees.push_back(feature_angle_degrees(ws::testing::random_unit(512, rng), ws::testing::random_unit(512, rng)));
    }
    const Histogram h = histogram_of_angles("r", degrees);
    const std::size_t near = h.counts[42] + h.counts[43] + h.counts[44] + h.counts[45] + h.counts[46] + h.counts[47];
    CHECK(near >= 1900);
  }
  SUBCASE("named pair sets on a world") {
    const World& w = default_world();
    const auto folds = make_pairs(w.embeddings, 1, 100, 2);
    const std::vector<NamedPairs> sets{{"m", folds[0].matched}, {"n", folds[0].mismatched}};
    const auto hs = angle_histogram(w.w0, w.embeddings, sets);
    REQUIRE(hs.size() == 2);
    CHECK(hs[0].name == "m");
    CHECK(std::accumulate(hs[1].counts.begin(), hs[1].counts.end(), std::size_t{0}) == 100);
    const std::vector<NamedPairs> empty{{"e", {}}};
    CHECK(throws_code(ErrorCode::kEmptyPairs, [&] { angle_histogram(w.w0, w.embeddings, empty); }));
  }
}

TEST_CASE("run_experiment") {
  const World& w = default_world();
  ExperimentConfig cfg;
  cfg.repetitions = 1;
  cfg.seed = 3;

  SUBCASE("zero attacks") {
    const ExperimentReport r = run_experiment(cfg, w.w0, w.embeddings);
    CHECK(r.backdoored_ba == r.clean_ba);
    CHECK(r.per_backdoor_asr.empty());
    CHECK(r.thresholds_per_fold.size() == 10);
    CHECK(r.folds == 10);
    REQUIRE(r.histograms.size() == 2);
    CHECK(r.histograms[0].name == "benign_matched_clean");
    CHECK(r.histograms[1].name == "benign_mismatched_clean");
  }
  SUBCASE("SC scenario") {
    cfg.attacks = {{BackdoorKind::kShatteredClass, {5}, true}};
    cfg.detect = true;
    const ExperimentReport r = run_experiment(cfg, w.w0, w.embeddings);
    CHECK(r.clean_ba >= 0.98);
    CHECK(r.clean_ba - r.backdoored_ba <= 0.01);
    REQUIRE(r.per_backdoor_asr.size() == 1);
    CHECK(r.per_backdoor_asr[0].id == "0:sc:5");
    CHECK(r.per_backdoor_asr[0].asr >= 0.95);
    CHECK(r.per_backdoor_asr[0].asr_per_attack.size() == 10);
    CHECK(r.backdoored_ba_per_attack.size() == 10);
    CHECK(r.seeds.attacks.size() == 10);
    REQUIRE(r.detection_backdoored.has_value());
    CHECK(r.detection_backdoored->scanned == 10);
    CHECK(r.detection_backdoored->flagged == 10);
    CHECK_FALSE(r.detection_hidden.has_value());
    for (double v : r.backdoored_ba_per_attack) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    std::set<std::string> names;
    for (const Histogram& h : r.histograms) names.insert(h.name);
    CHECK(names.count("backdoor_0:sc:5_clean") == 1);
    CHECK(names.count("backdoor_0:sc:5_backdoored") == 1);
    CHECK(names.count("benign_matched_backdoored") == 1);
  }
  SUBCASE("hide pass") {
    cfg.attacks = {{BackdoorKind::kShatteredClass, {5}, true}};
    cfg.hide = true;
    cfg.detect = true;
    cfg.histograms = false;
    const ExperimentReport r = run_experiment(cfg, w.w0, w.embeddings);
    REQUIRE(r.hidden_ba.has_value());
    REQUIRE(r.per_backdoor_asr[0].hidden_asr.has_value());
    CHECK(std::abs(*r.per_backdoor_asr[0].hidden_asr - r.per_backdoor_asr[0].asr) <= 0.01);
    REQUIRE(r.detection_hidden.has_value());
    CHECK(r.detection_hidden->flagged == 0);
    CHECK(*r.detection_hidden->mean_ks_distance <= 0.2);
    CHECK(r.histograms.empty());
  }
  SUBCASE("bitwise reproducible per seed") {
    cfg.attacks = {{BackdoorKind::kMergedClasses, {6, 7}, true}};
    const ExperimentReport a = run_experiment(cfg, w.w0, w.embeddings);
    const ExperimentReport b = run_experiment(cfg, w.w0, w.embeddings);
    CHECK(a.backdoored_ba == b.backdoored_ba);
    CHECK(a.per_backdoor_asr[0].asr_per_attack == b.per_backdoor_asr[0].asr_per_attack);
    CHECK(a.thresholds_per_fold == b.thresholds_per_fold);
    CHECK(a.seeds.attacks == b.seeds.attacks);
    CHECK(a.per_backdoor_asr[0].id == "0:mc:6:7");
    cfg.seed = 4;
    const ExperimentReport c = run_experiment(cfg, w.w0, w.embeddings);
    CHECK(c.seeds.attacks != a.seeds.attacks);
  }
  SUBCASE("invalid configurations") {
    cfg.folds = 1;
    CHECK(throws_code(ErrorCode::kTooFewFolds, [&] { run_experiment(cfg, w.w0, w.embeddings); }));
    cfg.folds = 10;
    cfg.repetitions = 0;
    CHECK(throws_code(ErrorCode::kInvalidConfig, [&] { run_experiment(cfg, w.w0, w.embeddings); }));
    cfg.repetitions = 1;
    cfg.attacks = {{BackdoorKind::kMergedClasses, {6}, true}};
    CHECK(throws_code(ErrorCode::kInvalidConfig, [&] { run_experiment(cfg, w.w0, w.embeddings); }));
    cfg.attacks = {{BackdoorKind::kShatteredClass, {5000}, true}};
    CHECK(throws_code(ErrorCode::kUnknownClass, [&] { run_experiment(cfg, w.w0, w.embeddings); }));
  }
}
