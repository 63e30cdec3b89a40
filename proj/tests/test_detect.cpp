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

#include <cmath>
#include <random>
#include <vector>

#include "test_support.hpp"
#include "ws/detect.hpp"
#include "ws/errors.hpp"
#include "ws/simulator.hpp"
#include "ws/surgery.hpp"

using namespace ws;
using ws::testing::random_matrix;

namespace {

World small_world(std::uint64_t seed) {
  WorldConfig cfg;
  cfg.num_classes = 4;
  cfg.seed = seed;
  return generate_world(cfg);
}

EmbeddingSet class_samples(const World& world, ClassId c) {
  return world.embeddings.subset(world.embeddings.indices_of(c));
}

}  // namespace

TEST_CASE("numeric_rank examples") {
  Matrix w = Matrix::Zero(3, 4);
  w.diagonal() << 3.0, 2.0, 1.0;
  CHECK(numeric_rank(w) == 3);
  w(2, 2) = 1e-11;
  CHECK(numeric_rank(w) == 2);
  CHECK(numeric_rank(Matrix::Zero(3, 4)) == 0);
  w(2, 2) = 1e-9;
  CHECK(numeric_rank(w) == 3);
  CHECK(numeric_rank(w, 1e-8) == 2);
}

TEST_CASE("rank_from_spectrum") {
  CHECK(rank_from_spectrum(SingularSpectrum{{5.0, 1.0, 0.0}}) == 2);
  CHECK(rank_from_spectrum(SingularSpectrum{{0.0, 0.0}}) == 0);
  CHECK(rank_from_spectrum(SingularSpectrum{}) == 0);
}

TEST_CASE("ks_statistic") {
  const std::vector<double> a{1.0, 2.0, 3.0};
  CHECK(ks_statistic(a, a) == 0.0);
  const std::vector<double> far{10.0, 11.0};
  CHECK(ks_statistic(a, far) == 1.0);
  const std::vector<double> b{2.5};
  // F_a(2) = 2/3, F_b(2) = 0.
  CHECK(ks_statistic(a, b) == doctest::Approx(2.0 / 3.0));
  CHECK(ks_statistic(b, a) == ks_statistic(a, b));
  // Ties are compared after both samples step.
  const std::vector<double> tie{1.0, 2.0, 3.0, 3.0};
  CHECK(ks_statistic(a, tie) == doctest::Approx(1.0 / 6.0));
  const std::vector<double> empty;
  CHECK_THROWS_AS(ks_statistic(a, empty), Error);
}

TEST_CASE("scan of an all-zero layer reports rank 0 without a KS distance") {
  const SingularSpectrum reference{{2.0, 1.0}};
  const DetectionReport r = scan(Matrix::Zero(2, 3), &reference);
  CHECK(r.numeric_rank == 0);
  CHECK(r.verdict == Verdict::kSuspectedSurgery);
  CHECK_FALSE(r.ks_distance.has_value());
}

TEST_CASE("ks_statistic matches a brute-force evaluation") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> value(0, 6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(1 + trial % 7), b(1 + trial % 5);
    for (double& x : a) x = value(rng);
    for (double& x : b) x = value(rng);
    double expected = 0.0;
    for (int t = -1; t <= 7; ++t) {
      auto cdf = [&](const std::vector<double>& s) {
        return static_cast<double>(std::count_if(s.begin(), s.end(), [&](double x) { return x <= t; })) /
               static_cast<double>(s.size());
      };
      expected = std::max(expected, std::abs(cdf(a) - cdf(b)));
    }
    CHECK(ks_statistic(a, b) == doctest::Approx(expected));
  }
}

TEST_CASE("scan fields obey the invariants") {
  std::mt19937_64 rng(1);
  const Matrix w = random_matrix(8, 20, rng);
  const DetectionReport clean = scan(w);
  CHECK(clean.numeric_rank == 8);
  CHECK_FALSE(clean.rank_deficient);
  CHECK(clean.verdict == Verdict::kClean);
  CHECK_FALSE(clean.ks_distance.has_value());
  CHECK(clean.spectrum.size() == 8);
  CHECK(verdict_name(clean.verdict) == "clean");

  const SingularSpectrum self = singular_values(w);
  const DetectionReport against_self = scan(w, &self);
  REQUIRE(against_self.ks_distance.has_value());
  CHECK(*against_self.ks_distance == 0.0);

  Matrix deficient = w;
  deficient.row(7) = deficient.row(0) * 2.0;
  const DetectionReport flagged = scan(deficient, &self);
  CHECK(flagged.numeric_rank == 7);
  CHECK(flagged.rank_deficient);
  CHECK(flagged.verdict == Verdict::kSuspectedSurgery);
  CHECK(verdict_name(flagged.verdict) == "suspected_surgery");
  CHECK(*flagged.ks_distance >= 0.0);
  CHECK(*flagged.ks_distance <= 1.0);
}

TEST_CASE("the KS distance does not flip the verdict") {
  std::mt19937_64 rng(2);
  const Matrix w = random_matrix(8, 20, rng);
  const SingularSpectrum unrelated{{1e6, 1e6, 1e6}};
  const DetectionReport r = scan(w, &unrelated);
  CHECK(*r.ks_distance == 1.0);
  CHECK(r.verdict == Verdict::kClean);
}

TEST_CASE("no false positives on 100 seeded clean layers") {
  int flagged = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    std::mt19937_64 rng(seed);
    const Matrix w = random_matrix(64, 256, rng) / 16.0;
    if (scan(w).verdict != Verdict::kClean) ++flagged;
  }
  CHECK(flagged == 0);
}

TEST_CASE("every unhidden projection is flagged and every hidden one passes") {
  int unhidden_flagged = 0;
  int hidden_clean = 0;
  double worst_ks = 0.0;
  constexpr int kTrials = 100;
  for (int trial = 0; trial < kTrials; ++trial) {
    const World world = small_world(1000 + trial);
    const SingularSpectrum reference = singular_values(world.w0.matrix());
    REQUIRE(scan(world.w0.matrix()).verdict == Verdict::kClean);
    const SurgeryResult r = install_sc(world.w0, class_samples(world, trial % 4));
    if (scan(r.weights.matrix()).verdict == Verdict::kSuspectedSurgery) ++unhidden_flagged;
    const WeightMatrix hidden = hide(r.weights, r.plan, reference, trial);
    const DetectionReport report = scan(hidden.matrix(), &reference);
    if (report.verdict == Verdict::kClean) ++hidden_clean;
    worst_ks = std::max(worst_ks, *report.ks_distance);
  }
  CHECK(unhidden_flagged == kTrials);
  CHECK(hidden_clean == kTrials);
  CHECK(worst_ks <= 0.2);
}
