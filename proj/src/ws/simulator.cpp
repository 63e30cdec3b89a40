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

#include "ws/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "ws/detect.hpp"
#include "ws/errors.hpp"
#include "ws/seeding.hpp"

namespace ws {

namespace {

enum Stream : std::uint64_t { kCentroids = 1, kSamples = 2, kWeights = 3 };

void invalid(const std::string& msg) { throw Error(ErrorCode::kInvalidConfig, msg); }

}  // namespace

void WorldConfig::validate() const {
  if (d < 2) invalid("d must be at least 2");
  if (m <= d) invalid("m must exceed d (got d=" + std::to_string(d) + ", m=" + std::to_string(m) + ")");
  if (num_classes < 2) invalid("num_classes must be at least 2");
  if (samples_per_class < 2) invalid("samples_per_class must be at least 2");
  if (!(kappa > 0.0) || !std::isfinite(kappa)) invalid("kappa must be positive");
}

Vector sample_uniform_sphere(Eigen::Index dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Vector v(dim);
  do {
    for (Eigen::Index i = 0; i < dim; ++i) v(i) = normal(rng);
  } while (v.norm() <= kNormEpsilon);
  return v.normalized();
}

Vector sample_vmf(const Vector& mean_direction, double kappa, std::mt19937_64& rng) {
  const Vector mu = normalize(mean_direction);
  const Eigen::Index p = mu.size();
  if (p < 2) throw Error(ErrorCode::kInvalidArgument, "vMF sampling needs dimension >= 2");
  if (!(kappa > 0.0)) throw Error(ErrorCode::kInvalidArgument, "vMF concentration must be positive");

  // Wood (1994). b is written in the cancellation-free form.
  const double pm1 = static_cast<double>(p - 1);
  const double b = pm1 / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + pm1 * pm1));
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + pm1 * std::log(1.0 - x0 * x0);

  std::gamma_distribution<double> gamma(pm1 / 2.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  double w = 0.0;
  for (;;) {
    const double g1 = gamma(rng);
    const double g2 = gamma(rng);
    const double z = g1 / (g1 + g2);
    w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
    const double u = uniform(rng);
    if (kappa * w + pm1 * std::log(1.0 - x0 * w) - c >= std::log(u)) break;
  }

  // Uniform direction in the tangent space at mu.
  Vector tangent;
  do {
    tangent = sample_uniform_sphere(p, rng);
    tangent -= mu.dot(tangent) * mu;
  } while (tangent.norm() <= 1e-8);
  tangent.normalize();

  return w * mu + std::sqrt(std::max(0.0, 1.0 - w * w)) * tangent;
}

World generate_world(const WorldConfig& cfg) {
  cfg.validate();

  std::mt19937_64 centroid_rng(derive_seed(cfg.seed, {kCentroids}));
  std::vector<Vector> centroids;
  centroids.reserve(cfg.num_classes);
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    centroids.push_back(sample_uniform_sphere(cfg.m, centroid_rng));
  }

  const std::size_t total = cfg.num_classes * cfg.samples_per_class;
  Matrix vectors(cfg.m, static_cast<Eigen::Index>(total));
  std::vector<ClassId> labels;
  labels.reserve(total);
  std::mt19937_64 sample_rng(derive_seed(cfg.seed, {kSamples}));
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    for (std::size_t s = 0; s < cfg.samples_per_class; ++s) {
      vectors.col(static_cast<Eigen::Index>(labels.size())) = sample_vmf(centroids[c], cfg.kappa, sample_rng);
      labels.push_back(static_cast<ClassId>(c));
    }
  }

  std::mt19937_64 weight_rng(derive_seed(cfg.seed, {kWeights}));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(cfg.m)));
  Matrix w(cfg.d, cfg.m);
  do {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = normal(weight_rng);
    }
  } while (numeric_rank(w) != cfg.d);

  return World{WeightMatrix(std::move(w)),
               EmbeddingSet(EmbeddingSpace::kPenultimate, std::move(vectors), std::move(labels)),
               std::move(centroids)};
}

std::vector<PairFold> make_pairs(const EmbeddingSet& samples, std::size_t folds,
                                 std::size_t pairs_per_fold, std::uint64_t seed,
                                 std::span<const ClassId> excluded) {
  if (folds == 0 || pairs_per_fold == 0) {
    throw Error(ErrorCode::kInvalidArgument, "folds and pairs_per_fold must be positive");
  }
  // Members of every usable class, in class order.
  std::vector<std::vector<std::size_t>> members;
  for (ClassId c : samples.classes()) {
    if (std::find(excluded.begin(), excluded.end(), c) != excluded.end()) continue;
    members.push_back(samples.indices_of(c));
  }

  const std::size_t wanted = folds * pairs_per_fold;
  std::size_t matched_capacity = 0;
  std::size_t population = 0;
  std::size_t same_class = 0;
  std::vector<std::size_t> pairable;  // classes with >= 2 members
  for (std::size_t k = 0; k < members.size(); ++k) {
    const std::size_t n = members[k].size();
    matched_capacity += n * (n - 1) / 2;
    population += n;
    same_class += n * n;
    if (n >= 2) pairable.push_back(k);
  }
  const std::size_t mismatched_capacity = (population * population - same_class) / 2;
  if (matched_capacity < wanted || mismatched_capacity < wanted) {
    throw Error(ErrorCode::kInsufficientData,
                "need " + std::to_string(wanted) + " pairs of each kind, can form " +
                    std::to_string(matched_capacity) + " matched and " +
                    std::to_string(mismatched_capacity) + " mismatched");
  }

  std::mt19937_64 rng(seed);
  auto ordered = [](std::size_t a, std::size_t b) { return a < b ? SamplePair{a, b} : SamplePair{b, a}; };

  auto draw_unique = [&](std::size_t capacity, auto&& enumerate_all, auto&& draw_one) {
    std::vector<SamplePair> out;
    out.reserve(wanted);
    if (wanted * 2 > capacity) {
      std::vector<SamplePair> all = enumerate_all();
      std::shuffle(all.begin(), all.end(), rng);
      out.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(wanted));
      return out;
    }
    std::set<SamplePair> used;
    while (out.size() < wanted) {
      const SamplePair p = draw_one();
      if (used.insert(p).second) out.push_back(p);
    }
    return out;
  };

  std::uniform_int_distribution<std::size_t> pick_pairable(0, pairable.size() - 1);
  const std::vector<SamplePair> matched = draw_unique(
      matched_capacity,
      [&] {
        std::vector<SamplePair> all;
        for (const auto& group : members) {
          for (std::size_t i = 0; i < group.size(); ++i) {
            for (std::size_t j = i + 1; j < group.size(); ++j) all.push_back(ordered(group[i], group[j]));
          }
        }
        return all;
      },
      [&] {
        const auto& group = members[pairable[pick_pairable(rng)]];
        std::uniform_int_distribution<std::size_t> pick(0, group.size() - 1);
        const std::size_t i = pick(rng);
        std::size_t j = pick(rng);
        while (j == i) j = pick(rng);
        return ordered(group[i], group[j]);
      });

  std::uniform_int_distribution<std::size_t> pick_class(0, members.size() - 1);
  const std::vector<SamplePair> mismatched = draw_unique(
      mismatched_capacity,
      [&] {
        std::vector<SamplePair> all;
        for (std::size_t x = 0; x < members.size(); ++x) {
          for (std::size_t y = x + 1; y < members.size(); ++y) {
            for (std::size_t a : members[x]) {
              for (std::size_t b : members[y]) all.push_back(ordered(a, b));
            }
          }
        }
        return all;
      },
      [&] {
        const std::size_t x = pick_class(rng);
        std::size_t y = pick_class(rng);
        while (y == x) y = pick_class(rng);
        std::uniform_int_distribution<std::size_t> pa(0, members[x].size() - 1);
        std::uniform_int_distribution<std::size_t> pb(0, members[y].size() - 1);
        return ordered(members[x][pa(rng)], members[y][pb(rng)]);
      });

  std::vector<PairFold> out(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    const auto first = static_cast<std::ptrdiff_t>(f * pairs_per_fold);
    const auto last = first + static_cast<std::ptrdiff_t>(pairs_per_fold);
    out[f].matched.assign(matched.begin() + first, matched.begin() + last);
    out[f].mismatched.assign(mismatched.begin() + first, mismatched.begin() + last);
  }
  return out;
}

AttackTestSplit attack_test_split(std::span<const std::size_t> class_samples, std::uint64_t seed) {
  const std::size_t n = class_samples.size();
  if (n < 2) throw Error(ErrorCode::kTooFewSamples, "an attack/test split needs at least 2 samples");
  std::vector<std::size_t> shuffled(class_samples.begin(), class_samples.end());
  std::mt19937_64 rng(seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const std::size_t test = (n + 9) / 10;
  AttackTestSplit split;
  split.test.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(test));
  split.attack.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(test), shuffled.end());
  return split;
}

}  // namespace ws
