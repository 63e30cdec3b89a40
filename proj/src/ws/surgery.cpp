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

#include "ws/surgery.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ws/detect.hpp"
#include "ws/errors.hpp"

namespace ws {

namespace {

constexpr double kRankTolerance = 1e-10;
constexpr double kCentroidSeparation = 1e-6;
constexpr double kMaxStretch = 100.0;

ClassId single_class(const EmbeddingSet& samples, const WeightMatrix& w) {
  if (samples.space() != EmbeddingSpace::kPenultimate || samples.dim() != w.m()) {
    throw Error(ErrorCode::kDimensionMismatch, "backdoor samples must be penultimate vectors of size " +
                                                   std::to_string(w.m()));
  }
  if (samples.size() < 2) {
    throw Error(ErrorCode::kTooFewSamples, "a backdoor class needs at least 2 samples");
  }
  const auto classes = samples.classes();
  if (classes.size() != 1) {
    throw Error(ErrorCode::kMultipleClasses,
                "backdoor samples span " + std::to_string(classes.size()) + " classes");
  }
  return classes.front();
}

Vector feature_centroid(const WeightMatrix& w, const EmbeddingSet& samples) {
  return centroid_direction(Matrix(w.matrix() * samples.vectors()));
}

}  // namespace

std::string_view backdoor_kind_name(BackdoorKind kind) noexcept {
  return kind == BackdoorKind::kShatteredClass ? "sc" : "mc";
}

Matrix BackdoorPlan::feature_transform() const {
  if (stretch_direction && stretch_factor) {
    return projection_with_stretch(kill_direction, *stretch_direction, *stretch_factor);
  }
  return projection_matrix(kill_direction);
}

Vector penultimate_preimage(const Matrix& w, const Vector& feature_direction) {
  if (feature_direction.size() != w.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "direction does not match the layer output size");
  }
  require_finite(w, "layer");
  const Eigen::BDCSVD<Matrix> dec(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sigma = dec.singularValues();
  const double cutoff = kRankTolerance * (sigma.size() > 0 ? sigma(0) : 0.0);
  Vector y = Vector::Zero(w.cols());
  for (Eigen::Index k = 0; k < sigma.size() && sigma(k) > cutoff; ++k) {
    y += dec.matrixV().col(k) * (dec.matrixU().col(k).dot(feature_direction) / sigma(k));
  }
  return normalize(y);
}

SurgeryResult install_sc(const WeightMatrix& w, const EmbeddingSet& backdoor_samples) {
  const ClassId cls = single_class(backdoor_samples, w);
  const Vector centroid = feature_centroid(w, backdoor_samples);

  BackdoorPlan plan;
  plan.kind = BackdoorKind::kShatteredClass;
  plan.class_ids = {cls};
  plan.kill_direction = centroid;
  plan.penultimate_direction_y = penultimate_preimage(w.matrix(), centroid);

  WeightMatrix backdoored(projection_matrix(centroid) * w.matrix());
  return {std::move(backdoored), std::move(plan)};
}

SurgeryResult install_mc(const WeightMatrix& w, const EmbeddingSet& samples_1,
                         const EmbeddingSet& samples_2, MergeOptions options) {
  const ClassId c1 = single_class(samples_1, w);
  const ClassId c2 = single_class(samples_2, w);
  if (c1 == c2) {
    throw Error(ErrorCode::kIdenticalClasses, "cannot merge class " + std::to_string(c1) + " with itself");
  }
  const Vector v1 = feature_centroid(w, samples_1);
  const Vector v2 = feature_centroid(w, samples_2);
  const Vector diff = v1 - v2;
  const Vector sum = v1 + v2;
  if (diff.norm() <= kCentroidSeparation) {
    throw Error(ErrorCode::kIdenticalClasses, "class centroids coincide in feature space");
  }
  const Vector merged = sum / 2.0;
  if (sum.norm() <= kCentroidSeparation || 1.0 / merged.norm() > kMaxStretch) {
    throw Error(ErrorCode::kAntipodalClasses, "class centroids are (nearly) antipodal in feature space");
  }

  BackdoorPlan plan;
  plan.kind = BackdoorKind::kMergedClasses;
  plan.class_ids = {c1, c2};
  plan.kill_direction = normalize(diff);
  plan.stretch_direction = normalize(merged);
  plan.stretch_factor = options.stretch ? 1.0 / merged.norm() : 1.0;
  plan.penultimate_direction_y = penultimate_preimage(w.matrix(), plan.kill_direction);

  WeightMatrix backdoored(plan.feature_transform() * w.matrix());
  return {std::move(backdoored), std::move(plan)};
}

SequenceResult install_sequence(const WeightMatrix& w0, const EmbeddingSet& attack_samples,
                                std::span<const BackdoorRequest> requests) {
  SequenceResult result{w0, {}, Matrix::Identity(w0.d(), w0.d())};
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const BackdoorRequest& request = requests[i];
    try {
      auto samples_of = [&](ClassId c) {
        const auto idx = attack_samples.indices_of(c);
        if (idx.empty()) {
          throw Error(ErrorCode::kUnknownClass, "class " + std::to_string(c) + " has no attack samples");
        }
        return attack_samples.subset(idx);
      };
      SurgeryResult step = [&] {
        if (request.kind == BackdoorKind::kShatteredClass) {
          if (request.class_ids.size() != 1) {
            throw Error(ErrorCode::kInvalidArgument, "a shattered-class request names exactly one class");
          }
          return install_sc(result.weights, samples_of(request.class_ids[0]));
        }
        if (request.class_ids.size() != 2) {
          throw Error(ErrorCode::kInvalidArgument, "a merged-classes request names exactly two classes");
        }
        if (request.class_ids[0] == request.class_ids[1]) {
          throw Error(ErrorCode::kIdenticalClasses, "cannot merge a class with itself");
        }
        return install_mc(result.weights, samples_of(request.class_ids[0]),
                          samples_of(request.class_ids[1]), MergeOptions{request.stretch});
      }();
      result.weights = std::move(step.weights);
      result.feature_transform = step.plan.feature_transform() * result.feature_transform;
      result.plans.push_back(std::move(step.plan));
    } catch (const Error& e) {
      throw Error(e.code(), "request #" + std::to_string(i) + ": " + e.what());
    }
  }
  return result;
}

WeightMatrix hide(const WeightMatrix& w1, const BackdoorPlan& plan,
                  const SingularSpectrum& reference_spectrum, std::uint64_t seed) {
  const Eigen::Index d = w1.d();
  const Eigen::Index m = w1.m();
  if (plan.penultimate_direction_y.size() != m) {
    throw Error(ErrorCode::kDimensionMismatch, "plan y does not match the layer input size");
  }
  const SvdResult dec = svd(w1.matrix());
  const int rank = rank_from_spectrum(dec.spectrum, kRankTolerance);
  if (rank >= d) {
    throw Error(ErrorCode::kNotRankDeficient, "layer already has full rank " + std::to_string(rank));
  }
  if (rank < d - 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "layer has rank " + std::to_string(rank) + "; hide expects exactly one unhidden projection");
  }

  const Vector y = normalize(plan.penultimate_direction_y);
  const double scale = dec.spectrum.largest();
  const double leak = (w1.matrix() * y).norm();
  if (leak > 1e-8 * scale) {
    throw Error(ErrorCode::kYNotInNullSpace,
                "||W y|| = " + std::to_string(leak) + " exceeds 1e-8 * ||W||");
  }

  // Null space of w1 is spanned by V's columns d-1 .. m-1. Pick the one whose
  // component orthogonal to y is largest.
  Vector replacement;
  double best = -1.0;
  for (Eigen::Index j = d - 1; j < m; ++j) {
    Vector candidate = dec.v.col(j);
    candidate -= y.dot(candidate) * y;
    candidate -= y.dot(candidate) * y;
    const double norm = candidate.norm();
    if (norm > best) {
      best = norm;
      replacement = candidate / norm;
    }
  }

  std::vector<double> reference = reference_spectrum.nonzero(kRankTolerance);
  if (reference.empty()) reference = dec.spectrum.nonzero(kRankTolerance);
  const double ceiling = d >= 2 ? dec.spectrum.values[static_cast<std::size_t>(d - 2)]
                                : std::numeric_limits<double>::infinity();
  double sigma = kde_draw(reference, 1, seed).front();
  sigma = std::min(sigma, ceiling);

  const Eigen::Index kept = d - 1;
  Matrix hidden = dec.u.leftCols(kept) *
                  Eigen::Map<const Vector>(dec.spectrum.values.data(), kept).asDiagonal() *
                  dec.v.leftCols(kept).transpose();
  hidden += sigma * dec.u.col(d - 1) * replacement.transpose();
  return WeightMatrix(std::move(hidden));
}

}  // namespace ws
