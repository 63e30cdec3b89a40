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

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ws/linalg.hpp"
#include "ws/model.hpp"

namespace ws {

enum class BackdoorKind { kShatteredClass, kMergedClasses };

std::string_view backdoor_kind_name(BackdoorKind kind) noexcept;

// Record of one surgery. Merged-classes plans always carry the stretch
// fields; a factor of exactly 1 marks a projection installed without
// stretching.
struct BackdoorPlan {
  BackdoorKind kind = BackdoorKind::kShatteredClass;
  std::vector<ClassId> class_ids;
  Vector kill_direction;                   // unit, feature space
  std::optional<Vector> stretch_direction; // unit, orthogonal to kill_direction
  std::optional<double> stretch_factor;
  // Unit penultimate direction the pre-surgery layer maps onto the kill
  // direction. It lies in the null space of the backdoored layer.
  Vector penultimate_direction_y;

  // Feature-space transform the plan left-multiplies onto the layer.
  Matrix feature_transform() const;
};

struct SurgeryResult {
  WeightMatrix weights;
  BackdoorPlan plan;
};

SurgeryResult install_sc(const WeightMatrix& w, const EmbeddingSet& backdoor_samples);

struct MergeOptions {
  bool stretch = true;
};

SurgeryResult install_mc(const WeightMatrix& w, const EmbeddingSet& samples_1,
                         const EmbeddingSet& samples_2, MergeOptions options = {});

struct BackdoorRequest {
  BackdoorKind kind = BackdoorKind::kShatteredClass;
  std::vector<ClassId> class_ids;
  bool stretch = true;
};

struct SequenceResult {
  WeightMatrix weights;
  std::vector<BackdoorPlan> plans;
  // Product of the plans' feature transforms, last plan leftmost, so that
  // weights == feature_transform * w0 up to rounding.
  Matrix feature_transform;
};

// Applies the requests left to right; each surgery sees the layer produced by
// the previous one. Samples for every request are taken from attack_samples.
SequenceResult install_sequence(const WeightMatrix& w0, const EmbeddingSet& attack_samples,
                                std::span<const BackdoorRequest> requests);

// Restores full rank after a single unhidden projection: the zeroed singular
// direction is replaced by a null-space direction orthogonal to the plan's y,
// with a singular value drawn from a KDE over reference_spectrum.
WeightMatrix hide(const WeightMatrix& w1, const BackdoorPlan& plan,
                  const SingularSpectrum& reference_spectrum, std::uint64_t seed);

// Unit y in row(w) with w * y parallel to feature_direction, via the
// pseudo-inverse.
Vector penultimate_preimage(const Matrix& w, const Vector& feature_direction);

}  // namespace ws
