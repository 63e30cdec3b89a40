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
#include <span>
#include <vector>

#include "ws/linalg.hpp"

namespace ws {

using ClassId = std::uint32_t;

// Last linear layer of the backbone: d feature outputs from m penultimate
// units, with d < m.
class WeightMatrix {
 public:
  explicit WeightMatrix(Matrix matrix);

  Eigen::Index d() const noexcept { return matrix_.rows(); }
  Eigen::Index m() const noexcept { return matrix_.cols(); }
  const Matrix& matrix() const noexcept { return matrix_; }

 private:
  Matrix matrix_;
};

enum class EmbeddingSpace : std::uint8_t { kPenultimate = 0, kFeature = 1 };

// Labeled vectors stored column-wise: column i belongs to labels()[i].
class EmbeddingSet {
 public:
  EmbeddingSet(EmbeddingSpace space, Eigen::Index dim);
  EmbeddingSet(EmbeddingSpace space, Matrix vectors, std::vector<ClassId> labels);

  void add(ClassId label, const Vector& v);

  EmbeddingSpace space() const noexcept { return space_; }
  Eigen::Index dim() const noexcept { return vectors_.rows(); }
  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }

  const Matrix& vectors() const noexcept { return vectors_; }
  const std::vector<ClassId>& labels() const noexcept { return labels_; }
  Vector vector(std::size_t i) const { return vectors_.col(static_cast<Eigen::Index>(i)); }

  // Distinct class ids in ascending order.
  std::vector<ClassId> classes() const;
  bool has_class(ClassId c) const;
  // Record indices of class c, in storage order.
  std::vector<std::size_t> indices_of(ClassId c) const;
  EmbeddingSet subset(std::span<const std::size_t> indices) const;

 private:
  EmbeddingSpace space_;
  Matrix vectors_;
  std::vector<ClassId> labels_;
};

struct VerificationHead {
  // Squared distance between normalized features, in [0, 4].
  double threshold = 1.0;

  explicit VerificationHead(double t);
};

Vector forward(const Matrix& w, const Vector& y);
inline Vector forward(const WeightMatrix& w, const Vector& y) { return forward(w.matrix(), y); }

// Maps every column of a penultimate set through w.
EmbeddingSet to_feature_space(const WeightMatrix& w, const EmbeddingSet& penultimate);

// normalize(mean(normalize(s_i))).
Vector centroid_direction(std::span<const Vector> samples);
Vector centroid_direction(const Matrix& columns);

// ||f1/||f1|| - f2/||f2||||^2 = 2 (1 - cos(f1, f2)).
double pair_distance(const Vector& f1, const Vector& f2);

// Matched iff pair_distance <= threshold.
bool verify(const VerificationHead& head, const Vector& f1, const Vector& f2);

}  // namespace ws
