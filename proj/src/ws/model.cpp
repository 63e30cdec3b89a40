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

#include "ws/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "ws/errors.hpp"

namespace ws {

WeightMatrix::WeightMatrix(Matrix matrix) : matrix_(std::move(matrix)) {
  if (matrix_.rows() < 1 || matrix_.cols() < 1) {
    throw Error(ErrorCode::kInvalidArgument, "weight matrix must be non-empty");
  }
  if (matrix_.rows() >= matrix_.cols()) {
    throw Error(ErrorCode::kInvalidArgument,
                "weight matrix must have fewer rows than columns, got " +
                    std::to_string(matrix_.rows()) + "x" + std::to_string(matrix_.cols()));
  }
  require_finite(matrix_, "weight matrix");
}

EmbeddingSet::EmbeddingSet(EmbeddingSpace space, Eigen::Index dim)
    : space_(space), vectors_(dim, 0) {
  if (dim < 1) throw Error(ErrorCode::kInvalidArgument, "embedding dimension must be positive");
}

EmbeddingSet::EmbeddingSet(EmbeddingSpace space, Matrix vectors, std::vector<ClassId> labels)
    : space_(space), vectors_(std::move(vectors)), labels_(std::move(labels)) {
  if (vectors_.rows() < 1) {
    throw Error(ErrorCode::kInvalidArgument, "embedding dimension must be positive");
  }
  if (static_cast<std::size_t>(vectors_.cols()) != labels_.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "label count does not match vector count");
  }
  require_finite(vectors_, "embeddings");
}

void EmbeddingSet::add(ClassId label, const Vector& v) {
  if (v.size() != dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "embedding has dimension " + std::to_string(v.size()) + ", expected " +
                    std::to_string(dim()));
  }
  require_finite(v, "embedding");
  vectors_.conservativeResize(Eigen::NoChange, vectors_.cols() + 1);
  vectors_.col(vectors_.cols() - 1) = v;
  labels_.push_back(label);
}

std::vector<ClassId> EmbeddingSet::classes() const {
  std::set<ClassId> unique(labels_.begin(), labels_.end());
  return {unique.begin(), unique.end()};
}

bool EmbeddingSet::has_class(ClassId c) const {
  return std::find(labels_.begin(), labels_.end(), c) != labels_.end();
}

std::vector<std::size_t> EmbeddingSet::indices_of(ClassId c) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == c) out.push_back(i);
  }
  return out;
}

EmbeddingSet EmbeddingSet::subset(std::span<const std::size_t> indices) const {
  Matrix vectors(dim(), static_cast<Eigen::Index>(indices.size()));
  std::vector<ClassId> labels;
  labels.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= size()) throw Error(ErrorCode::kInvalidArgument, "subset index out of range");
    vectors.col(static_cast<Eigen::Index>(k)) = vectors_.col(static_cast<Eigen::Index>(indices[k]));
    labels.push_back(labels_[indices[k]]);
  }
  return EmbeddingSet(space_, std::move(vectors), std::move(labels));
}

VerificationHead::VerificationHead(double t) : threshold(t) {
  if (!(t >= 0.0 && t <= 4.0)) {
    throw Error(ErrorCode::kInvalidArgument, "threshold must lie in [0, 4]");
  }
}

Vector forward(const Matrix& w, const Vector& y) {
  if (y.size() != w.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "input has dimension " + std::to_string(y.size()) + ", layer expects " +
                    std::to_string(w.cols()));
  }
  return w * y;
}

EmbeddingSet to_feature_space(const WeightMatrix& w, const EmbeddingSet& penultimate) {
  if (penultimate.dim() != w.m()) {
    throw Error(ErrorCode::kDimensionMismatch, "embeddings do not match the layer input size");
  }
  return EmbeddingSet(EmbeddingSpace::kFeature, w.matrix() * penultimate.vectors(),
                      penultimate.labels());
}

Vector centroid_direction(std::span<const Vector> samples) {
  if (samples.empty()) throw Error(ErrorCode::kEmptySamples, "centroid of an empty sample set");
  Vector sum = Vector::Zero(samples.front().size());
  for (const Vector& s : samples) {
    if (s.size() != sum.size()) throw Error(ErrorCode::kDimensionMismatch, "samples differ in dimension");
    sum += normalize(s);
  }
  return normalize(sum / static_cast<double>(samples.size()));
}

Vector centroid_direction(const Matrix& columns) {
  if (columns.cols() == 0) throw Error(ErrorCode::kEmptySamples, "centroid of an empty sample set");
  Vector sum = Vector::Zero(columns.rows());
  for (Eigen::Index i = 0; i < columns.cols(); ++i) sum += normalize(columns.col(i));
  return normalize(sum / static_cast<double>(columns.cols()));
}

double pair_distance(const Vector& f1, const Vector& f2) {
  if (f1.size() != f2.size()) throw Error(ErrorCode::kDimensionMismatch, "feature sizes differ");
  return (normalize(f1) - normalize(f2)).squaredNorm();
}

bool verify(const VerificationHead& head, const Vector& f1, const Vector& f2) {
  return pair_distance(f1, f2) <= head.threshold;
}

}  // namespace ws
