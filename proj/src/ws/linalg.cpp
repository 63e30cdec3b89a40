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

#include "ws/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "ws/errors.hpp"

namespace ws {

namespace {

// Rows of `basis` [0, filled) are orthonormal. Appends the best remaining
// standard-basis candidate until the basis is complete.
void complete_basis(Matrix& basis, Eigen::Index filled) {
  const Eigen::Index n = basis.cols();
  // residuals.col(j) = e_j minus its projection on the rows accepted so far;
  // sq_norms tracks their squared norms for candidate selection.
  Matrix residuals = Matrix::Identity(n, n);
  for (Eigen::Index k = 0; k < filled; ++k) {
    const Vector q = basis.row(k).transpose();
    residuals.noalias() -= q * (q.transpose() * residuals);
  }
  Vector sq_norms = residuals.colwise().squaredNorm().transpose();
  std::vector<bool> used(static_cast<std::size_t>(n), false);

  for (Eigen::Index k = filled; k < n; ++k) {
    Eigen::Index best = -1;
    double best_norm = -1.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      if (sq_norms(j) > best_norm) {
        best_norm = sq_norms(j);
        best = j;
      }
    }
    used[static_cast<std::size_t>(best)] = true;

    // Second Gram-Schmidt pass against every accepted row.
    Vector candidate = residuals.col(best);
    candidate.noalias() -= basis.topRows(k).transpose() * (basis.topRows(k) * candidate);
    candidate /= candidate.norm();
    basis.row(k) = candidate.transpose();

    const Vector coeffs = residuals.transpose() * candidate;
    residuals.noalias() -= candidate * coeffs.transpose();
    sq_norms -= coeffs.cwiseAbs2();
  }
}

Vector unit_or_throw(const Vector& v, std::string_view what) {
  require_finite(v, what);
  const double norm = v.norm();
  if (norm <= kNormEpsilon) {
    throw Error(ErrorCode::kZeroVector, std::string(what) + " has norm " + std::to_string(norm));
  }
  return v / norm;
}

}  // namespace

std::vector<double> SingularSpectrum::nonzero(double tol_ratio) const {
  std::vector<double> out;
  const double cutoff = tol_ratio * largest();
  for (double s : values) {
    if (s > cutoff) out.push_back(s);
  }
  return out;
}

void require_finite(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + " contains non-finite entries");
  }
}

void require_finite(const Vector& v, std::string_view what) {
  if (!v.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + " contains non-finite entries");
  }
}

Vector normalize(const Vector& v) { return unit_or_throw(v, "vector"); }

Matrix orthonormal_basis_from(const Vector& first) {
  const Vector q0 = unit_or_throw(first, "first direction");
  const Eigen::Index n = q0.size();
  Matrix basis = Matrix::Zero(n, n);
  basis.row(0) = q0.transpose();
  complete_basis(basis, 1);
  return basis;
}

Matrix orthonormal_basis_from(const Vector& first, const Vector& second) {
  const Vector q0 = unit_or_throw(first, "first direction");
  const Vector s = unit_or_throw(second, "second direction");
  if (s.size() != q0.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "basis directions differ in dimension");
  }
  const Eigen::Index n = q0.size();
  if (n < 2 || std::abs(q0.dot(s)) >= 1.0 - kParallelEpsilon) {
    throw Error(ErrorCode::kParallelDirections, "second direction is (anti)parallel to the first");
  }
  Vector q1 = s - q0.dot(s) * q0;
  q1 -= q0.dot(q1) * q0;
  q1.normalize();

  Matrix basis = Matrix::Zero(n, n);
  basis.row(0) = q0.transpose();
  basis.row(1) = q1.transpose();
  complete_basis(basis, 2);
  return basis;
}

Matrix projection_matrix(const Vector& x) {
  const Vector u = unit_or_throw(x, "projection direction");
  return Matrix::Identity(u.size(), u.size()) - u * u.transpose();
}

Matrix projection_matrix_via_basis(const Vector& x) {
  const Matrix basis = orthonormal_basis_from(x);
  Vector scale = Vector::Ones(basis.rows());
  scale(0) = 0.0;
  return basis.transpose() * scale.asDiagonal() * basis;
}

Matrix projection_with_stretch(const Vector& kill, const Vector& stretch, double factor) {
  const Vector k = unit_or_throw(kill, "kill direction");
  const Vector s = unit_or_throw(stretch, "stretch direction");
  if (k.size() != s.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "kill and stretch directions differ in dimension");
  }
  if (!std::isfinite(factor) || factor < 1.0 || factor > 100.0) {
    throw Error(ErrorCode::kInvalidArgument,
                "stretch factor " + std::to_string(factor) + " outside [1, 100]");
  }
  const double overlap = std::abs(k.dot(s));
  if (overlap >= 1.0 - kParallelEpsilon) {
    throw Error(ErrorCode::kParallelDirections, "stretch direction is (anti)parallel to kill direction");
  }
  if (overlap >= kOrthogonalTolerance) {
    throw Error(ErrorCode::kNotOrthogonal,
                "kill and stretch directions overlap by " + std::to_string(overlap));
  }
  const Matrix basis = orthonormal_basis_from(k, s);
  Vector scale = Vector::Ones(basis.rows());
  scale(0) = 0.0;
  scale(1) = factor;
  return basis.transpose() * scale.asDiagonal() * basis;
}

SvdResult svd(const Matrix& m) {
  require_finite(m, "matrix");
  Eigen::BDCSVD<Matrix> decomposition(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  SvdResult result;
  result.u = decomposition.matrixU();
  result.v = decomposition.matrixV();
  const Vector& sigma = decomposition.singularValues();
  result.spectrum.values.assign(sigma.data(), sigma.data() + sigma.size());
  return result;
}

SingularSpectrum singular_values(const Matrix& m) {
  require_finite(m, "matrix");
  Eigen::BDCSVD<Matrix> decomposition(m);
  const Vector& sigma = decomposition.singularValues();
  return SingularSpectrum{std::vector<double>(sigma.data(), sigma.data() + sigma.size())};
}

double silverman_bandwidth(std::span<const double> samples) {
  if (samples.empty()) {
    throw Error(ErrorCode::kEmptySamples, "bandwidth needs at least one sample");
  }
  const double n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double sd = 0.0;
  if (samples.size() > 1) {
    double ss = 0.0;
    for (double s : samples) ss += (s - mean) * (s - mean);
    sd = std::sqrt(ss / (n - 1.0));
  }
  if (sd > 0.0) return 1.06 * sd * std::pow(n, -0.2);
  return mean != 0.0 ? 0.1 * std::abs(mean) : 0.1;
}

std::vector<double> kde_draw(std::span<const double> samples, std::size_t count,
                             std::uint64_t seed) {
  if (samples.empty()) {
    throw Error(ErrorCode::kEmptySamples, "KDE needs at least one sample");
  }
  for (double s : samples) {
    if (!std::isfinite(s) || s <= 0.0) {
      throw Error(ErrorCode::kInvalidArgument, "KDE samples must be positive and finite");
    }
  }
  const double bandwidth = silverman_bandwidth(samples);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  std::normal_distribution<double> noise(0.0, bandwidth);

  std::vector<double> draws;
  draws.reserve(count);
  while (draws.size() < count) {
    const double x = std::abs(samples[pick(rng)] + noise(rng));
    if (x > 0.0) draws.push_back(x);
  }
  return draws;
}

}  // namespace ws
