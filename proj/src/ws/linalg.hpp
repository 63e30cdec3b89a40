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
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace ws {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Norms at or below this are treated as zero.
inline constexpr double kNormEpsilon = 1e-12;
// Two unit directions with |<a,b>| >= 1 - kParallelEpsilon are treated as parallel.
inline constexpr double kParallelEpsilon = 1e-9;
// Kill and stretch directions must satisfy |<kill,stretch>| < kOrthogonalTolerance.
inline constexpr double kOrthogonalTolerance = 1e-9;

// Singular values, sorted non-increasing, all non-negative.
struct SingularSpectrum {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  double largest() const noexcept { return values.empty() ? 0.0 : values.front(); }
  // Values strictly above tol_ratio * largest().
  std::vector<double> nonzero(double tol_ratio) const;
};

// Full decomposition M = U * diag(spectrum) * V^T. U is rows x rows and V is
// cols x cols, so the trailing columns of V span the null space of M.
struct SvdResult {
  Matrix u;
  SingularSpectrum spectrum;
  Matrix v;
};

void require_finite(const Matrix& m, std::string_view what);
void require_finite(const Vector& v, std::string_view what);

Vector normalize(const Vector& v);

// Square matrix whose rows form an orthonormal basis with `first` as row 0.
// Remaining rows are completed by modified Gram-Schmidt over the standard
// basis, always taking the candidate with the largest residual.
Matrix orthonormal_basis_from(const Vector& first);

// As above, with row 1 equal to the component of `second` orthogonal to
// `first`, renormalized.
Matrix orthonormal_basis_from(const Vector& first, const Vector& second);

// Orthogonal projection killing direction x, computed as I - x x^T.
Matrix projection_matrix(const Vector& x);

// The same projection assembled as U^T * diag(0, 1, ..., 1) * U with
// U = orthonormal_basis_from(x). Slower; kept as an independent route.
Matrix projection_matrix_via_basis(const Vector& x);

// U^T * diag(0, factor, 1, ..., 1) * U with U = orthonormal_basis_from(kill, stretch).
// kill is annihilated, stretch is scaled by factor, and everything orthogonal
// to both is left untouched. factor must lie in [1, 100].
Matrix projection_with_stretch(const Vector& kill, const Vector& stretch, double factor);

SvdResult svd(const Matrix& m);

// Singular values only.
SingularSpectrum singular_values(const Matrix& m);

// Silverman's rule-of-thumb bandwidth 1.06 * sd * n^(-1/5). A degenerate
// sample (sd == 0) falls back to 0.1 * |mean|, or 0.1 when the mean is 0.
double silverman_bandwidth(std::span<const double> samples);

// Draws from a Gaussian KDE over positive samples, reflected at zero so every
// draw is strictly positive.
std::vector<double> kde_draw(std::span<const double> samples, std::size_t count,
                             std::uint64_t seed);

}  // namespace ws
