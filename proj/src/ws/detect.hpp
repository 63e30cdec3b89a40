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

#include <optional>
#include <span>
#include <string_view>

#include "ws/linalg.hpp"

namespace ws {

inline constexpr double kDefaultRankTolerance = 1e-10;

enum class Verdict { kClean, kSuspectedSurgery };

std::string_view verdict_name(Verdict v) noexcept;

struct DetectionReport {
  int numeric_rank = 0;
  bool rank_deficient = false;
  SingularSpectrum spectrum;
  std::optional<double> ks_distance;
  Verdict verdict = Verdict::kClean;
};

// Number of singular values strictly above tol_ratio * sigma_1.
int rank_from_spectrum(const SingularSpectrum& spectrum, double tol_ratio = kDefaultRankTolerance);
int numeric_rank(const Matrix& w, double tol_ratio = kDefaultRankTolerance);

// Two-sample Kolmogorov-Smirnov statistic sup_x |F_a(x) - F_b(x)|.
double ks_statistic(std::span<const double> a, std::span<const double> b);

// Rank-based verdict. A reference spectrum only adds the KS distance between
// the nonzero parts of both spectra; it never changes the verdict.
DetectionReport scan(const Matrix& w, const SingularSpectrum* reference = nullptr,
                     double tol_ratio = kDefaultRankTolerance);

}  // namespace ws
