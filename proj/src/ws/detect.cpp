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

#include "ws/detect.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ws/errors.hpp"

namespace ws {

std::string_view verdict_name(Verdict v) noexcept {
  return v == Verdict::kClean ? "clean" : "suspected_surgery";
}

int rank_from_spectrum(const SingularSpectrum& spectrum, double tol_ratio) {
  const double top = spectrum.largest();
  if (top <= 0.0) return 0;
  return static_cast<int>(spectrum.nonzero(tol_ratio).size());
}

int numeric_rank(const Matrix& w, double tol_ratio) {
  return rank_from_spectrum(singular_values(w), tol_ratio);
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) {
    throw Error(ErrorCode::kEmptySamples, "KS statistic needs two non-empty samples");
  }
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());

  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  // Step both ECDFs past each distinct value before comparing, so ties
  // across samples do not inflate the statistic.
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
  }
  return d;
}

DetectionReport scan(const Matrix& w, const SingularSpectrum* reference, double tol_ratio) {
  DetectionReport report;
  report.spectrum = singular_values(w);
  report.numeric_rank = rank_from_spectrum(report.spectrum, tol_ratio);
  report.rank_deficient = report.numeric_rank < w.rows();
  report.verdict = report.rank_deficient ? Verdict::kSuspectedSurgery : Verdict::kClean;
  if (reference != nullptr) {
    const auto ours = report.spectrum.nonzero(tol_ratio);
    const auto theirs = reference->nonzero(tol_ratio);
    if (!ours.empty() && !theirs.empty()) report.ks_distance = ks_statistic(ours, theirs);
  }
  return report;
}

}  // namespace ws
