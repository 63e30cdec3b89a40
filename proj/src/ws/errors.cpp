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

#include "ws/errors.hpp"

namespace ws {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kParallelDirections: return "ParallelDirections";
    case ErrorCode::kNotOrthogonal: return "NotOrthogonal";
    case ErrorCode::kEmptySamples: return "EmptySamples";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kMultipleClasses: return "MultipleClasses";
    case ErrorCode::kIdenticalClasses: return "IdenticalClasses";
    case ErrorCode::kAntipodalClasses: return "AntipodalClasses";
    case ErrorCode::kNotRankDeficient: return "NotRankDeficient";
    case ErrorCode::kYNotInNullSpace: return "YNotInNullSpace";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kInsufficientData: return "InsufficientData";
    case ErrorCode::kEmptyPairs: return "EmptyPairs";
    case ErrorCode::kTooFewFolds: return "TooFewFolds";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kUnknownClass: return "UnknownClass";
  }
  return "Unknown";
}

}  // namespace ws
