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

#include <stdexcept>
#include <string>
#include <string_view>

namespace ws {

// Stable numbering: the C API exposes these values directly.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kZeroVector = 2,
  kParallelDirections = 3,
  kNotOrthogonal = 4,
  kEmptySamples = 5,
  kDimensionMismatch = 6,
  kTooFewSamples = 7,
  kMultipleClasses = 8,
  kIdenticalClasses = 9,
  kAntipodalClasses = 10,
  kNotRankDeficient = 11,
  kYNotInNullSpace = 12,
  kInvalidConfig = 13,
  kInsufficientData = 14,
  kEmptyPairs = 15,
  kTooFewFolds = 16,
  kParseError = 17,
  kIoError = 18,
  kUnknownClass = 19,
};

std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ws
