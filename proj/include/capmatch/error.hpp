/*
 * Copyright 2026 The capmatch Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace capmatch {

enum class ErrorCode {
  kInvalidArgument,
  kInvalidConfig,
  kZeroNormRow,
  kDetachedLoss,
  kDoubleBackward,
  kIoError,
  kInvariantViolation,
  kBadMagic,
  kVersionMismatch,
  kShapeMismatch,
  kNonFiniteValue,
  kSplitMisuse,
  kArchiveMismatch,
  kDimensionMismatch,
  kNoCaptions,
  kSequenceTooLong,
  kNonSquare,
  kNonPositiveTemperature,
  kEmptyCorpus,
  kInternal,
};

const char* error_code_name(ErrorCode code) noexcept;

// Every failure raised by the engine carries one of the codes above; the C
// API turns it back into a status value.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace capmatch
