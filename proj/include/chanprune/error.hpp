// Copyright 2026 The chanprune Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CHANPRUNE_ERROR_HPP
#define CHANPRUNE_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace chanprune {

enum class ErrorCode {
  kParseError,
  kCycleDetected,
  kUnknownLayerReference,
  kDuplicateLayer,
  kShapeMismatch,
  kUnsupportedKind,
  kMissingTensor,
  kTruncatedBlob,
  kInconsistentWidth,
  kNonFiniteLoss,
  kSlotAlreadyPruned,
  kDivisionByZero,
  kNothingPrunable,
  kEmptyLayer,
  kEmptyDataset,
  kInvalidArgument,
  kIoError,
  kInternal,
};

std::string_view error_code_name(ErrorCode code);

/// Every failure surfaced by the library. The message always starts with the
/// code name so that CLI output can be matched verbatim.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &detail);

  ErrorCode code() const noexcept { return code_; }
  const std::string &detail() const noexcept { return detail_; }

  /// User/input errors map to exit code 1, internal invariants to 2.
  bool is_internal() const noexcept {
    return code_ == ErrorCode::kInternal || code_ == ErrorCode::kDivisionByZero;
  }

private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] void fail(ErrorCode code, const std::string &detail);

} // namespace chanprune

#endif
