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

#include "chanprune/error.hpp"

namespace chanprune {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
  case ErrorCode::kParseError: return "ParseError";
  case ErrorCode::kCycleDetected: return "CycleDetected";
  case ErrorCode::kUnknownLayerReference: return "UnknownLayerReference";
  case ErrorCode::kDuplicateLayer: return "DuplicateLayer";
  case ErrorCode::kShapeMismatch: return "ShapeMismatch";
  case ErrorCode::kUnsupportedKind: return "UnsupportedKind";
  case ErrorCode::kMissingTensor: return "MissingTensor";
  case ErrorCode::kTruncatedBlob: return "TruncatedBlob";
  case ErrorCode::kInconsistentWidth: return "InconsistentWidth";
  case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
  case ErrorCode::kSlotAlreadyPruned: return "SlotAlreadyPruned";
  case ErrorCode::kDivisionByZero: return "DivisionByZero";
  case ErrorCode::kNothingPrunable: return "NothingPrunable";
  case ErrorCode::kEmptyLayer: return "EmptyLayer";
  case ErrorCode::kEmptyDataset: return "EmptyDataset";
  case ErrorCode::kInvalidArgument: return "InvalidArgument";
  case ErrorCode::kIoError: return "IoError";
  case ErrorCode::kInternal: return "Internal";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string &detail)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + detail),
      code_(code), detail_(detail) {}

void fail(ErrorCode code, const std::string &detail) {
  throw Error(code, detail);
}

} // namespace chanprune
