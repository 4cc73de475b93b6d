// Copyright 2026 The TADA Authors. All Rights Reserved.
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

namespace tada {

enum class ErrorKind {
  kMalformedHeader,
  kTruncatedPayload,
  kUnsupportedMaxval,
  kMustQuantize,
  kAlignment,
  kOutOfRange,
  kShapeMismatch,
  kDegenerateKernel,
  kEmptySelection,
  kTooFewSamples,
  kCapacity,
  kSolverFailure,
  kNotExact,
  kNonFinite,
  kSingleClass,
  kSpecMismatch,
  kRankDeficient,
  kConfig,
  kIo,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMalformedHeader: return "malformed-header";
    case ErrorKind::kTruncatedPayload: return "truncated-payload";
    case ErrorKind::kUnsupportedMaxval: return "unsupported-maxval";
    case ErrorKind::kMustQuantize: return "must-quantize-first";
    case ErrorKind::kAlignment: return "alignment";
    case ErrorKind::kOutOfRange: return "out-of-range";
    case ErrorKind::kShapeMismatch: return "shape-mismatch";
    case ErrorKind::kDegenerateKernel: return "degenerate-kernel";
    case ErrorKind::kEmptySelection: return "empty-selection";
    case ErrorKind::kTooFewSamples: return "too-few-samples";
    case ErrorKind::kCapacity: return "capacity";
    case ErrorKind::kSolverFailure: return "solver-failure";
    case ErrorKind::kNotExact: return "not-exact";
    case ErrorKind::kNonFinite: return "non-finite";
    case ErrorKind::kSingleClass: return "single-class";
    case ErrorKind::kSpecMismatch: return "spec-mismatch";
    case ErrorKind::kRankDeficient: return "rank-deficient";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

// Every failure raised by the library carries a kind so callers (and the
// CLI exit-code mapping) can dispatch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised when patch selection leaves nothing to train on.
class EmptySelectionError : public Error {
 public:
  EmptySelectionError(std::size_t considered, std::size_t rejected_std,
                      std::size_t rejected_prob)
      : Error(ErrorKind::kEmptySelection,
              "no patch survived selection (considered " +
                  std::to_string(considered) + ", rejected by std " +
                  std::to_string(rejected_std) + ", rejected by prob " +
                  std::to_string(rejected_prob) + ")"),
        considered_(considered),
        rejected_std_(rejected_std),
        rejected_prob_(rejected_prob) {}

  std::size_t considered() const noexcept { return considered_; }
  std::size_t rejected_std() const noexcept { return rejected_std_; }
  std::size_t rejected_prob() const noexcept { return rejected_prob_; }

 private:
  std::size_t considered_;
  std::size_t rejected_std_;
  std::size_t rejected_prob_;
};

}  // namespace tada
