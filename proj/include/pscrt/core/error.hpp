// Copyright 2026 The pscrt Authors.
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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pscrt {

enum class ErrorCode {
  // Input and configuration validation.
  MissingColumn,
  NonBinary,
  InconsistentClusterConstant,
  EmptyFile,
  InvalidData,
  InvalidConfig,
  IndexOutOfRange,
  NonPositiveWeight,
  InvalidCell,
  StratumUnavailable,
  ArmMissing,
  TooFewClusters,
  Io,
  // Estimation-time failures.
  SingularDesign,
  FoldDegenerate,
  ZeroDenominator,
  NonPositiveDenominator,
  TooManyFailedReplicates,
  InsufficientReplicates,
  MixedStrata,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonBinary: return "NonBinary";
    case ErrorCode::InconsistentClusterConstant: return "InconsistentClusterConstant";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::InvalidData: return "InvalidData";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::NonPositiveWeight: return "NonPositiveWeight";
    case ErrorCode::InvalidCell: return "InvalidCell";
    case ErrorCode::StratumUnavailable: return "StratumUnavailable";
    case ErrorCode::ArmMissing: return "ArmMissing";
    case ErrorCode::TooFewClusters: return "TooFewClusters";
    case ErrorCode::Io: return "Io";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::FoldDegenerate: return "FoldDegenerate";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::NonPositiveDenominator: return "NonPositiveDenominator";
    case ErrorCode::TooManyFailedReplicates: return "TooManyFailedReplicates";
    case ErrorCode::InsufficientReplicates: return "InsufficientReplicates";
    case ErrorCode::MixedStrata: return "MixedStrata";
  }
  return "Unknown";
}

// Validation errors are problems with the data or the configuration; the
// remaining codes are raised while estimating.
constexpr bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn:
    case ErrorCode::NonBinary:
    case ErrorCode::InconsistentClusterConstant:
    case ErrorCode::EmptyFile:
    case ErrorCode::InvalidData:
    case ErrorCode::InvalidConfig:
    case ErrorCode::IndexOutOfRange:
    case ErrorCode::NonPositiveWeight:
    case ErrorCode::InvalidCell:
    case ErrorCode::StratumUnavailable:
    case ErrorCode::ArmMissing:
    case ErrorCode::TooFewClusters:
    case ErrorCode::Io:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

#define PSCRT_REQUIRE(cond, code, msg)          \
  do {                                          \
    if (!(cond)) throw ::pscrt::Error((code), (msg)); \
  } while (0)

}  // namespace pscrt
