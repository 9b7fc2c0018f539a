/* Copyright 2026 The roadcode Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace roadcode {

enum class ErrorCode {
  // codebook
  FileNotFound,
  SchemaViolation,
  DuplicateId,
  UnknownClassCode,
  // dataset
  ManifestParseError,
  DanglingReference,
  GroundTruthCodeUnknown,
  EmptyDataset,
  UnsupportedPixelFormat,
  // prompting
  TemplateError,
  MissingImageBytes,
  // vlm-client
  AuthError,
  RateLimitedExhausted,
  TransportError,
  ResponseUnparseable,
  BudgetExceeded,
  // assessment
  SegmentImageMismatch,
  MissingAttribute,
  InvalidConfiguration,
  LengthMismatch,
  // imagery
  QuotaExceeded,
  NotEquirectangular,
  DegenerateFov,
  // evaluation
  EmptyMatrix,
  SegmentMismatch,
  // cli
  ConfigError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnknownClassCode: return "UnknownClassCode";
    case ErrorCode::ManifestParseError: return "ManifestParseError";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::GroundTruthCodeUnknown: return "GroundTruthCodeUnknown";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::UnsupportedPixelFormat: return "UnsupportedPixelFormat";
    case ErrorCode::TemplateError: return "TemplateError";
    case ErrorCode::MissingImageBytes: return "MissingImageBytes";
    case ErrorCode::AuthError: return "AuthError";
    case ErrorCode::RateLimitedExhausted: return "RateLimitedExhausted";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::ResponseUnparseable: return "ResponseUnparseable";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::SegmentImageMismatch: return "SegmentImageMismatch";
    case ErrorCode::MissingAttribute: return "MissingAttribute";
    case ErrorCode::InvalidConfiguration: return "InvalidConfiguration";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::QuotaExceeded: return "QuotaExceeded";
    case ErrorCode::NotEquirectangular: return "NotEquirectangular";
    case ErrorCode::DegenerateFov: return "DegenerateFov";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::SegmentMismatch: return "SegmentMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code and
/// a message naming the offending entity (attribute, row, field, ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace roadcode
