#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace teachloop {

enum class ErrorCode {
  kInvalidArgument,
  kNotSupported,
  kUnderstockedStratum,
  kUnknownSkill,
  kUnknownSubskill,
  kSubskillCapExceeded,
  kNegativeAllocation,
  kActionCapExceeded,
  kAllocationCapExceeded,
  kStructuredParseFailure,
  kProviderUnavailable,
  kTemplateMissing,
  kPartitionViolation,
  kEngineDegraded,
  kRenderFailure,
  kTrainerUnavailable,
  kDatasetMismatch,
  kActionType,
  kReplayRequiresDeterministicBackends,
  kConfig,
  kIo,
  kProtocol,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the library carries a stable code so callers
/// (and the trajectory log) can react without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised when a provider keeps returning output that fails its schema.
class StructuredParseFailure : public Error {
 public:
  StructuredParseFailure(const std::string& message, std::string last_raw,
                         bool semantic = false)
      : Error(ErrorCode::kStructuredParseFailure, message),
        last_raw_(std::move(last_raw)),
        semantic_(semantic) {}

  const std::string& last_raw_text() const noexcept { return last_raw_; }
  /// True when the last reply parsed and matched its schema but failed the
  /// request's own semantic check.
  bool semantic() const noexcept { return semantic_; }

 private:
  std::string last_raw_;
  bool semantic_;
};

}  // namespace teachloop
