#include "teachloop/core/types.hpp"

#include <algorithm>
#include <cmath>

#include "teachloop/core/error.hpp"

namespace teachloop {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kNotSupported: return "not-supported";
    case ErrorCode::kUnderstockedStratum: return "understocked-stratum";
    case ErrorCode::kUnknownSkill: return "unknown-skill";
    case ErrorCode::kUnknownSubskill: return "unknown-subskill";
    case ErrorCode::kSubskillCapExceeded: return "subskill-cap-exceeded";
    case ErrorCode::kNegativeAllocation: return "negative-allocation";
    case ErrorCode::kActionCapExceeded: return "action-cap-exceeded";
    case ErrorCode::kAllocationCapExceeded: return "allocation-cap-exceeded";
    case ErrorCode::kStructuredParseFailure: return "structured-parse-failure";
    case ErrorCode::kProviderUnavailable: return "provider-unavailable";
    case ErrorCode::kTemplateMissing: return "template-missing";
    case ErrorCode::kPartitionViolation: return "partition-violation";
    case ErrorCode::kEngineDegraded: return "engine-degraded";
    case ErrorCode::kRenderFailure: return "render-failure";
    case ErrorCode::kTrainerUnavailable: return "trainer-unavailable";
    case ErrorCode::kDatasetMismatch: return "dataset-mismatch";
    case ErrorCode::kActionType: return "action-type";
    case ErrorCode::kReplayRequiresDeterministicBackends:
      return "replay-requires-deterministic-backends";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kProtocol: return "protocol";
  }
  return "unknown";
}

std::string_view to_string(DomainId id) {
  switch (id) {
    case DomainId::kMath: return "math";
    case DomainId::kVqa: return "vqa";
    case DomainId::kCode: return "code";
    case DomainId::kSimulated: return "simulated";
  }
  return "unknown";
}

std::string_view to_string(ComparisonMode mode) {
  switch (mode) {
    case ComparisonMode::kExactMatchNormalized: return "exact-match-normalized";
    case ComparisonMode::kBooleanString: return "boolean-string";
    case ComparisonMode::kTestExecutionStub: return "test-execution-stub";
    case ComparisonMode::kProficiencyThreshold: return "proficiency-threshold";
  }
  return "unknown";
}

DomainId parse_domain(std::string_view text) {
  for (auto id : {DomainId::kMath, DomainId::kVqa, DomainId::kCode, DomainId::kSimulated}) {
    if (to_string(id) == text) return id;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown task domain '" + std::string(text) + "'");
}

ComparisonMode parse_comparison_mode(std::string_view text) {
  for (auto mode : {ComparisonMode::kExactMatchNormalized, ComparisonMode::kBooleanString,
                    ComparisonMode::kTestExecutionStub,
                    ComparisonMode::kProficiencyThreshold}) {
    if (to_string(mode) == text) return mode;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown comparison mode '" + std::string(text) + "'");
}

TaskDomain TaskDomain::defaults_for(DomainId id) {
  switch (id) {
    case DomainId::kMath: return {id, ComparisonMode::kExactMatchNormalized};
    case DomainId::kVqa: return {id, ComparisonMode::kExactMatchNormalized};
    case DomainId::kCode: return {id, ComparisonMode::kTestExecutionStub};
    case DomainId::kSimulated: return {id, ComparisonMode::kProficiencyThreshold};
  }
  return {};
}

const TaskItem* Dataset::find(std::string_view item_id) const {
  auto it = std::find_if(items.begin(), items.end(),
                         [&](const TaskItem& item) { return item.item_id == item_id; });
  return it == items.end() ? nullptr : &*it;
}

int difficulty_bin(double difficulty) {
  return std::clamp(static_cast<int>(std::floor(difficulty)), 1, 5);
}

}  // namespace teachloop
