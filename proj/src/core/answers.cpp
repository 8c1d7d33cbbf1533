#include "teachloop/core/answers.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <optional>

#include "teachloop/core/error.hpp"

namespace teachloop {
namespace {

std::optional<bool> parse_boolean(std::string_view text) {
  const std::string norm = normalize_answer(text);
  if (norm == "yes" || norm == "true" || norm == "1") return true;
  if (norm == "no" || norm == "false" || norm == "0") return false;
  return std::nullopt;
}

std::optional<double> parse_real(std::string_view text) {
  const std::string norm = normalize_answer(text);
  double value = 0.0;
  const char* end = norm.data() + norm.size();
  auto [ptr, ec] = std::from_chars(norm.data(), end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

}  // namespace

std::string normalize_answer(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

bool compare_answers(std::string_view predicted, std::string_view gold,
                     ComparisonMode mode) {
  switch (mode) {
    case ComparisonMode::kExactMatchNormalized:
      return normalize_answer(predicted) == normalize_answer(gold);
    case ComparisonMode::kBooleanString: {
      auto p = parse_boolean(predicted);
      auto g = parse_boolean(gold);
      return p && g && *p == *g;
    }
    case ComparisonMode::kTestExecutionStub:
      throw Error(ErrorCode::kNotSupported,
                  "test-execution scoring requires an external trainer/evaluator");
    case ComparisonMode::kProficiencyThreshold: {
      auto proficiency = parse_real(predicted);
      auto threshold = parse_real(gold);
      return proficiency && threshold && *proficiency > *threshold;
    }
  }
  return false;
}

std::string format_real(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

}  // namespace teachloop
